"""Width of the homoclinic zone near Bogdanov-Takens points of planar maps."""

__version__ = "0.1.0"

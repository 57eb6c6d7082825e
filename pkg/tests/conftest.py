import gmpy2
import pytest

from btzone.numerics import PrecisionContext


@pytest.fixture
def ctx60():
    ctx = PrecisionContext(60)
    with ctx.local():
        yield ctx


@pytest.fixture
def ctx100():
    ctx = PrecisionContext(100)
    with ctx.local():
        yield ctx


def slope(xs, ys):
    """Least-squares slope in plain floats."""
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    return sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sxx

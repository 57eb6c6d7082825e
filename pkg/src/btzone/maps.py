"""The three quadratic map families near a Bogdanov-Takens fixed point.

quadratic  (x, y) -> (x + y, y + x^2 - mu + gamma*x*y + nu*y)        main mu, slave nu
bogdanov   (x, y) -> (x + y + g, y + g),  g = x^2 + gt*x*y + a*x + b*y   main a,  slave b
henon      (u, v) -> (v, at*v^2 - bt*u + 1)                          main at, slave bt

All functions expect to run inside ``PrecisionContext.local()``.
"""
from __future__ import annotations

from dataclasses import dataclass

import gmpy2
from gmpy2 import mpfr

from .numerics import DomainError, NumericsError

KINDS = ("quadratic", "bogdanov", "henon")


class DegenerateSaddleError(NumericsError):
    pass


@dataclass(frozen=True)
class MapFamily:
    """A family plus its shape parameter (gamma, gamma-tilde; unused for henon).

    ``shape`` is kept as a decimal string so a family can be shared between
    jobs running at different precisions.
    """

    kind: str
    shape: str = "0"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown family {self.kind!r}; expected one of {KINDS}")
        if self.kind == "henon" and mpfr(self.shape) != 0:
            raise ValueError("the henon family has no shape parameter")

    @property
    def gamma(self) -> mpfr:
        return mpfr(self.shape)

    @property
    def main_name(self) -> str:
        return {"quadratic": "mu", "bogdanov": "a", "henon": "at"}[self.kind]

    @property
    def slave_name(self) -> str:
        return {"quadratic": "nu", "bogdanov": "b", "henon": "bt"}[self.kind]

    def check_main(self, main) -> None:
        if self.kind == "henon":
            if not main < 1:
                raise DomainError(f"henon main parameter must be < 1 (saddle exists), got {main}")
        elif not main > 0:
            raise DomainError(f"{self.kind} main parameter must be > 0, got {main}")


@dataclass(frozen=True)
class ParamPoint:
    main: mpfr
    slave: mpfr


@dataclass(frozen=True)
class SaddleData:
    point: tuple
    lam1: mpfr
    lam2: mpfr
    eigvec1: tuple
    eigvec2: tuple
    companion: tuple  # the other fixed point; the homoclinic loop surrounds it


def eval_map(fam: MapFamily, p: ParamPoint, pt):
    x, y = pt
    if fam.kind == "quadratic":
        return (x + y, y + x * x - p.main + fam.gamma * x * y + p.slave * y)
    if fam.kind == "bogdanov":
        g = x * x + fam.gamma * x * y + p.main * x + p.slave * y
        return (x + y + g, y + g)
    return (y, p.main * y * y - p.slave * x + 1)


def make_stepper(fam: MapFamily, p: ParamPoint):
    """Closure for fast repeated iteration of one parameter point."""
    g = fam.gamma
    m, s = p.main, p.slave
    if fam.kind == "quadratic":
        def step(x, y):
            return x + y, y + x * x - m + g * x * y + s * y
    elif fam.kind == "bogdanov":
        def step(x, y):
            q = x * x + g * x * y + m * x + s * y
            return x + y + q, y + q
    else:
        def step(x, y):
            return y, m * y * y - s * x + 1
    return step


def jacobian_matrix(fam: MapFamily, p: ParamPoint, pt):
    x, y = pt
    if fam.kind == "quadratic":
        g = fam.gamma
        return ((1, 1), (2 * x + g * y, 1 + g * x + p.slave))
    if fam.kind == "bogdanov":
        g = fam.gamma
        gx = 2 * x + g * y + p.main
        gy = g * x + p.slave
        return ((1 + gx, 1 + gy), (gx, 1 + gy))
    return ((0, 1), (-p.slave, 2 * p.main * y))


def det_affine(fam: MapFamily, p: ParamPoint):
    """Coefficients (c0, cx, cy) with det dF(x, y) = c0 + cx*x + cy*y."""
    if fam.kind == "quadratic":
        g = fam.gamma
        return (1 + p.slave, g - 2, -g)
    if fam.kind == "bogdanov":
        return (1 + p.slave, fam.gamma, mpfr(0))
    return (p.slave, mpfr(0), mpfr(0))


def quad_part(fam: MapFamily, p: ParamPoint, u1, u2, w1, w2):
    """Symmetric bilinear form B(u, w) with F(S + u) = S + L u + B(u, u)."""
    if fam.kind == "quadratic":
        q = u1 * w1 + fam.gamma * (u1 * w2 + u2 * w1) / 2
        return (0, q)
    if fam.kind == "bogdanov":
        q = u1 * w1 + fam.gamma * (u1 * w2 + u2 * w1) / 2
        return (q, q)
    return (0, p.main * u2 * w2)


def quad_convolution(fam: MapFamily, p: ParamPoint, xs, ys, k):
    """Order-k coefficient of B(u(z), u(z)) for u(z) = sum_{j>=1} (xs[j], ys[j]) z^j."""
    if fam.kind == "henon":
        acc = 0
        for j in range(1, k):
            acc += ys[j] * ys[k - j]
        return (0, p.main * acc)
    g = fam.gamma
    xx = 0
    xy = 0
    for j in range(1, k):
        xx += xs[j] * xs[k - j]
        xy += xs[j] * ys[k - j]
    q = xx + g * xy
    if fam.kind == "quadratic":
        return (0, q)
    return (q, q)


def fixed_points(fam: MapFamily, p: ParamPoint):
    """(saddle, companion) fixed points."""
    fam.check_main(p.main)
    if fam.kind == "quadratic":
        r = gmpy2.sqrt(p.main)
        return (r, mpfr(0)), (-r, mpfr(0))
    if fam.kind == "bogdanov":
        return (mpfr(0), mpfr(0)), (-p.main, mpfr(0))
    disc = (1 + p.slave) ** 2 - 4 * p.main
    if disc <= 0:
        raise DomainError(f"henon map has no real fixed points at {p}")
    r = gmpy2.sqrt(disc)
    vs = (1 + p.slave + r) / (2 * p.main)
    vc = (1 + p.slave - r) / (2 * p.main)
    return (vs, vs), (vc, vc)


def _eigvec(L, lam, toward):
    (l11, l12), (l21, l22) = L
    a = (l12, lam - l11)
    b = (lam - l22, l21)
    v = a if abs(a[0]) + abs(a[1]) >= abs(b[0]) + abs(b[1]) else b
    n = gmpy2.sqrt(v[0] * v[0] + v[1] * v[1])
    v = (v[0] / n, v[1] / n)
    if v[0] * toward[0] + v[1] * toward[1] < 0:
        v = (-v[0], -v[1])
    return v


def saddle(fam: MapFamily, p: ParamPoint, digits: int | None = None) -> SaddleData:
    """Saddle point, eigenvalues lam1 < 1 < lam2 and oriented unit eigenvectors.

    Both eigenvectors point towards the companion fixed point, i.e. into the
    half-plane that contains the homoclinic loop.
    """
    S, C = fixed_points(fam, p)
    L = jacobian_matrix(fam, p, S)
    (l11, l12), (l21, l22) = L
    tr = l11 + l22
    det = l11 * l22 - l12 * l21
    disc = tr * tr - 4 * det
    if disc <= 0:
        raise DegenerateSaddleError(f"fixed point is not a saddle at {p}")
    r = gmpy2.sqrt(disc)
    lam1 = (tr - r) / 2
    lam2 = (tr + r) / 2
    if digits is None:
        digits = int(gmpy2.get_context().precision / 3.33)
    tol = mpfr(10) ** (-(digits // 2))
    if abs(lam1 - 1) < tol or abs(lam2 - 1) < tol or not (lam1 < 1 < lam2):
        raise DegenerateSaddleError(f"non-hyperbolic saddle: lam1={lam1}, lam2={lam2}")
    toward = (C[0] - S[0], C[1] - S[1])
    return SaddleData(S, lam1, lam2, _eigvec(L, lam1, toward), _eigvec(L, lam2, toward), C)


def k_arguments(fam: MapFamily, main):
    """(mu_eff, gamma_tilde_eff) entering the leading width K."""
    if fam.kind == "quadratic":
        return main, fam.gamma - 2
    if fam.kind == "bogdanov":
        return main * main / 4, fam.gamma
    return abs(1 - main), mpfr(0)


def scaling_variable(fam: MapFamily, main):
    """x used for asymptotic fits: mu^(1/4), a^(1/2) or |1 - at|^(1/4)."""
    if fam.kind == "quadratic":
        return gmpy2.root(main, 4)
    if fam.kind == "bogdanov":
        return gmpy2.sqrt(main)
    return gmpy2.root(abs(1 - main), 4)


def main_from_scaling(fam: MapFamily, x):
    if fam.kind == "quadratic":
        return x ** 4
    if fam.kind == "bogdanov":
        return x * x
    return 1 - x ** 4


def log_leading_width(fam: MapFamily, main) -> mpfr:
    mu, gt = k_arguments(fam, main)
    if not mu > 0:
        raise DomainError(f"leading width needs mu_eff > 0, got {mu}")
    pi = gmpy2.const_pi()
    return (gmpy2.log(mpfr(5) / (6 * gmpy2.sqrt(2))) - mpfr(5) / 4 * gmpy2.log(mu)
            - gmpy2.sqrt(2) * pi * pi / gmpy2.root(mu, 4) - 6 * pi * pi * gt / 7)


def leading_width(fam: MapFamily, main) -> mpfr:
    """K(mu, gt) = 5/(6 sqrt2 mu^(5/4)) exp(-sqrt2 pi^2 / mu^(1/4)) exp(-6 pi^2 gt / 7)."""
    return gmpy2.exp(log_leading_width(fam, main))


def predicted_homoclinic_slave(fam: MapFamily, main) -> mpfr:
    if fam.kind == "quadratic":
        return mpfr(5) * (fam.gamma - 2) * gmpy2.sqrt(main) / 7
    if fam.kind == "bogdanov":
        return mpfr(6) * main * fam.gamma / 7
    return mpfr(1)


def to_normal_form(fam: MapFamily, p: ParamPoint):
    """(mu, nu, gamma) of the canonical unfolding."""
    if fam.kind == "quadratic":
        return p.main, p.slave, fam.gamma
    if fam.kind == "bogdanov":
        a, b, g = p.main, p.slave, fam.gamma
        return a * a / 4, a + b - (g + 2) * a / 2, g + 2
    nu = p.slave - 1
    return (1 + nu / 2) ** 2 - p.main, nu, mpfr(2)


def henon_from_bogdanov(a, b):
    """Henon parameters (at, bt) conjugate to the Bogdanov map with gt = 0."""
    return (1 + b / 2) ** 2 - a * a / 4, 1 + b


def bogdanov_to_henon_coords(a, b, pt):
    """Affine conjugacy taking Bogdanov (gt = 0) coordinates to Henon ones.

    With beta = (2 + a + b)/2 and at = beta (beta - a):
    u = (x - y + beta)/at, v = (x + beta)/at.
    """
    x, y = pt
    beta = (2 + a + b) / 2
    at = beta * (beta - a)
    return ((x - y + beta) / at, (x + beta) / at)

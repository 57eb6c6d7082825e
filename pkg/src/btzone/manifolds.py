"""Power-series parameterisations of the stable and unstable manifolds.

Phi(lam z) = F(Phi(z)) with Phi(0) = saddle and Phi'(0) the oriented unit
eigenvector.  Writing F(S + u) = S + L u + B(u, u), the order-k coefficient
solves the 2x2 system (lam^k I - L) c_k = sum_{j=1}^{k-1} B(c_j, c_{k-j}).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpc, mpfr

from .maps import (DegenerateSaddleError, MapFamily, ParamPoint, SaddleData,
                   jacobian_matrix, make_stepper, quad_convolution, saddle)
from .numerics import DomainError, NumericsError, format_decimal


class DivergenceError(NumericsError):
    pass


class CapacityError(NumericsError):
    pass


@dataclass(frozen=True)
class ManifoldSeries:
    family: MapFamily
    point: ParamPoint
    branch: str  # "stable" | "unstable"
    lam: mpfr
    xs: tuple  # xs[0] is the saddle abscissa, xs[k] the z^k coefficient
    ys: tuple
    radius: mpfr  # evaluation radius delta

    @property
    def n_max(self) -> int:
        return len(self.xs) - 1

    @property
    def base(self):
        return (self.xs[0], self.ys[0])

    def with_radius(self, radius) -> "ManifoldSeries":
        return ManifoldSeries(self.family, self.point, self.branch, self.lam,
                              self.xs, self.ys, mpfr(radius))


@dataclass(frozen=True)
class DomainPlan:
    delta_s: mpfr
    delta_u: mpfr
    m0: int
    z0: mpfr
    n_stable: int
    n_unstable: int


def compute_series(fam: MapFamily, p: ParamPoint, branch: str, n_max: int,
                   sad: SaddleData | None = None, scale=1, radius=None) -> ManifoldSeries:
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    if branch not in ("stable", "unstable"):
        raise ValueError(f"branch must be 'stable' or 'unstable', got {branch!r}")
    if sad is None:
        sad = saddle(fam, p)
    lam, v = (sad.lam1, sad.eigvec1) if branch == "stable" else (sad.lam2, sad.eigvec2)
    (l11, l12), (l21, l22) = jacobian_matrix(fam, p, sad.point)
    s = mpfr(scale)
    xs = [sad.point[0], v[0] * s]
    ys = [sad.point[1], v[1] * s]
    tol = mpfr(2) ** (-gmpy2.get_context().precision // 2)
    lamk = lam
    for k in range(2, n_max + 1):
        lamk = lamk * lam
        r1, r2 = quad_convolution(fam, p, xs, ys, k)
        a11 = lamk - l11
        a22 = lamk - l22
        det = a11 * a22 - l12 * l21
        if abs(det) < tol:
            raise DegenerateSaddleError(f"resonant denominator at order {k}")
        xs.append((r1 * a22 + l12 * r2) / det)
        ys.append((a11 * r2 + l21 * r1) / det)
    if radius is None:
        radius = estimate_radius(xs, ys) / 2 if branch == "stable" else mpfr("inf")
    return ManifoldSeries(fam, p, branch, lam, tuple(xs), tuple(ys), mpfr(radius))


def coefficient_norms(series_or_xs, ys=None):
    if ys is None:
        xs, ys = series_or_xs.xs, series_or_xs.ys
    else:
        xs = series_or_xs
    return [abs(xs[k]) + abs(ys[k]) for k in range(len(xs))]


def estimate_radius(xs, ys, tail=0.2) -> mpfr:
    """Cauchy-Hadamard estimate from the last ``tail`` fraction of coefficients."""
    norms = coefficient_norms(xs, ys)
    n = len(norms) - 1
    k0 = max(1, int(n * (1 - tail)))
    best = None
    for k in range(k0, n + 1):
        if norms[k] == 0:
            continue
        r = norms[k] ** (mpfr(-1) / k)
        best = r if best is None or r < best else best
    return best if best is not None else mpfr("inf")


def _check_radius(series: ManifoldSeries, z):
    if abs(z) > series.radius * (1 + mpfr(2) ** -20):
        raise DomainError(f"|z| = {float(abs(z)):.3e} exceeds the {series.branch} radius "
                          f"{float(series.radius):.3e}")


def eval_local(series: ManifoldSeries, z, check=True):
    """Phi(z) by Horner's rule (complex z allowed)."""
    if check:
        _check_radius(series, z)
    xs, ys = series.xs, series.ys
    n = len(xs) - 1
    ax, ay = xs[n], ys[n]
    for k in range(n - 1, 0, -1):
        ax = ax * z + xs[k]
        ay = ay * z + ys[k]
    return (ax * z + xs[0], ay * z + ys[0])


def eval_local_derivs(series: ManifoldSeries, z, order=1, check=True):
    """[Phi(z), Phi'(z), ..., Phi^(order)(z)] as (x, y) pairs."""
    if check:
        _check_radius(series, z)
    out = []
    xs, ys = list(series.xs), list(series.ys)
    fact = 1
    for d in range(order + 1):
        n = len(xs) - 1
        ax, ay = xs[n], ys[n]
        for k in range(n - 1, -1, -1):
            ax = ax * z + xs[k]
            ay = ay * z + ys[k]
        out.append((ax, ay))
        xs = [k * xs[k] for k in range(1, len(xs))]
        ys = [k * ys[k] for k in range(1, len(ys))]
        if not xs:
            xs, ys = [0], [0]
    return out


def default_box(series: ManifoldSeries):
    sx, sy = series.base
    return 1000 * (1 + abs(sx) + abs(sy))


def iterations_needed(series: ManifoldSeries, z) -> int:
    az = abs(z)
    if az <= series.radius:
        return 0
    return int(math.ceil(float(gmpy2.log(az / series.radius) / gmpy2.log(series.lam)) - 1e-9))


def eval_global_unstable(series: ManifoldSeries, z, m: int | None = None, box=None):
    """F^m(Phi_u(lam2^-m z)) with m the smallest admissible depth unless given."""
    if m is None:
        m = iterations_needed(series, z)
    w = z / series.lam ** m
    x, y = eval_local(series, w)
    step = make_stepper(series.family, series.point)
    box = box or default_box(series)
    for _ in range(m):
        x, y = step(x, y)
        if abs(x) + abs(y) > box:
            raise DivergenceError("unstable orbit left the bounding box")
    return (x, y)


def eval_global_unstable_tangent(series: ManifoldSeries, z, m: int | None = None, box=None):
    """Point and d/dz of the global unstable parameterisation."""
    if m is None:
        m = iterations_needed(series, z)
    scale = series.lam ** m
    w = z / scale
    (x, y), (dx, dy) = eval_local_derivs(series, w, 1)
    dx, dy = dx / scale, dy / scale
    fam, p = series.family, series.point
    step = make_stepper(fam, p)
    box = box or default_box(series)
    for _ in range(m):
        (a, b), (c, d) = jacobian_matrix(fam, p, (x, y))
        dx, dy = a * dx + b * dy, c * dx + d * dy
        x, y = step(x, y)
        if abs(x) + abs(y) > box:
            raise DivergenceError("unstable orbit left the bounding box")
    return (x, y), (dx, dy)


def conjugacy_residual(series: ManifoldSeries, z) -> mpfr:
    """|Phi(lam z) - F(Phi(z))| using the truncated series on both sides."""
    x, y = eval_local(series, z, check=False)
    fx, fy = make_stepper(series.family, series.point)(x, y)
    gx, gy = eval_local(series, series.lam * z, check=False)
    return abs(gx - fx) + abs(gy - fy)


def _tail_fit(norms, tail=0.2):
    """Least-squares fit log|c_k| ~ a + b k over the tail; returns (a, b) as floats."""
    n = len(norms) - 1
    ks = [k for k in range(max(1, int(n * (1 - tail))), n + 1) if norms[k] != 0]
    ls = [float(gmpy2.log(norms[k])) for k in ks]
    mk = sum(ks) / len(ks)
    ml = sum(ls) / len(ls)
    sxx = sum((k - mk) ** 2 for k in ks)
    b = sum((k - mk) * (l - ml) for k, l in zip(ks, ls)) / sxx if sxx else 0.0
    return ml - b * mk, b


def plan_domains(fam: MapFamily, p: ParamPoint, target_residual, sad=None,
                 stable_fraction=0.125, unstable_order=None, n_cap=4000, n_probe=96) -> DomainPlan:
    """Choose radii and truncation orders so the local residual stays below target.

    The stable series has a finite radius rho (estimated from the coefficient
    tail) and is evaluated on |z| <= stable_fraction * rho.  The unstable
    series is entire: its order is fixed first (default about 40% of the
    stable one) and delta_u is then taken as large as the computed tail
    allows.  A small delta_u only costs extra map iterations.
    """
    target = mpfr(target_residual)
    if not target > 0:
        raise ValueError("target_residual must be positive")
    if not 0 < stable_fraction < 1:
        raise ValueError("stable_fraction must lie in (0, 1)")
    if sad is None:
        sad = saddle(fam, p)
    log_target = float(gmpy2.log(target))

    probe = compute_series(fam, p, "stable", n_probe, sad, radius=1)
    a, b = _tail_fit(coefficient_norms(probe))
    rho = math.exp(-b)
    delta_s = stable_fraction * rho
    # a + b n + n log(delta_s) <= log target  =>  n >= (log target - a) / (b + log delta_s)
    n_s = int(math.ceil((log_target - a) / (b + math.log(delta_s)) * 1.05)) + 8
    if n_s > n_cap:
        raise CapacityError(f"stable series needs {n_s} terms (cap {n_cap}); rho ~ {rho:.3e}")
    n_s = max(n_s, 16)

    loop = math.hypot(float(sad.companion[0] - sad.point[0]), float(sad.companion[1] - sad.point[1]))
    n_u = max(16, int(0.4 * n_s) if unstable_order is None else int(unstable_order))
    useries = compute_series(fam, p, "unstable", n_u, sad)
    norms = coefficient_norms(useries)
    # largest delta with |c_k| delta^k <= target over the last few orders
    logs = [(k, float(gmpy2.log(norms[k]))) for k in range(max(1, n_u - 8), n_u + 1) if norms[k] != 0]
    delta_u = min(math.exp((log_target - lc) / k) for k, lc in logs) / 2 if logs else loop
    delta_u = min(delta_u, loop / 4)
    return DomainPlan(mpfr(delta_s), mpfr(delta_u), 0, mpfr(0), n_s, n_u)


def dump_coefficients(series: ManifoldSeries, path, digits=None) -> None:
    """Write ``order, x_k, y_k`` rows as decimal CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["order", "x", "y"])
        for k, (a, b) in enumerate(zip(series.xs, series.ys)):
            w.writerow([k, format_decimal(a, digits), format_decimal(b, digits)])

"""Jacobian determinant along the stable manifold and the Wronskian it induces.

J(z) = det dF(Phi_s(z)).  For all three families det dF is affine in (x, y),
so J_k is a linear combination of the stable coefficients.

Omega(z) = z^c (1 + sum Omega_k z^k), c = log J_0 / log lam1, solves
Omega(lam1 z) = J(z) Omega(z).  Matching powers of z gives
J_0 (lam1^n - 1) Omega_n = sum_{j<n} J_{n-j} Omega_j.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpc, mpfr

from .manifolds import ManifoldSeries
from .maps import DegenerateSaddleError, det_affine
from .numerics import complex_power, format_decimal


@dataclass(frozen=True)
class JacobianSeries:
    coeffs: tuple  # J_0, J_1, ...

    @property
    def n_max(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, z):
        acc = self.coeffs[-1]
        for c in reversed(self.coeffs[:-1]):
            acc = acc * z + c
        return acc


@dataclass(frozen=True)
class WronskianSeries:
    exponent: mpfr
    coeffs: tuple  # Omega_0 = 1, Omega_1, ...

    @property
    def n_max(self) -> int:
        return len(self.coeffs) - 1


def jacobian_along_stable(stable: ManifoldSeries) -> JacobianSeries:
    c0, cx, cy = det_affine(stable.family, stable.point)
    xs, ys = stable.xs, stable.ys
    js = [c0 + cx * xs[0] + cy * ys[0]]
    js += [cx * xs[k] + cy * ys[k] for k in range(1, len(xs))]
    return JacobianSeries(tuple(js))


def wronskian_series(J: JacobianSeries, lam1) -> WronskianSeries:
    js = J.coeffs
    j0 = js[0]
    c = gmpy2.log(j0) / gmpy2.log(lam1)
    tol = mpfr(2) ** (-gmpy2.get_context().precision // 2)
    om = [mpfr(1)]
    lamn = mpfr(1)
    for n in range(1, len(js)):
        lamn = lamn * lam1
        den = j0 * (lamn - 1)
        if abs(den) < tol:
            raise DegenerateSaddleError(f"resonant Wronskian denominator at order {n}")
        acc = 0
        for j in range(n):
            acc += js[n - j] * om[j]
        om.append(acc / den)
    return WronskianSeries(c, tuple(om))


def eval_wronskian_series_part(W: WronskianSeries, z):
    acc = W.coeffs[-1]
    for c in reversed(W.coeffs[:-1]):
        acc = acc * z + c
    return acc


def eval_wronskian(W: WronskianSeries, z):
    """z^c (1 + sum Omega_k z^k), principal branch; real z > 0 gives a real value."""
    s = eval_wronskian_series_part(W, z)
    if isinstance(z, mpc) and z.imag != 0:
        return complex_power(z, W.exponent) * s
    zr = z.real if isinstance(z, mpc) else mpfr(z)
    if zr > 0:
        return gmpy2.exp(W.exponent * gmpy2.log(zr)) * s
    return complex_power(z, W.exponent) * s


def functional_residual(W: WronskianSeries, J: JacobianSeries, lam1, z):
    """|Omega(lam1 z) - J(z) Omega(z)| / |Omega(z)|."""
    oz = eval_wronskian(W, z)
    return abs(eval_wronskian(W, lam1 * z) - J(z) * oz) / abs(oz)


def dump_coefficients(W: WronskianSeries, path, digits=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["order", "omega"])
        for k, c in enumerate(W.coeffs):
            w.writerow([k, format_decimal(c, digits)])

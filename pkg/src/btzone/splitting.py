"""Splitting determinant, primary homoclinic orbits, harmonics and zone width.

Conventions.  Gamma_s(t) = Phi_s(z_s lam1^t) and Gamma_u(t) = F^m(Phi_u(w lam2^t))
with w = z_u lam2^-m inside the local unstable disc; both are defined for
complex t in the strip |Im t| |log lam1| < pi.  The section Sigma passes
through p = Phi_s(z_s) along the normal to the stable tangent.

Three width estimators are offered:

* ``real``      4|R_-1|/v from four real samples of the splitting determinant;
* ``complex``   4|C_-1|/v from samples on the shifted line Im t = delta;
* ``tangency``  nu+ - nu- from the two geometric tangencies, solved directly
                (max_t or min_t of the signed distance to W^s equal to zero).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import gmpy2
from gmpy2 import mpc, mpfr

from .manifolds import (DomainPlan, ManifoldSeries, compute_series, eval_local,
                        eval_local_derivs, plan_domains)
from .maps import (MapFamily, ParamPoint, SaddleData, jacobian_matrix, leading_width,
                   make_stepper, predicted_homoclinic_slave, saddle)
from .numerics import DomainError, NumericsError, PrecisionContext, log10_abs
from .variational import (JacobianSeries, WronskianSeries, eval_wronskian,
                          jacobian_along_stable, wronskian_series)


class SectionError(NumericsError):
    """The unstable manifold never crossed the section."""


class ConvergenceError(NumericsError):
    pass


class ConditioningError(NumericsError):
    """Finite-difference denominator too small or unstable in t."""


@dataclass(frozen=True)
class SplittingConfig:
    stable_fraction: float = 0.125
    unstable_order: int | None = None
    section_samples: int = 8
    max_iterates: int = 20000
    secant_max_iter: int = 80
    strip_margin: float = 0.1  # fraction of pi kept away from the branch cut
    v0_guard: float = 1e-12
    denominator_spread: float = 0.1


class SlaveManifolds:
    """Manifold series at one slave value; the Wronskian is built on first use."""

    def __init__(self, point: ParamPoint, sad: SaddleData, stable: ManifoldSeries,
                 unstable: ManifoldSeries):
        self.point = point
        self.saddle = sad
        self.stable = stable
        self.unstable = unstable
        self.log_lam1 = gmpy2.log(sad.lam1)
        self.log_lam2 = gmpy2.log(sad.lam2)

    @cached_property
    def jacobian(self) -> JacobianSeries:
        return jacobian_along_stable(self.stable)

    @cached_property
    def wronskian(self) -> WronskianSeries:
        return wronskian_series(self.jacobian, self.saddle.lam1)


@dataclass(frozen=True)
class HomoclinicFrame:
    slave: mpfr
    z_s: mpfr
    z_u: mpfr  # Gamma_u(t) = F^m(Phi_u(z_u lam2^(t - m)))
    m: int
    y0: mpfr
    gap: mpfr  # signed normal offset of Gamma_u(0) from the section anchor
    iterations: int = 0
    trace: tuple = ()


@dataclass(frozen=True)
class Harmonics:
    R0: object
    Rm1: object
    Rp1: object
    method: str
    delta: mpfr = mpfr(0)


@dataclass(frozen=True)
class WidthEstimate:
    value: mpfr
    method: str
    error_exponent: float  # log10 of the relative error bound
    slave_anchor: mpfr
    extra: dict = field(default_factory=dict)


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1]


def _det(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _unit(v):
    n = gmpy2.sqrt(v[0] * v[0] + v[1] * v[1])
    return (v[0] / n, v[1] / n)


def _lam_pow(log_lam, t):
    return gmpy2.exp(t * log_lam)


class SplittingProblem:
    """All per-(family, main) state: domain plan and a cache of manifolds per slave."""

    def __init__(self, family: MapFamily, main, ctx: PrecisionContext,
                 config: SplittingConfig | None = None, seed_slave=None):
        self.family = family
        self.ctx = ctx
        self.config = config or SplittingConfig()
        with ctx.local():
            self.main = ctx.mpf(main) if isinstance(main, str) else mpfr(main)
            family.check_main(self.main)
            seed = predicted_homoclinic_slave(family, self.main) if seed_slave is None else mpfr(seed_slave)
            self.seed_slave = seed
            p = ParamPoint(self.main, seed)
            self.plan: DomainPlan = plan_domains(family, p, ctx.eps(), saddle(family, p),
                                                 stable_fraction=self.config.stable_fraction,
                                                 unstable_order=self.config.unstable_order)
        self._cache: dict = {}

    # -- manifolds -----------------------------------------------------------------

    def manifolds(self, slave) -> SlaveManifolds:
        key = mpfr(slave)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        p = ParamPoint(self.main, key)
        sad = saddle(self.family, p)
        st = compute_series(self.family, p, "stable", self.plan.n_stable, sad, radius=self.plan.delta_s)
        un = compute_series(self.family, p, "unstable", self.plan.n_unstable, sad, radius=self.plan.delta_u)
        out = SlaveManifolds(p, sad, st, un)
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[key] = out
        return out

    @property
    def strip_halfwidth(self) -> mpfr:
        """rho = (pi - margin) / |log lam1| at the seed slave."""
        mans = self.manifolds(self.seed_slave)
        return (1 - self.config.strip_margin) * gmpy2.const_pi() / abs(mans.log_lam1)

    def leading_width(self) -> mpfr:
        return leading_width(self.family, self.main)


# -- parameterised curves ------------------------------------------------------------

def _check_strip(mans: SlaveManifolds, t):
    if isinstance(t, mpc) and abs(t.imag * mans.log_lam1) >= gmpy2.const_pi() * mpfr("0.999"):
        raise DomainError(f"Im t = {float(t.imag):.4g} leaves the analyticity strip")


def gamma_s(mans: SlaveManifolds, frame: HomoclinicFrame, t, derivative=False):
    _check_strip(mans, t)
    z = frame.z_s * _lam_pow(mans.log_lam1, t)
    if not derivative:
        return eval_local(mans.stable, z)
    (x, y), (dx, dy) = eval_local_derivs(mans.stable, z, 1)
    f = mans.log_lam1 * z
    return (x, y), (f * dx, f * dy)


def _global_u(mans: SlaveManifolds, w, m, tangent=False):
    """F^m(Phi_u(w)) and optionally d/dw."""
    p = mans.point
    step = make_stepper(mans.unstable.family, p)
    if not tangent:
        x, y = eval_local(mans.unstable, w)
        for _ in range(m):
            x, y = step(x, y)
        return (x, y)
    (x, y), (dx, dy) = eval_local_derivs(mans.unstable, w, 1)
    famk = mans.unstable.family
    for _ in range(m):
        (a, b), (c, d) = jacobian_matrix(famk, p, (x, y))
        dx, dy = a * dx + b * dy, c * dx + d * dy
        x, y = step(x, y)
    return (x, y), (dx, dy)


def gamma_u(mans: SlaveManifolds, frame: HomoclinicFrame, t, derivative=False):
    _check_strip(mans, t)
    m = frame.m
    w = frame.z_u * _lam_pow(mans.log_lam2, t - m)
    while abs(w) > mans.unstable.radius:
        w = w / mans.saddle.lam2
        m += 1
    if not derivative:
        return _global_u(mans, w, m)
    (x, y), (dx, dy) = _global_u(mans, w, m, tangent=True)
    f = mans.log_lam2 * w
    return (x, y), (f * dx, f * dy)


def splitting_determinant(problem: SplittingProblem, frame: HomoclinicFrame, t, slave=None):
    """det[dGamma_s/dt, Gamma_u - Gamma_s] / Omega(z_s lam1^t)."""
    mans = problem.manifolds(frame.slave if slave is None else slave)
    gs, dgs = gamma_s(mans, frame, t, derivative=True)
    gu = gamma_u(mans, frame, t)
    num = _det(dgs, (gu[0] - gs[0], gu[1] - gs[1]))
    z = frame.z_s * _lam_pow(mans.log_lam1, t)
    return num / eval_wronskian(mans.wronskian, z)


# -- primary homoclinic search ---------------------------------------------------------

def _section(mans: SlaveManifolds, z_s):
    (px, py), (tx, ty) = eval_local_derivs(mans.stable, z_s, 1)
    T = _unit((tx, ty))
    n = (-T[1], T[0])
    return (px, py), T, n


def _section_crossing(problem: SplittingProblem, mans: SlaveManifolds, z_s):
    """First (tau, m) where Gamma_u crosses Sigma returning towards the saddle.

    Returns (z_u, m, y) with y the signed normal offset of the crossing point.
    """
    cfg = problem.config
    un = mans.unstable
    lam2 = mans.saddle.lam2
    w0 = un.radius / (lam2 * lam2)
    p, T, n = _section(mans, z_s)
    S = mans.saddle.point
    y0 = 10 * (abs(p[0] - S[0]) + abs(p[1] - S[1]))
    J = cfg.section_samples
    step = make_stepper(problem.family, mans.point)
    ws = [w0 * _lam_pow(mans.log_lam2, mpfr(j) / J) for j in range(J + 1)]
    pts = [eval_local(un, w) for w in ws]
    box = 1000 * (1 + abs(S[0]) + abs(S[1]) + y0)

    def h_of(q):
        return _dot((q[0] - p[0], q[1] - p[1]), T)

    def y_of(q):
        return _dot((q[0] - p[0], q[1] - p[1]), n)

    found = None
    for m in range(cfg.max_iterates):
        hs = [h_of(q) for q in pts]
        for j in range(1, J + 1):
            ha, hb = hs[j - 1], hs[j]
            if ha > 0 >= hb and abs(y_of(pts[j])) < y0 and abs(y_of(pts[j - 1])) < y0:
                found = (m, mpfr(j - 1) / J, mpfr(j) / J)
                break
        if found:
            break
        pts = [step(*q) for q in pts]
        if any(abs(q[0]) + abs(q[1]) > box for q in pts):
            raise SectionError("unstable manifold escaped before reaching the section")
    if found is None:
        raise SectionError("no crossing of the section within max_iterates")
    m, a, b = found

    def h_and_dh(s):
        w = w0 * _lam_pow(mans.log_lam2, s)
        q, dq = _global_u(mans, w, m, tangent=True)
        f = mans.log_lam2 * w
        return h_of(q), _dot((f * dq[0], f * dq[1]), T), q

    # safeguarded Newton on h(s) = 0, s in [a, b]
    ha, _, _ = h_and_dh(a)
    hb, _, _ = h_and_dh(b)
    s = (a + b) / 2
    tol = problem.ctx.eps() * 1000
    for _ in range(200):
        hs_, dh, q = h_and_dh(s)
        if hs_ == 0:
            break
        if (hs_ > 0) == (ha > 0):
            a, ha = s, hs_
        else:
            b, hb = s, hs_
        s_new = s - hs_ / dh if dh != 0 else (a + b) / 2
        if not (a < s_new < b):
            s_new = (a + b) / 2
        if abs(s_new - s) < tol * (1 + abs(s)):
            s = s_new
            break
        s = s_new
    q = h_and_dh(s)[2]
    w = w0 * _lam_pow(mans.log_lam2, s)
    # Gamma_u(0) = F^m(Phi_u(w)) = F^m(Phi_u(z_u lam2^-m))
    z_u = w * _lam_pow(mans.log_lam2, mpfr(m))
    return z_u, m, y_of(q), y0


def section_gap(problem: SplittingProblem, slave, z_s=None):
    mans = problem.manifolds(slave)
    z_s = problem.plan.delta_s / 2 if z_s is None else z_s
    return _section_crossing(problem, mans, z_s)


def find_primary_homoclinic(problem: SplittingProblem, seed_slave=None, target_gap=0,
                            tol=None, z_s=None) -> HomoclinicFrame:
    """Adjust the slave parameter until the first section crossing has offset ``target_gap``.

    Finite-difference Newton ("secant") iteration
    nu_{n+1} = nu_n - dbar (y_n - target) / (y(nu_n + dbar) - y_n).
    """
    ctx = problem.ctx
    with ctx.local():
        nu = problem.seed_slave if seed_slave is None else mpfr(seed_slave)
        z_s = problem.plan.delta_s / 2 if z_s is None else mpfr(z_s)
        target = mpfr(target_gap)
        if tol is None:
            tol = ctx.eps() * 10 ** 6
        dbar = mpfr(10) ** (-(ctx.digits // 3)) * max(abs(nu), mpfr("1e-3"))
        trace = []
        best = None
        for it in range(problem.config.secant_max_iter):
            z_u, m, y, y0 = section_gap(problem, nu, z_s)
            r = y - target
            trace.append((nu, y))
            if best is None or abs(r) < abs(best[1]):
                best = (nu, r, z_u, m, y, y0)
            if abs(r) <= tol + abs(target) * tol:
                break
            _, _, y2, _ = section_gap(problem, nu + dbar, z_s)
            dy = y2 - y
            if dy == 0:
                raise ConvergenceError("flat section gap in the slave parameter")
            step = dbar * r / dy
            nu = nu - step
            if abs(step) < ctx.eps() * 100 * (1 + abs(nu)):
                z_u, m, y, y0 = section_gap(problem, nu, z_s)
                trace.append((nu, y))
                if abs(y - target) < abs(best[1]):
                    best = (nu, y - target, z_u, m, y, y0)
                break
        else:
            if abs(best[1]) > mpfr(10) ** (-(ctx.digits // 2)):
                raise ConvergenceError(f"secant iteration did not converge: residual {float(best[1]):.3e}")
        nu, _, z_u, m, y, y0 = best
        return HomoclinicFrame(nu, z_s, z_u, m, y0, y, len(trace), tuple(trace))


# -- harmonics ----------------------------------------------------------------------------

def harmonics_from_samples(th0, th_q, th_h, th_mq, delta=mpfr(0), method="real") -> Harmonics:
    """Four-point formulas from Theta at 0, 1/4, 1/2, -1/4."""
    R0 = (th0 + th_h) / 2
    a = (th0 - th_h) / 4
    b = (th_q - th_mq) / 4
    Rm1 = mpc(a, b)
    return Harmonics(R0, Rm1, mpc(a, -b), method, mpfr(delta))


def harmonics_real(problem: SplittingProblem, frame: HomoclinicFrame, slave=None) -> Harmonics:
    with problem.ctx.local():
        f = lambda t: splitting_determinant(problem, frame, mpfr(t), slave)
        return harmonics_from_samples(f(0), f(mpfr(1) / 4), f(mpfr(1) / 2), f(mpfr(-1) / 4))


def fourier_coefficients(problem: SplittingProblem, frame: HomoclinicFrame, n=64, kmax=2,
                         slave=None, shift=mpfr(0)):
    """Oversampled DFT P_k = (1/n) sum Theta(t_j) e^{-2 pi i k j/n}, t_j = j/n + i shift.

    With a shift this is the line integral only; multiply by e^{-2 pi k shift}
    to recover the harmonic.
    """
    with problem.ctx.local():
        vals = []
        for j in range(n):
            t = mpfr(j) / n
            if shift:
                t = mpc(t, shift)
            vals.append(splitting_determinant(problem, frame, t, slave))
        out = {}
        twopi = 2 * gmpy2.const_pi()
        for k in range(-kmax, kmax + 1):
            acc = mpc(0)
            for j, v in enumerate(vals):
                ang = -twopi * k * j / n
                acc += v * mpc(gmpy2.cos(ang), gmpy2.sin(ang))
            out[k] = acc / n
        return out


def harmonic_complex(problem: SplittingProblem, frame: HomoclinicFrame, delta, case=None,
                     slave=None) -> Harmonics:
    """C_-1 from samples on Im t = delta; case 1 (two points) when delta > rho/3."""
    with problem.ctx.local():
        delta = mpfr(delta)
        rho = problem.strip_halfwidth
        if not (0 < delta < rho):
            raise DomainError(f"delta = {float(delta):.4g} must lie in (0, rho = {float(rho):.4g})")
        if case is None:
            case = 1 if delta > rho / 3 else 2
        f = lambda s: splitting_determinant(problem, frame, mpc(s, delta), slave)
        damp = gmpy2.exp(-2 * gmpy2.const_pi() * delta)
        half = mpfr(1) / 2
        if case == 1:
            c = damp * (f(0) - f(half)) / 2
        else:
            # trapezoid rule for int e^{2 pi i t} Theta(t) dt at t = i delta + j/4
            q = mpfr(1) / 4
            c = damp * (f(0) - f(half) + mpc(0, 1) * (f(q) - f(3 * q))) / 4
        c = mpc(c)
        return Harmonics(None, c, c.conjugate(), f"complex{case}", delta)


# -- widths ---------------------------------------------------------------------------------

def _fd_step(problem: SplittingProblem, width_guess):
    d = problem.ctx.digits
    return max(mpfr(10) ** (-(d // 4)), 1000 * abs(mpfr(width_guess)))


def theta_slope(problem: SplittingProblem, frame: HomoclinicFrame, t, h):
    """(Theta_{nu+h}(t) - Theta_{nu-h}(t)) / (2h) at fixed (z_s, z_u)."""
    a = splitting_determinant(problem, frame, t, frame.slave + h)
    b = splitting_determinant(problem, frame, t, frame.slave - h)
    return (a - b) / (2 * h)


def _check_slope(problem, frame, h):
    slopes = [theta_slope(problem, frame, mpfr(t), h) for t in (0, 0.25, 0.5)]
    v = slopes[0]
    spread = max(abs(s - v) for s in slopes) / abs(v)
    if abs(v) < problem.config.v0_guard:
        raise ConditioningError(f"denominator |dTheta/dnu| = {float(abs(v)):.3e} below guard")
    return v, float(spread)


def width_real(problem: SplittingProblem, frame: HomoclinicFrame | None = None) -> WidthEstimate:
    with problem.ctx.local():
        if frame is None:
            frame = find_primary_homoclinic(problem)
        H = harmonics_real(problem, frame)
        guess = 4 * abs(H.Rm1)
        h = _fd_step(problem, guess)
        v, spread = _check_slope(problem, frame, h)
        Z = 4 * abs(H.Rm1) / abs(v)
        return WidthEstimate(Z, "real", log10_abs(Z), frame.slave,
                             {"Rm1": H.Rm1, "R0": H.R0, "slope": v, "slope_spread": spread})


def default_delta(problem: SplittingProblem) -> mpfr:
    return problem.strip_halfwidth / 2


def width_complex(problem: SplittingProblem, delta=None, frame: HomoclinicFrame | None = None,
                  scale_hint=None) -> WidthEstimate:
    """Complex-strip estimate on a relaxed frame whose splitting is about Delta_0.

    ``scale_hint`` is the expected |P_-1| in splitting-determinant units (e.g. from
    a real run); without it K * |dTheta/dnu| / 4 is used.
    """
    with problem.ctx.local():
        delta = default_delta(problem) if delta is None else mpfr(delta)
        e2 = gmpy2.exp(2 * gmpy2.const_pi() * delta)
        if frame is None:
            tight = find_primary_homoclinic(problem, tol=mpfr(10) ** (-(problem.ctx.digits // 2)))
            h0 = _fd_step(problem, 0)
            v0 = theta_slope(problem, tight, mpfr(0), h0)
            if scale_hint is None:
                scale_hint = problem.leading_width() * abs(v0) / 4
            delta0 = mpfr(scale_hint) * e2
            # the splitting near t = 0 is |Gamma_s'| y / Omega; aim for Theta(0) ~ Delta_0 / 2
            mans = problem.manifolds(tight.slave)
            _, dgs = gamma_s(mans, tight, mpfr(0), derivative=True)
            om = eval_wronskian(mans.wronskian, tight.z_s)
            speed = gmpy2.sqrt(_dot(dgs, dgs)) / om
            frame = find_primary_homoclinic(problem, seed_slave=tight.slave,
                                            target_gap=delta0 / (2 * speed), z_s=tight.z_s)
        C = harmonic_complex(problem, frame, delta)
        h = _fd_step(problem, 4 * abs(C.Rm1))
        v, spread = _check_slope(problem, frame, h)
        Z = 4 * abs(C.Rm1) / abs(v)
        err = log10_abs(C.Rm1) + log10_abs(e2)
        return WidthEstimate(Z, "complex", err, frame.slave,
                             {"Cm1": C.Rm1, "delta": delta, "exp2pidelta": e2, "slope": v,
                              "slope_spread": spread, "gap": frame.gap})


def tangency_parameters(problem: SplittingProblem, frame: HomoclinicFrame):
    """Solve R0 -/+ 2|R_-1| = 0 by secant in the slave parameter.

    Returns (nu_plus, nu_minus) with nu_plus > nu_minus.
    """
    with problem.ctx.local():
        H = harmonics_real(problem, frame)
        h = _fd_step(problem, 4 * abs(H.Rm1))
        v = theta_slope(problem, frame, mpfr(0), h)
        out = []
        for sgn in (1, -1):
            def g(nu):
                Hn = harmonics_real(problem, frame, nu)
                return Hn.R0 + sgn * 2 * abs(Hn.Rm1)
            nu0 = frame.slave
            g0 = g(nu0)
            nu1 = nu0 - g0 / v
            out.append(_secant(g, nu0, nu1, problem.ctx, g0=g0))
        a, b = out
        return (a, b) if a > b else (b, a)


def _secant(g, x0, x1, ctx, g0=None, max_iter=60, tol=None):
    g0 = g(x0) if g0 is None else g0
    g1 = g(x1)
    tol = ctx.eps() * 100 if tol is None else tol
    for _ in range(max_iter):
        if g1 == g0:
            return x1
        x2 = x1 - g1 * (x1 - x0) / (g1 - g0)
        x0, g0 = x1, g1
        x1 = x2
        if abs(x1 - x0) <= tol * (1 + abs(x1)):
            return x1
        g1 = g(x1)
    raise ConvergenceError("secant iteration did not converge")


# -- exact tangencies --------------------------------------------------------------------

def _foot(mans: SlaveManifolds, q, s0, ctx):
    """Foot point s of q on the local stable curve: <q - Phi_s(s), Phi_s'(s)> = 0."""
    s = s0
    tol = ctx.eps() * 1000
    for _ in range(50):
        (x, y), (dx, dy), (ddx, ddy) = eval_local_derivs(mans.stable, s, 2)
        gx, gy = q[0] - x, q[1] - y
        f = gx * dx + gy * dy
        df = -(dx * dx + dy * dy) + gx * ddx + gy * ddy
        ds = f / df
        s = s - ds
        if abs(ds) <= tol * abs(s):
            break
    (x, y), (dx, dy) = eval_local_derivs(mans.stable, s, 1)
    return s, (x, y), (dx, dy)


def signed_distance(problem: SplittingProblem, frame: HomoclinicFrame, t, slave, derivative=False):
    """Signed distance from Gamma_u(t) to W^s_loc, oriented like the splitting determinant.

    With ``derivative`` also returns d/dt, which by the envelope theorem is the
    normal component of dGamma_u/dt.
    """
    mans = problem.manifolds(slave)
    if derivative:
        q, dq = gamma_u(mans, frame, t, derivative=True)
    else:
        q = gamma_u(mans, frame, t)
    s0 = frame.z_s * _lam_pow(mans.log_lam1, t)
    s, P, dP = _foot(mans, q, s0, problem.ctx)
    # dGamma_s/dt points along -Phi_s' (log lam1 < 0)
    T = _unit((-dP[0], -dP[1]))
    G = _det(T, (q[0] - P[0], q[1] - P[1]))
    if not derivative:
        return G
    return G, _det(T, dq)


def _extremum(problem, frame, slave, t0, sign, max_iter=60):
    """max_t (sign=+1) or min_t (sign=-1) of the signed distance.

    Newton on dG/dt with a finite-difference second derivative; steps are
    clipped to a tenth of a period and reversed when the curvature has the
    wrong sign for the requested extremum.  The loop also stops once dG/dt
    no longer decreases at negligible step size (rounding noise).
    """
    ctx = problem.ctx
    dg = lambda t: signed_distance(problem, frame, t, slave, derivative=True)[1]
    h = mpfr(10) ** -12
    tol = ctx.eps() ** (mpfr(2) / 5)
    floor = ctx.eps() ** (mpfr(1) / 4)
    t = mpfr(t0)
    prev = None
    for _ in range(max_iter):
        g = dg(t)
        g2 = (dg(t + h) - dg(t - h)) / (2 * h)
        if g2 * sign >= 0:  # wrong curvature: climb (or descend) along the slope
            step = mpfr("0.05") * (1 if g * sign > 0 else -1)
        else:
            step = -g / g2
            # dG/dt at its noise floor: the value is already exact to O(g2 step^2)
            if prev is not None and abs(step) < floor and abs(g) > abs(prev) / 2:
                break
            prev = g
            lim = mpfr("0.1")
            if abs(step) > lim:
                step = lim if step > 0 else -lim
        t = t + step
        if abs(step) < tol:
            break
    else:
        raise ConvergenceError("extremum search in t did not converge")
    return signed_distance(problem, frame, t, slave), t


def exact_tangencies(problem: SplittingProblem, frame: HomoclinicFrame, seeds=None):
    """(nu_a, nu_b, t_a, t_b): slave values where max_t G = 0 and min_t G = 0."""
    ctx = problem.ctx
    with ctx.local():
        H = harmonics_real(problem, frame)
        if seeds is None:
            seeds = tangency_parameters(problem, frame)
        # Theta ~ R0 + 2 Re(R_-1 e^{-2 pi i t}): max at t = arg(R_-1)/(2 pi)
        tmax = gmpy2.atan2(H.Rm1.imag, H.Rm1.real) / (2 * gmpy2.const_pi())
        tmin = tmax + mpfr(1) / 2
        if tmin > mpfr(3) / 4:
            tmin -= 1
        res = {}
        for sign, t_guess in ((1, tmax), (-1, tmin)):
            state = {"t": t_guess}

            def M(nu):
                val, t = _extremum(problem, frame, nu, state["t"], sign)
                state["t"] = t
                return val
            # choose the seed whose harmonic equation matches this extremum
            cand = []
            for s in seeds:
                cand.append((abs(M(s)), s))
            cand.sort(key=lambda c: c[0])
            nu0 = cand[0][1]
            # stay inside the linear regime: steps must be small against the zone width
            dnu = abs(seeds[0] - seeds[1]) / 1000
            nu = _secant(M, nu0, nu0 + dnu, ctx, tol=ctx.eps() * 10)
            res[sign] = (nu, state["t"])
        (na, ta), (nb, tb) = res[1], res[-1]
        return na, nb, ta, tb


def width_tangency(problem: SplittingProblem, frame: HomoclinicFrame | None = None) -> WidthEstimate:
    with problem.ctx.local():
        if frame is None:
            frame = find_primary_homoclinic(problem)
        na, nb, ta, tb = exact_tangencies(problem, frame)
        Z = abs(na - nb)
        err = -float(problem.ctx.digits) + 3 - log10_abs(Z)
        return WidthEstimate(Z, "tangency", err, frame.slave,
                             {"nu_max": na, "nu_min": nb, "t_max": ta, "t_min": tb})

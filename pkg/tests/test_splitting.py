import gmpy2
import pytest
from gmpy2 import mpc, mpfr

from btzone.maps import MapFamily, make_stepper
from btzone.numerics import DomainError, PrecisionContext
from btzone.splitting import (SplittingProblem, exact_tangencies, find_primary_homoclinic,
                              fourier_coefficients, gamma_s, gamma_u, harmonic_complex,
                              harmonics_from_samples, harmonics_real, section_gap,
                              splitting_determinant, tangency_parameters, width_complex,
                              width_real, width_tangency)

CASES = {
    "henon": (MapFamily("henon"), "0.99"),
    "bogdanov": (MapFamily("bogdanov", "3"), "0.04"),
}


class Setup:
    def __init__(self, name, digits=60):
        fam, main = CASES[name]
        self.ctx = PrecisionContext(digits)
        self.problem = SplittingProblem(fam, main, self.ctx)
        with self.ctx.local():
            self.frame = find_primary_homoclinic(self.problem)
            self.mans = self.problem.manifolds(self.frame.slave)

    def theta(self, t):
        return splitting_determinant(self.problem, self.frame, t)


_setups = {}


@pytest.fixture(params=sorted(CASES))
def su(request):
    if request.param not in _setups:
        _setups[request.param] = Setup(request.param)
    s = _setups[request.param]
    with s.ctx.local():
        yield s


def test_curves_meet_at_t0(su):
    gs = gamma_s(su.mans, su.frame, mpfr(0))
    gu = gamma_u(su.mans, su.frame, mpfr(0))
    assert abs(gu[0] - gs[0]) + abs(gu[1] - gs[1]) < mpfr(10) ** -60


@pytest.mark.parametrize("t", ["0.3", "-0.45"])
def test_unit_shift_is_one_iterate(su, t):
    step = make_stepper(su.problem.family, su.mans.point)
    t = mpfr(t)
    for curve in (gamma_s, gamma_u):
        a = curve(su.mans, su.frame, t + 1)
        b = step(*curve(su.mans, su.frame, t))
        assert abs(a[0] - b[0]) + abs(a[1] - b[1]) < mpfr(10) ** -80


def test_real_parameter_gives_real_points(su):
    for curve in (gamma_s, gamma_u):
        x, y = curve(su.mans, su.frame, mpfr("0.2"))
        assert isinstance(x, type(mpfr(0))) and isinstance(y, type(mpfr(0)))


def test_strip_is_enforced(su):
    edge = gmpy2.const_pi() / abs(su.mans.log_lam1)
    with pytest.raises(DomainError):
        gamma_s(su.mans, su.frame, mpc(0, edge))
    with pytest.raises(DomainError):
        harmonic_complex(su.problem, su.frame, edge)


def test_theta_is_periodic(su):
    """Periodic up to O(Theta^2): the map transports the gap linearly only to first order."""
    scale = abs(harmonics_real(su.problem, su.frame).Rm1)
    for t in ("0.3", "0.71"):
        t = mpfr(t)
        assert abs(su.theta(t + 1) - su.theta(t)) < 1e-9 * scale


def test_two_zeros_per_period(su):
    """On the primary orbit Theta is dominated by the first harmonic."""
    vals = [su.theta(mpfr(j) / 32) for j in range(32)]
    changes = sum(1 for a, b in zip(vals, vals[1:] + vals[:1]) if a * b < 0)
    assert changes == 2


def test_theta_vanishes_at_origin(su):
    scale = abs(harmonics_real(su.problem, su.frame).Rm1)
    assert abs(su.theta(mpfr(0))) < mpfr(10) ** -20 * scale


def test_sample_formulas_on_constant():
    H = harmonics_from_samples(mpfr(3), mpfr(3), mpfr(3), mpfr(3))
    assert H.R0 == 3 and H.Rm1 == 0


def test_sample_formulas_on_pure_harmonic(ctx60):
    """Theta = 2 Re(c e^{-2 pi i t}) is recovered exactly."""
    c = mpc(mpfr("0.3"), mpfr("-1.7"))
    twopi = 2 * gmpy2.const_pi()
    th = lambda t: 2 * (c * mpc(gmpy2.cos(twopi * t), -gmpy2.sin(twopi * t))).real
    H = harmonics_from_samples(th(mpfr(0)), th(mpfr(1) / 4), th(mpfr(1) / 2), th(mpfr(-1) / 4))
    assert abs(H.Rm1 - c) < mpfr(10) ** -55
    assert abs(H.R0) < mpfr(10) ** -55


def test_plus_one_is_conjugate(su):
    H = harmonics_real(su.problem, su.frame)
    assert H.Rp1 == H.Rm1.conjugate()
    P = fourier_coefficients(su.problem, su.frame, n=16, kmax=1)
    assert abs(P[1] - P[-1].conjugate()) < mpfr(10) ** -40 * abs(P[-1])


def test_four_points_match_dft(su):
    """Aliasing and the O(Theta^2) defect of periodicity are both second order."""
    H = harmonics_real(su.problem, su.frame)
    P = fourier_coefficients(su.problem, su.frame, n=64, kmax=1)
    assert abs(H.Rm1 - P[-1]) < 1e-8 * abs(P[-1])


def test_harmonic_envelope(su):
    """|P_k| <= 10 sup|Theta(t + i r)| e^{-2 pi |k| r} on a line inside the strip."""
    r = su.problem.strip_halfwidth / 2
    sup = max(abs(su.theta(mpc(mpfr(j) / 16, r))) for j in range(16))
    P = fourier_coefficients(su.problem, su.frame, n=32, kmax=2)
    for k in range(-2, 3):
        bound = 10 * sup * gmpy2.exp(-2 * gmpy2.const_pi() * abs(k) * r)
        assert abs(P[k]) <= bound, k


def test_complex_cases_agree_at_switch(su):
    d = su.problem.strip_halfwidth / 3
    c1 = harmonic_complex(su.problem, su.frame, d, case=1).Rm1
    c2 = harmonic_complex(su.problem, su.frame, d, case=2).Rm1
    assert abs(c1 - c2) < 1e-5 * abs(c2)


def test_complex_small_delta_limit(su):
    """At delta -> 0 the four-point complex rule collapses onto the real one."""
    H = harmonics_real(su.problem, su.frame)
    C = harmonic_complex(su.problem, su.frame, mpfr("1e-30"), case=2)
    assert abs(C.Rm1 - H.Rm1) < 1e-9 * abs(H.Rm1)


def test_widths_positive_and_consistent(su):
    wr = width_real(su.problem, su.frame)
    wt = width_tangency(su.problem, su.frame)
    assert wr.value > 0 and wt.value > 0
    assert abs(wr.value / wt.value - 1) < 1e-6
    assert wt.error_exponent < -20


def test_width_independent_of_section(su):
    """Moving the section along W^s changes the frame, not the zone."""
    other = find_primary_homoclinic(su.problem, z_s=su.frame.z_s * mpfr("0.7"))
    a = width_tangency(su.problem, su.frame).value
    b = width_tangency(su.problem, other).value
    assert abs(a / b - 1) < mpfr(10) ** -30


def test_tangency_parameters_bracket_the_primary_orbit(su):
    hi, lo = tangency_parameters(su.problem, su.frame)
    assert lo < hi
    na, nb, _, _ = exact_tangencies(su.problem, su.frame)
    assert abs(abs(na - nb) / (hi - lo) - 1) < 1e-6


def test_henon_zone_straddles_conservative_slave():
    """The Henon map is area preserving at b = 1, where the zone must lie."""
    s = _setups.setdefault("henon", Setup("henon"))
    with s.ctx.local():
        na, nb, _, _ = exact_tangencies(s.problem, s.frame)
        assert min(na, nb) < 1 < max(na, nb)


def test_primary_slave_by_bisection():
    """Independent bracket-and-bisect on the section gap agrees with the secant solve."""
    s = _setups.setdefault("bogdanov", Setup("bogdanov"))
    with s.ctx.local():
        nu0, z_s = s.frame.slave, s.frame.z_s
        gap = lambda nu: section_gap(s.problem, nu, z_s)[2]
        h = mpfr(10) ** -8
        lo, hi = nu0 - h, nu0 + h
        glo = gap(lo)
        assert glo * gap(hi) < 0
        for _ in range(60):
            mid = (lo + hi) / 2
            gm = gap(mid)
            if gm * glo > 0:
                lo, glo = mid, gm
            else:
                hi = mid
        assert abs((lo + hi) / 2 - nu0) < 4 * h * mpfr(2) ** -60


def test_complex_width_is_close_to_real():
    s = _setups.setdefault("henon", Setup("henon"))
    with s.ctx.local():
        wr = width_real(s.problem, s.frame)
        wc = width_complex(s.problem, scale_hint=abs(wr.extra["Rm1"]))
        assert wc.value > 0
        assert abs(wc.value / wr.value - 1) < 1

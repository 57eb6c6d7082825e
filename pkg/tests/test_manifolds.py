import math

import gmpy2
import pytest
from gmpy2 import mpc, mpfr
from hypothesis import given, settings, strategies as st

from btzone.manifolds import (CapacityError, DivergenceError, compute_series, conjugacy_residual,
                              dump_coefficients, estimate_radius, eval_global_unstable,
                              eval_global_unstable_tangent, eval_local, eval_local_derivs, plan_domains)
from btzone.maps import MapFamily, ParamPoint, eval_map, jacobian_matrix, saddle
from btzone.numerics import DomainError, PrecisionContext

from conftest import slope

CASES = [
    (MapFamily("quadratic", "-3"), ("0.01", "-0.08")),
    (MapFamily("bogdanov", "3"), ("0.04", "0.1")),
    (MapFamily("henon"), ("0.95", "1.0")),
]


def P(main, slave):
    return ParamPoint(mpfr(main), mpfr(slave))


def test_order_one_is_eigenvector(ctx60):
    fam, p = CASES[0][0], P(*CASES[0][1])
    s = saddle(fam, p)
    (a, b), (c, d) = jacobian_matrix(fam, p, s.point)
    for branch, lam in [("stable", s.lam1), ("unstable", s.lam2)]:
        ser = compute_series(fam, p, branch, 10, s)
        v = (ser.xs[1], ser.ys[1])
        assert abs(a * v[0] + b * v[1] - lam * v[0]) < mpfr(10) ** -55
        assert abs(c * v[0] + d * v[1] - lam * v[1]) < mpfr(10) ** -55


def test_quadratic_first_equation(ctx60):
    """phi_1 + psi_1 = lam1 phi_1 from the first component of the map."""
    fam, p = CASES[0][0], P(*CASES[0][1])
    ser = compute_series(fam, p, "stable", 6)
    assert abs(ser.xs[1] + ser.ys[1] - ser.lam * ser.xs[1]) < mpfr(10) ** -55


def test_bad_arguments(ctx60):
    fam, p = CASES[0][0], P(*CASES[0][1])
    with pytest.raises(ValueError):
        compute_series(fam, p, "stable", 1)
    with pytest.raises(ValueError):
        compute_series(fam, p, "sideways", 5)
    with pytest.raises(ValueError):
        plan_domains(fam, p, 0)


@pytest.mark.parametrize("fam, p", CASES)
@pytest.mark.parametrize("branch", ["stable", "unstable"])
def test_conjugacy_residual_slope(fam, p, branch):
    ctx = PrecisionContext(150)
    with ctx.local():
        n = 14
        ser = compute_series(fam, P(*p), branch, n)
        rho = estimate_radius(compute_series(fam, P(*p), branch, 80).xs,
                              compute_series(fam, P(*p), branch, 80).ys)
        delta = min(rho, mpfr(1)) / 4
        zs = [delta / 8 * mpfr(8) ** (mpfr(i) / 7) for i in range(8)]
        res = [conjugacy_residual(ser, z) for z in zs]
        s = slope([math.log(float(z)) for z in zs], [float(gmpy2.log(r)) for r in res])
        assert s >= n - 1


def test_scaling_covariance(ctx60):
    fam, p = CASES[1][0], P(*CASES[1][1])
    a = compute_series(fam, p, "stable", 12)
    b = compute_series(fam, p, "stable", 12, scale=mpfr(3))
    for k in range(1, 13):
        assert abs(b.xs[k] - a.xs[k] * 3 ** k) <= abs(b.xs[k]) * mpfr(10) ** -55
    z = mpfr("0.01")
    pa, pb = eval_local(a, z, check=False), eval_local(b, z / 3, check=False)
    assert abs(pa[0] - pb[0]) + abs(pa[1] - pb[1]) < mpfr(10) ** -55


def test_eval_local_basics(ctx60):
    fam, p = CASES[2][0], P(*CASES[2][1])
    ser = compute_series(fam, p, "stable", 20)
    assert eval_local(ser, mpfr(0)) == ser.base
    with pytest.raises(DomainError):
        eval_local(ser, ser.radius * 2)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 2 * math.pi))
def test_conjugate_symmetry(theta):
    ctx = PrecisionContext(40)
    with ctx.local():
        fam, p = CASES[0][0], P(*CASES[0][1])
        ser = compute_series(fam, p, "unstable", 24)
        z = mpc(gmpy2.cos(mpfr(theta)), gmpy2.sin(mpfr(theta))) * mpfr("0.05")
        w, wc = eval_local(ser, z), eval_local(ser, z.conjugate())
        assert abs(w[0].conjugate() - wc[0]) + abs(w[1].conjugate() - wc[1]) < mpfr(10) ** -60


def test_derivative_matches_difference(ctx60):
    fam, p = CASES[1][0], P(*CASES[1][1])
    ser = compute_series(fam, p, "unstable", 30)
    z, h = mpfr("0.02"), mpfr(10) ** -25
    (x, y), (dx, dy) = eval_local_derivs(ser, z, 1)
    xp, yp = eval_local(ser, z + h)
    xm, ym = eval_local(ser, z - h)
    assert abs((xp - xm) / (2 * h) - dx) < mpfr(10) ** -40


def test_global_unstable_depth_independence():
    ctx = PrecisionContext(80)
    with ctx.local():
        fam, p = CASES[1][0], P("0.04", "0.1")
        plan = plan_domains(fam, p, mpfr(10) ** -90)
        ser = compute_series(fam, p, "unstable", plan.n_unstable, radius=plan.delta_u)
        z = plan.delta_u * 40
        m = math.ceil(math.log(40) / math.log(float(ser.lam)))
        a = eval_global_unstable(ser, z, m)
        b = eval_global_unstable(ser, z, m + 1)
        assert abs(a[0] - b[0]) + abs(a[1] - b[1]) < mpfr(10) ** -70
        assert eval_global_unstable(ser, plan.delta_u / 2, 0) == eval_local(ser, plan.delta_u / 2)
        (q, dq) = eval_global_unstable_tangent(ser, z, m)
        assert abs(q[0] - a[0]) < mpfr(10) ** -75


def test_global_unstable_divergence(ctx60):
    fam, p = CASES[0][0], P(*CASES[0][1])
    ser = compute_series(fam, p, "unstable", 20, radius=mpfr("0.001"))
    with pytest.raises(DivergenceError):
        eval_global_unstable(ser, mpfr(-50), 60, box=10)


def test_homoclinic_excursion_returns():
    """The unstable branch of the Bogdanov map comes back near the saddle."""
    ctx = PrecisionContext(40)
    with ctx.local():
        fam, p = MapFamily("bogdanov", "3"), P("0.01", "0.0257142857")
        ser = compute_series(fam, p, "unstable", 40, radius=mpfr("1e-4"))
        x, y = eval_local(ser, mpfr("1e-4"))
        step = eval_map
        dmin, far = None, False
        for _ in range(3000):
            x, y = step(fam, p, (x, y))
            r = abs(x) + abs(y)
            far = far or r > mpfr("0.005")
            if far:
                dmin = r if dmin is None or r < dmin else dmin
        assert far and dmin < mpfr("1e-3")


def test_plan_meets_target():
    ctx = PrecisionContext(60)
    with ctx.local():
        fam, p = CASES[0][0], P(*CASES[0][1])
        target = mpfr(10) ** -50
        plan = plan_domains(fam, p, target)
        st_ = compute_series(fam, p, "stable", plan.n_stable, radius=plan.delta_s)
        un = compute_series(fam, p, "unstable", plan.n_unstable, radius=plan.delta_u)
        assert conjugacy_residual(st_, plan.delta_s) < target * 100
        assert conjugacy_residual(un, plan.delta_u) < target * 100


def test_more_terms_never_worse():
    ctx = PrecisionContext(80)
    with ctx.local():
        fam, p = CASES[1][0], P(*CASES[1][1])
        z = mpfr("0.02")
        r = [conjugacy_residual(compute_series(fam, p, "stable", n), z) for n in (10, 20, 40)]
        assert r[0] >= r[1] >= r[2]


def test_plan_capacity(ctx60):
    fam, p = CASES[0][0], P(*CASES[0][1])
    with pytest.raises(CapacityError):
        plan_domains(fam, p, mpfr(10) ** -80, n_cap=20)


def test_unstable_tail_decreasing(ctx60):
    fam, p = CASES[2][0], P(*CASES[2][1])
    ser = compute_series(fam, p, "unstable", 60)
    roots = [float((abs(ser.xs[k]) + abs(ser.ys[k])) ** (mpfr(1) / k)) for k in range(30, 61)]
    assert roots[-1] < roots[0]
    assert slope(list(range(len(roots))), roots) < 0


def test_determinant_transport(ctx60):
    from btzone.variational import jacobian_along_stable
    for fam, p in CASES:
        p = P(*p)
        ser = compute_series(fam, p, "stable", 30)
        J = jacobian_along_stable(ser)
        for z in (mpfr("0.001"), mpfr("-0.002"), mpfr("0.0035")):
            (a, b), (c, d) = jacobian_matrix(fam, p, eval_local(ser, z, check=False))
            assert abs(J(z) - (a * d - b * c)) < mpfr(10) ** -(ctx60.digits - 5)


def test_dump(tmp_path, ctx60):
    fam, p = CASES[0][0], P(*CASES[0][1])
    ser = compute_series(fam, p, "stable", 5)
    path = tmp_path / "stable.csv"
    dump_coefficients(ser, path, 20)
    lines = path.read_text().splitlines()
    assert lines[0] == "order,x,y" and len(lines) == 7

"""Asymptotic expansions of the normalised width and their validation.

Two bases are supported, both written in the scaling variable x (mu^(1/4),
a^(1/2) or |1 - at|^(1/4)):

* polynomial  f_i(x) = x^i
* dulac       1, x, x^2 log m, x^2, x^3, x^4 log m, x^4, ...   (m the main parameter)

The logarithm in the Dulac terms is log m by default; ``log_of="x"`` uses
log x instead, which rescales every log-bearing coefficient by 1/p.

Coefficients come from exact interpolation, alpha = A^-1 w, solved by
Gaussian elimination with partial pivoting at the working precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .maps import MapFamily, leading_width, main_from_scaling
from .numerics import DomainError, NumericsError, log10_abs

BASES = ("polynomial", "dulac")


class IllConditionedError(NumericsError):
    pass


@dataclass(frozen=True)
class AsymptoticSequence:
    """Basis choice plus how the data enter the fit.

    ``target`` is "log" when log S is expanded (quadratic, bogdanov) and
    "value" when S itself is (henon).  ``power`` is the exponent p with
    x = |main-ish|^p, used to express slopes against log(main).
    ``log_of`` picks the logarithm in the Dulac terms: "main" or "x".
    """

    kind: str
    family: MapFamily
    target: str = "log"
    log_of: str = "main"

    def __post_init__(self):
        if self.kind not in BASES:
            raise ValueError(f"unknown basis {self.kind!r}")
        if self.target not in ("log", "value"):
            raise ValueError(f"unknown target {self.target!r}")
        if self.log_of not in ("main", "x"):
            raise ValueError(f"unknown log convention {self.log_of!r}")

    @classmethod
    def for_family(cls, family: MapFamily) -> "AsymptoticSequence":
        if family.kind == "henon":
            return cls("polynomial", family, "value")
        return cls("dulac", family, "log")

    @property
    def power(self) -> mpfr:
        return mpfr(1) / 2 if self.family.kind == "bogdanov" else mpfr(1) / 4

    def log_main(self, x):
        """log of the quantity whose power is x: mu, a or |1 - at|."""
        return gmpy2.log(x) / self.power

    def log_factor(self, x):
        """The logarithm multiplying the log-bearing basis functions."""
        return self.log_main(x) if self.log_of == "main" else gmpy2.log(x)

    def x_exponent(self, i: int):
        """(power of x, carries log) for basis index i."""
        if self.kind == "polynomial":
            return i, False
        n, r = divmod(i, 3)
        return (2 * n + r, False) if r < 2 else (2 * n + 2, True)

    def f(self, i: int, x, logm=None):
        e, has_log = self.x_exponent(i)
        v = x ** e
        if has_log:
            v = v * (self.log_factor(x) if logm is None else logm)
        return v

    def main_exponent(self, i: int):
        """Exponent of the main parameter carried by f_i (the log factor ignored)."""
        return self.x_exponent(i)[0] * self.power

    def label(self, i: int) -> str:
        e, has_log = self.x_exponent(i)
        var = {"quadratic": "mu", "bogdanov": "a", "henon": "|at-1|"}[self.family.kind]
        p = e * self.power
        if e == 0:
            s = "1"
        else:
            frac = f"{p.as_integer_ratio()[0]}/{p.as_integer_ratio()[1]}" if p != int(p) else str(int(p))
            s = f"{var}^{{{frac}}}"
        if has_log:
            s = ("" if e == 0 else s) + f"log {var if self.log_of == 'main' else 'x'}"
        return s

    def stream_name(self, i: int) -> str:
        """Table-style coefficient name: M_k/N_k, A_k/B_k or At_k."""
        if self.kind == "polynomial":
            return f"At_{i}"
        e, has_log = self.x_exponent(i)
        big, small = ("M", "N") if self.family.kind == "quadratic" else ("A", "B")
        if has_log:
            return f"{small}_{e // 2}"
        return f"{big}_{e}"

    def index_of(self, name: str) -> int:
        for i in range(10_000):
            if self.stream_name(i) == name:
                return i
        raise KeyError(name)

    def data_value(self, log_s):
        return log_s if self.target == "log" else gmpy2.exp(log_s)


@dataclass
class WidthNode:
    x: mpfr
    log_s: mpfr
    width: mpfr
    error_exponent: float = float("nan")


@dataclass
class WidthDataset:
    family: MapFamily
    nodes: list
    digits: int
    method: str = "tangency"
    c: str = ""
    d: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        xs = [n.x for n in self.nodes]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("dataset nodes must have strictly increasing x")

    @property
    def xs(self):
        return [n.x for n in self.nodes]

    def subset(self, idx) -> "WidthDataset":
        return WidthDataset(self.family, [self.nodes[i] for i in idx], self.digits, self.method,
                            self.c, self.d, dict(self.meta))


@dataclass
class ExpansionCoefficients:
    sequence: AsymptoticSequence
    alphas: list
    residual: mpfr = mpfr(0)
    condition: float = float("nan")

    def streams(self) -> dict:
        return {self.sequence.stream_name(i): a for i, a in enumerate(self.alphas)}

    def __getitem__(self, name: str):
        return self.alphas[self.sequence.index_of(name)]

    def evaluate(self, x, terms: int | None = None):
        n = len(self.alphas) if terms is None else terms
        return sum((self.alphas[i] * self.sequence.f(i, x) for i in range(n)), mpfr(0))

    def records(self):
        """(index, basis label, value) rows for the coefficients file."""
        return [(i, self.sequence.label(i), a) for i, a in enumerate(self.alphas)]


def normalize_width(family: MapFamily, main, width) -> mpfr:
    if not width > 0:
        raise DomainError("width must be positive")
    return mpfr(width) / leading_width(family, main)


def build_matrix(seq: AsymptoticSequence, xs):
    """Row j holds f_0(x_j), ..., f_{n-1}(x_j)."""
    n = len(xs)
    if len(set(xs)) != n:
        raise IllConditionedError("duplicate nodes make the interpolation matrix singular")
    rows = []
    for x in xs:
        lm = seq.log_factor(x)
        rows.append([seq.f(i, x, lm) for i in range(n)])
    return rows


def _lu(A):
    """In-place style LU with partial pivoting; returns (LU, perm)."""
    n = len(A)
    M = [list(r) for r in A]
    perm = list(range(n))
    scale = max(abs(v) for r in M for v in r)
    floor = scale * mpfr(2) ** (-gmpy2.get_context().precision + 8)
    for k in range(n):
        p = max(range(k, n), key=lambda i: abs(M[i][k]))
        if abs(M[p][k]) <= floor:
            raise IllConditionedError(f"pivot underflow at order {k}")
        if p != k:
            M[k], M[p] = M[p], M[k]
            perm[k], perm[p] = perm[p], perm[k]
        piv = M[k][k]
        rk = M[k]
        for i in range(k + 1, n):
            ri = M[i]
            f = ri[k] / piv
            if f == 0:
                continue
            ri[k] = f
            for j in range(k + 1, n):
                ri[j] -= f * rk[j]
    return M, perm


def _lu_solve(LU, perm, b):
    n = len(LU)
    y = [b[perm[i]] for i in range(n)]
    for i in range(n):
        r = LU[i]
        acc = y[i]
        for j in range(i):
            acc -= r[j] * y[j]
        y[i] = acc
    for i in range(n - 1, -1, -1):
        r = LU[i]
        acc = y[i]
        for j in range(i + 1, n):
            acc -= r[j] * y[j]
        y[i] = acc / r[i]
    return y


def condition_estimate(A, LU=None, perm=None) -> float:
    """Infinity-norm condition number via the explicit inverse."""
    n = len(A)
    if LU is None:
        LU, perm = _lu(A)
    norm_a = max(sum(abs(v) for v in r) for r in A)
    cols = []
    for j in range(n):
        e = [mpfr(0)] * n
        e[j] = mpfr(1)
        cols.append(_lu_solve(LU, perm, e))
    norm_inv = max(sum(abs(cols[j][i]) for j in range(n)) for i in range(n))
    return float(norm_a * norm_inv)


def solve_coefficients(A, w, seq: AsymptoticSequence, with_condition=False) -> ExpansionCoefficients:
    LU, perm = _lu(A)
    alpha = _lu_solve(LU, perm, list(w))
    res = max(abs(sum((a * f for a, f in zip(alpha, row)), mpfr(0)) - wj) for row, wj in zip(A, w))
    cond = condition_estimate(A, LU, perm) if with_condition else float("nan")
    return ExpansionCoefficients(seq, alpha, res, cond)


def fit(dataset: WidthDataset, seq: AsymptoticSequence | None = None, size: int | None = None,
        with_condition=False) -> ExpansionCoefficients:
    """Interpolate the first ``size`` nodes (all by default)."""
    seq = seq or AsymptoticSequence.for_family(dataset.family)
    nodes = dataset.nodes if size is None else dataset.nodes[:size]
    xs = [n.x for n in nodes]
    w = [seq.data_value(n.log_s) for n in nodes]
    return solve_coefficients(build_matrix(seq, xs), w, seq, with_condition)


def analytic_first_log_coefficient(family: MapFamily) -> mpfr:
    """N_1(gamma) = -(6(gamma-2)/(7 sqrt 2))^2 or B_1(gt) = -(6 gt/7)^2."""
    g = family.gamma
    if family.kind == "quadratic":
        return -(6 * (g - 2) / (7 * gmpy2.sqrt(2))) ** 2
    if family.kind == "bogdanov":
        return -(6 * g / 7) ** 2
    raise DomainError("the henon expansion has no logarithmic terms")


def first_log_name(family: MapFamily) -> str:
    return {"quadratic": "N_1", "bogdanov": "B_1"}[family.kind]


# -- validation protocols -----------------------------------------------------------------

@dataclass
class ExtrapolabilityResult:
    slope: float
    expected: float
    terms: int
    points: list  # (log main, log |residual|)

    @property
    def relative_error(self) -> float:
        return abs(self.slope - self.expected) / abs(self.expected)


def _lsq_slope(pts):
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    return float(np.polyfit(xs, ys, 1)[0])


def extrapolability_test(coeffs: ExpansionCoefficients, holdout: WidthDataset,
                         terms: int) -> ExtrapolabilityResult:
    """Residuals of the ``terms``-term truncation on held-out nodes.

    The slope of log|residual| against log(main) should approach the main-parameter
    exponent of the first omitted basis function.
    """
    if not holdout.nodes:
        raise ValueError("holdout set is empty")
    seq = coeffs.sequence
    pts = []
    for n in holdout.nodes:
        r = coeffs.evaluate(n.x, terms) - seq.data_value(n.log_s)
        if r == 0:
            continue
        pts.append((float(seq.log_main(n.x)), float(gmpy2.log(abs(r)))))
    if len(pts) < 2:
        raise ValueError("fewer than two non-degenerate holdout residuals")
    return ExtrapolabilityResult(_lsq_slope(pts), float(seq.main_exponent(terms)), terms, pts)


def perturbation(seed: int, trial: int, n: int):
    """Counter-based uniform draws in [-1, 1]: Philox keyed by (seed, trial)."""
    bitgen = np.random.Philox(key=[seed, trial])
    return np.random.Generator(bitgen).uniform(-1.0, 1.0, n)


@dataclass
class StabilityResult:
    N: int
    relative_errors: list  # per coefficient, max over trials

    def digits(self, i: int) -> float:
        e = self.relative_errors[i]
        return -math.log10(e) if e > 0 else float("inf")


def stability_test(dataset: WidthDataset, N: int, trials: int = 3, seed: int = 0,
                   seq: AsymptoticSequence | None = None, size: int | None = None,
                   reference: ExpansionCoefficients | None = None) -> StabilityResult:
    """Add u 10^-N (u uniform in [-1, 1]) to every log S and refit."""
    if N >= dataset.digits + 30:
        raise ValueError("perturbation below the payload precision")
    seq = seq or AsymptoticSequence.for_family(dataset.family)
    ref = reference or fit(dataset, seq, size)
    nodes = dataset.nodes if size is None else dataset.nodes[:size]
    A = build_matrix(seq, [n.x for n in nodes])
    LU, perm = _lu(A)
    scale = mpfr(10) ** (-N)
    worst = [mpfr(0)] * len(ref.alphas)
    for trial in range(trials):
        u = perturbation(seed, trial, len(nodes))
        w = [seq.data_value(n.log_s + mpfr(float(ui)) * scale) for n, ui in zip(nodes, u)]
        alpha = _lu_solve(LU, perm, w)
        for i, (a, r) in enumerate(zip(alpha, ref.alphas)):
            e = abs((a - r) / r) if r != 0 else abs(a)
            if e > worst[i]:
                worst[i] = e
    return StabilityResult(N, [float(e) if e > 0 else 0.0 for e in worst])


def splitting_constant_check(coeffs: ExpansionCoefficients, reference) -> float:
    """-log10 |(Theta - exp(A_0)) / Theta|, with A_0 the constant term."""
    ref = mpfr(reference)
    a0 = coeffs.alphas[0]
    theta = gmpy2.exp(a0) if coeffs.sequence.target == "log" else a0
    err = abs((ref - theta) / ref)
    return float("inf") if err == 0 else -log10_abs(err)


@dataclass
class GevreyReport:
    M: float
    r: float
    factorial_weight: float  # exponent b in |alpha_k| ~ (k!)^b r^-k
    sub_factorial: bool


def gevrey_diagnostic(alphas) -> GevreyReport:
    """Fit log|alpha_k| ~ c + b log k! - k log r; report (M, r)."""
    vals = [(k, float(gmpy2.log(abs(mpfr(a))))) for k, a in enumerate(alphas) if a != 0 and k >= 1]
    if len(vals) < 10:
        raise ValueError("need at least 10 nonzero coefficients")
    ks = np.array([k for k, _ in vals], dtype=float)
    ls = np.array([v for _, v in vals])
    lf = np.array([math.lgamma(k + 1) for k in ks])
    X = np.column_stack([np.ones_like(ks), lf, ks])
    (c, b, slope), *_ = np.linalg.lstsq(X, ls, rcond=None)
    sub = b < 0.5
    # with the factorial weight pinned to 1, r from the remaining linear trend
    (c1, s1), *_ = np.linalg.lstsq(np.column_stack([np.ones_like(ks), ks]), ls - lf, rcond=None)
    r = math.exp(-s1)
    M = max(math.exp(l + k * math.log(r) - math.lgamma(k + 1)) for k, l in vals)
    return GevreyReport(M, math.inf if sub else r, float(b), bool(sub))


def main_of(family: MapFamily, x):
    return main_from_scaling(family, x)

"""Arbitrary-precision scalars on top of gmpy2 (MPFR/MPC).

Every computation job owns a :class:`PrecisionContext`; numbers are plain
``gmpy2.mpfr`` / ``gmpy2.mpc`` values created while that context is active.
Nothing here touches a process-wide precision setting: ``ctx.local()`` only
changes the gmpy2 context of the current thread for the duration of a
``with`` block.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal

import gmpy2
from gmpy2 import mpc, mpfr

BigReal = mpfr
BigComplex = mpc

LOG2_10 = math.log2(10)

_DECIMAL_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


class NumericsError(ArithmeticError):
    pass


class ParseError(NumericsError, ValueError):
    pass


class DomainError(NumericsError, ValueError):
    """Argument outside the region where a function is defined (branch cuts etc.)."""


@dataclass(frozen=True)
class PrecisionContext:
    """Working precision: ``digits`` reported digits plus ``guard`` hidden ones."""

    digits: int
    guard: int = 30

    def __post_init__(self):
        if self.digits < 30:
            raise ValueError(f"digits must be >= 30, got {self.digits}")
        if self.guard < 10:
            raise ValueError(f"guard must be >= 10, got {self.guard}")

    @property
    def total_digits(self) -> int:
        return self.digits + self.guard

    @property
    def bits(self) -> int:
        return int(math.ceil(self.total_digits * LOG2_10)) + 4

    def local(self):
        """Context manager activating this precision for the current thread."""
        return gmpy2.context(gmpy2.get_context(), precision=self.bits,
                             real_prec=self.bits, imag_prec=self.bits)

    def mpf(self, value) -> mpfr:
        if isinstance(value, str):
            return parse_decimal(value, self)
        return mpfr(value, self.bits)

    def eps(self) -> mpfr:
        """Unit roundoff at the working precision, 10^-(D+g)."""
        return mpfr(10, self.bits) ** (-self.total_digits)

    def with_digits(self, digits: int) -> "PrecisionContext":
        return PrecisionContext(digits, self.guard)


def parse_decimal(text: str, ctx: PrecisionContext) -> mpfr:
    """Read a decimal string (optional sign and exponent) at ``ctx`` precision."""
    s = text.strip()
    if not _DECIMAL_RE.match(s):
        raise ParseError(f"malformed decimal: {text!r}")
    x = mpfr(s, ctx.bits)
    if x == 0:
        return mpfr(0, ctx.bits)  # drop a negative sign on zero
    return x


def _render(mant: str, exp10: int, sign: str) -> str:
    mant = mant.rstrip("0") or "0"
    head, tail = mant[0], mant[1:]
    body = head + ("." + tail if tail else "")
    return f"{sign}{body}e{exp10}"


def format_decimal(x, digits: int | None = None) -> str:
    """Decimal string for ``x``.

    With ``digits`` the value is rounded to that many significant digits.
    Without it the shortest string that parses back to exactly ``x`` (at the
    precision of ``x``) is returned.
    """
    x = mpfr(x) if not isinstance(x, mpfr) else x
    if x == 0:
        return "0"
    if not gmpy2.is_finite(x):
        raise DomainError(f"cannot format non-finite value {x}")
    sign = "-" if x < 0 else ""
    prec = x.precision
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        ax = abs(x)  # exact at the value's own precision

    def render(n):
        if n == 1:  # gmpy2 renders at least two digits; round the full expansion instead
            mant, exp, _ = ax.digits(10, 0)
            d = Decimal(f"0.{mant}").quantize(Decimal("0.1"), rounding=ROUND_HALF_EVEN)
            if d == 1:
                return _render("1", exp, sign)
            return _render(str(d)[2:], exp - 1, sign)
        mant, exp, _ = ax.digits(10, n)
        return _render(mant, exp - 1, sign)

    if digits is not None:
        return render(digits)
    hi = int(math.ceil(prec / LOG2_10)) + 2
    lo = 1
    while lo < hi:
        mid = (lo + hi) // 2
        if mpfr(render(mid), prec) == x:
            hi = mid
        else:
            lo = mid + 1
    return render(lo)


def format_complex(z, digits: int | None = None) -> str:
    z = mpc(z)
    return f"{format_decimal(z.real, digits)}{'' if z.imag < 0 else '+'}{format_decimal(z.imag, digits)}j"


def complex_power(z, c) -> mpc:
    """Principal branch ``exp(c * Log z)``; the closed negative real axis is excluded."""
    z = mpc(z)
    if z == 0:
        raise DomainError("complex_power: z = 0")
    if z.imag == 0 and z.real < 0:
        raise DomainError("complex_power: z on the branch cut (-inf, 0]")
    return gmpy2.exp(c * gmpy2.log(z))


def pi() -> mpfr:
    return gmpy2.const_pi()


def log10_abs(x) -> float:
    """Float log10 |x|, safe for values far outside double range."""
    ax = abs(x)
    if ax == 0:
        return -math.inf
    return float(gmpy2.log10(mpfr(ax)))

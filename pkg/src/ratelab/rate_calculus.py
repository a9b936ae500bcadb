"""Rate objects, the counterfunction DSL and the basic quantitative lemmas.

Numbers flowing through rate formulas are kept exact where possible: epsilon
values and constant moduli are converted to :class:`fractions.Fraction`
(floats convert exactly to their binary value), integer ceilings are taken
last, and logarithms with base in (0, 1) are resolved by exact power
comparison rather than a floating-point quotient.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Callable, Optional, Sequence

import mpmath
import numpy as np

from .errors import ContractError, InputError

# precision for the natural log inside sigma1; ln(2B/eps) is never an
# integer for rational arguments other than 1, so 60 digits settle the ceiling
_LN_DPS = 60


def exact(x) -> Fraction:
    """Exact rational value of ``x`` (ints, Fractions, floats, "p/q" strings)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise InputError("boolean is not a number")
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"cannot parse {x!r} as a rational") from exc
    xf = float(x)
    if math.isnan(xf) or math.isinf(xf):
        raise InputError(f"non-finite value {x!r}")
    return Fraction(xf)


def positive(x, name: str = "eps") -> Fraction:
    q = exact(x)
    if q <= 0:
        raise InputError(f"{name} must be positive, got {x}")
    return q


def ceil_clamped(x) -> int:
    """``max{0, ceil(x)}``; exact for rationals."""
    if isinstance(x, float) and math.isnan(x):
        raise InputError("ceil of NaN")
    if isinstance(x, float) and math.isinf(x):
        raise InputError("ceil of infinity")
    return max(0, math.ceil(x))


def ceil_ln(x) -> int:
    """``max{0, ceil(ln x)}`` for ``x > 0``."""
    q = positive(x, "log argument")
    if q <= 1:
        return 0
    with mpmath.workdps(_LN_DPS):
        v = mpmath.log(mpmath.mpf(q.numerator) / q.denominator)
        return max(0, int(mpmath.ceil(v)))


def ceil_log(base, target) -> int:
    """``max{0, ceil(log_base(target))}`` for ``base`` in (0, 1).

    Equivalently the least ``M >= 0`` with ``base**M <= target``.  A float
    estimate is corrected by exact comparison of rational powers.
    """
    base = exact(base)
    target = positive(target, "log target")
    if not 0 < base < 1:
        raise InputError(f"log base {base} must lie in (0, 1)")
    if target >= 1:
        return 0
    est = math.log(target) / math.log(base)
    m = max(0, math.ceil(est))
    if m > 4096:
        # exact rational powers get expensive; settle on a 60-digit quotient
        with mpmath.workdps(_LN_DPS):
            t = mpmath.mpf(target.numerator) / target.denominator
            b = mpmath.mpf(base.numerator) / base.denominator
            return max(0, int(mpmath.ceil(mpmath.log(t) / mpmath.log(b))))
    while m > 0 and base ** (m - 1) <= target:
        m -= 1
    while base**m > target:
        m += 1
    return m


# --------------------------------------------------------------------------
# counterfunctions


class Counterfunction:
    """Total monotone ``f: N -> N`` written in the prefix DSL.

    Grammar: ``const K`` | ``affine A C`` | ``pow P C`` | ``max <cf> <cf>``.
    """

    def __call__(self, n: int) -> int:  # pragma: no cover - abstract
        raise NotImplementedError

    def dsl(self) -> str:  # pragma: no cover - abstract
        raise NotImplementedError

    def __str__(self):
        return self.dsl()


@dataclass(frozen=True)
class Const(Counterfunction):
    k: int

    def __call__(self, n):
        return self.k

    def dsl(self):
        return f"const {self.k}"


@dataclass(frozen=True)
class Affine(Counterfunction):
    a: int
    c: int

    def __call__(self, n):
        return self.a * n + self.c

    def dsl(self):
        return f"affine {self.a} {self.c}"


@dataclass(frozen=True)
class Power(Counterfunction):
    p: int
    c: int

    def __call__(self, n):
        return n**self.p + self.c

    def dsl(self):
        return f"pow {self.p} {self.c}"


@dataclass(frozen=True)
class Max(Counterfunction):
    left: Counterfunction
    right: Counterfunction

    def __call__(self, n):
        return max(self.left(n), self.right(n))

    def dsl(self):
        return f"max {self.left.dsl()} {self.right.dsl()}"


def _nat(tok: str) -> int:
    if not tok.isdigit():
        raise InputError(f"expected a nonnegative integer, got {tok!r}")
    return int(tok)


def parse_counterfunction(text: str) -> Counterfunction:
    tokens = text.split()
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(tokens):
            raise InputError(f"truncated counterfunction {text!r}")
        tok = tokens[pos]
        pos += 1
        return tok

    def expr():
        head = take()
        if head == "const":
            return Const(_nat(take()))
        if head == "affine":
            return Affine(_nat(take()), _nat(take()))
        if head == "pow":
            return Power(_nat(take()), _nat(take()))
        if head == "max":
            return Max(expr(), expr())
        raise InputError(f"unknown counterfunction head {head!r}")

    out = expr()
    if pos != len(tokens):
        raise InputError(f"trailing tokens in counterfunction {text!r}")
    return out


def as_counterfunction(f) -> Callable[[int], int]:
    return parse_counterfunction(f) if isinstance(f, str) else f


# --------------------------------------------------------------------------
# epsilon-rate DSL (CLI configs): zero | const K | inv C | invpow C P |
# offset K <r> | max <r> <r>.  ``inv C`` is ceil(C/eps), ``invpow C P`` is
# ceil(C/eps**P), ``offset K r`` is max{0, r(eps) - K}.


@dataclass(frozen=True)
class EpsRateExpr:
    head: str
    args: tuple

    def __call__(self, eps) -> int:
        eps = positive(eps)
        h, a = self.head, self.args
        if h == "zero":
            return 0
        if h == "const":
            return a[0]
        if h == "inv":
            return ceil_clamped(exact(a[0]) / eps)
        if h == "invpow":
            return ceil_clamped(exact(a[0]) / eps ** a[1])
        if h == "offset":
            return max(0, a[1](eps) - a[0])
        if h == "max":
            return max(a[0](eps), a[1](eps))
        raise InputError(f"unknown rate head {h!r}")  # pragma: no cover

    def dsl(self) -> str:
        parts = [self.head] + [x.dsl() if isinstance(x, EpsRateExpr) else str(x) for x in self.args]
        return " ".join(parts)


def parse_eps_rate(text: str) -> EpsRateExpr:
    tokens = text.split()
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(tokens):
            raise InputError(f"truncated rate {text!r}")
        pos += 1
        return tokens[pos - 1]

    def expr():
        head = take()
        if head == "zero":
            return EpsRateExpr("zero", ())
        if head == "const":
            return EpsRateExpr("const", (_nat(take()),))
        if head == "inv":
            return EpsRateExpr("inv", (exact(take()),))
        if head == "invpow":
            return EpsRateExpr("invpow", (exact(take()), _nat(take())))
        if head == "offset":
            return EpsRateExpr("offset", (_nat(take()), expr()))
        if head == "max":
            return EpsRateExpr("max", (expr(), expr()))
        raise InputError(f"unknown rate head {head!r}")

    out = expr()
    if pos != len(tokens):
        raise InputError(f"trailing tokens in rate {text!r}")
    return out


# --------------------------------------------------------------------------
# rate objects


@dataclass(frozen=True, eq=False)
class CauchyRate:
    rho: Callable
    desc: str = ""

    def __call__(self, eps) -> int:
        return int(self.rho(positive(eps)))


@dataclass(frozen=True, eq=False)
class MetaRate:
    phi: Callable
    f_independent: bool = False
    desc: str = ""

    def __call__(self, eps, f) -> int:
        return int(self.phi(positive(eps), f))


class ShiftedMetaRate:
    """``theta(eps, f, N)``; results are memoized per ``(eps, f, N)`` when ``f`` is hashable."""

    def __init__(self, theta: Callable, monotone_in_N: bool = False, desc: str = "", f_independent: bool = False):
        self.theta = theta
        self.monotone_in_N = monotone_in_N
        self.f_independent = f_independent
        self.desc = desc
        self._memo: dict = {}
        self._lock = threading.Lock()

    def __call__(self, eps, f, N: int) -> int:
        eps = positive(eps)
        key = (eps, None if self.f_independent else f, N)
        try:
            hash(key)
        except TypeError:
            return int(self.theta(eps, f, N))
        with self._lock:
            if key in self._memo:
                return self._memo[key]
        value = int(self.theta(eps, f, N))
        with self._lock:
            self._memo[key] = value
        return value


@dataclass(frozen=True, eq=False)
class DivergenceRate:
    """``A`` with ``sum_{i <= A(k)} lam_i >= k``."""

    A: Callable[[int], int]
    monotone: bool = False
    desc: str = ""

    def __call__(self, k) -> int:
        return int(self.A(int(k)))

    def validate(self, lam: Callable[[int], float], ks: Sequence[int]) -> Optional[int]:
        """Return the first ``k`` for which the partial sum falls short, else None."""
        ks = sorted(ks)
        ups = [self(k) for k in ks]
        sums = np.cumsum([float(lam(i)) for i in range(max(ups, default=-1) + 1)])
        for k, upto in zip(ks, ups):
            if sums[upto] < k - 1e-9:
                return k
        return None


@dataclass(frozen=True, eq=False)
class ProductRate:
    """``A'(m, eps)`` with ``prod_{i=m}^{A'(m, eps)} (1 - lam_i) <= eps`` for ``eps`` in (0, 1]."""

    A: Callable
    desc: str = ""

    def __call__(self, m: int, eps) -> int:
        return int(self.A(int(m), positive(eps)))

    def validate(self, lam: Callable[[int], float], ms: Sequence[int], eps_grid: Sequence) -> Optional[tuple]:
        for m in ms:
            for eps in eps_grid:
                prod = 1.0
                for i in range(m, self(m, eps) + 1):
                    prod *= 1.0 - float(lam(i))
                if prod > float(eps) + 1e-12:
                    return (m, eps)
        return None


def counterfunction_rate(expr: EpsRateExpr) -> CauchyRate:
    return CauchyRate(expr, desc=expr.dsl())


def shifted_product_rate(expr: EpsRateExpr) -> ProductRate:
    """``A'(m, eps) = m + r(eps)``."""
    return ProductRate(lambda m, eps: m + expr(eps), desc=f"shift {expr.dsl()}")


# --------------------------------------------------------------------------
# lemmas


def sigma1(A: DivergenceRate, B: int, eps, N: int) -> int:
    """``A(N + ceil(ln(2B/eps))) + 1``."""
    if int(B) != B or B < 1:
        raise InputError("B must be a positive integer")
    eps = positive(eps)
    return A(int(N) + ceil_ln(Fraction(2 * int(B)) / eps)) + 1


def sigma2_with_meta(A: ProductRate, B: int, eps, N: int) -> tuple[int, dict]:
    """``max{A'(N, eps/2B), N} + 1`` plus metadata recording any clamp of ``eps/2B`` to 1."""
    if int(B) != B or B < 1:
        raise InputError("B must be a positive integer")
    arg = positive(eps) / (2 * int(B))
    clamped = arg > 1
    if clamped:
        arg = Fraction(1)
    value = max(A(int(N), arg), int(N)) + 1
    return value, {"clamped": clamped, "product_eps": arg}


def sigma2(A: ProductRate, B: int, eps, N: int) -> int:
    return sigma2_with_meta(A, B, eps, N)[0]


def cauchy_as_meta(rho: CauchyRate) -> MetaRate:
    return MetaRate(lambda eps, f: rho(eps), f_independent=True, desc=f"meta({rho.desc})")


def meta_const_as_cauchy(phi: MetaRate) -> CauchyRate:
    if not phi.f_independent:
        raise ContractError("metastability rate is not flagged f-independent")
    # any f works; the zero counterfunction is as good as another
    return CauchyRate(lambda eps: phi(eps, Const(0)), desc=f"cauchy({phi.desc})")


def shift_f(f: Callable[[int], int], N: int) -> Callable[[int], int]:
    """``f_N(m) = f(max{N, m})``."""
    if isinstance(f, Counterfunction):
        return _ShiftedCF(f, int(N))
    return lambda m: f(max(N, m))


@dataclass(frozen=True)
class _ShiftedCF(Counterfunction):
    base: Counterfunction
    N: int

    def __call__(self, m):
        return self.base(max(self.N, m))

    def dsl(self):
        return f"shift {self.N} ({self.base.dsl()})"


def shift_meta(phi: MetaRate, eps, f, N: int) -> int:
    """``max{N, phi(eps, f_N)}``."""
    f = as_counterfunction(f)
    return max(int(N), phi(eps, shift_f(f, N)))


def lift_meta(phi: MetaRate) -> ShiftedMetaRate:
    """``theta(eps, f, N) = shift_meta(phi, eps, f, N)``; always ``>= N``."""
    theta = ShiftedMetaRate(
        lambda eps, f, N: shift_meta(phi, eps, f, N),
        monotone_in_N=False,
        desc=f"shift({phi.desc})",
        f_independent=phi.f_independent,
    )
    return theta


def lift_cauchy(rho: CauchyRate) -> ShiftedMetaRate:
    """``max{N, rho(eps)}``, monotone in ``N`` and independent of ``f``."""
    return ShiftedMetaRate(
        lambda eps, f, N: max(int(N), rho(eps)),
        monotone_in_N=True,
        desc=f"max{{N, {rho.desc}}}",
        f_independent=True,
    )


def monotone_majorant(theta: ShiftedMetaRate) -> ShiftedMetaRate:
    """``max_{N' <= N} theta(eps, f, N')``; O(N) evaluations per call."""
    if theta.monotone_in_N:
        return theta
    return ShiftedMetaRate(
        lambda eps, f, N: max(theta(eps, f, k) for k in range(int(N) + 1)),
        monotone_in_N=True,
        desc=f"maj({theta.desc})",
        f_independent=theta.f_independent,
    )

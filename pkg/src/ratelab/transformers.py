"""Rate transformers for viscosity, vKM and inexact iterations.

Each transformer takes rates for the anchored (Browder or Halpern) sequences
plus the Rakotch modulus of the viscosity map and returns a bound for the
viscosity-type iteration.  The recursive counterfunctions ``f_m`` are built
bottom-up as memoized callables; they exist only at run time.
"""

from __future__ import annotations

import sys
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Union

from .errors import ContractError, InputError, ModulusError
from .mappings import RakotchModulus
from .rate_calculus import (
    CauchyRate,
    DivergenceRate,
    MetaRate,
    ShiftedMetaRate,
    as_counterfunction,
    ceil_clamped,
    ceil_log,
    exact,
    positive,
    sigma1,
)

Delta = Union[RakotchModulus, float, Fraction, int, str]


@dataclass
class BoundResult:
    """A computed bound with the intermediate quantities that produced it."""

    value: int
    trace: dict
    replay: Callable[[], "BoundResult"] = field(repr=False, compare=False)

    def __int__(self):
        return self.value

    def __eq__(self, other):
        if isinstance(other, BoundResult):
            return self.value == other.value
        return self.value == other

    def __hash__(self):
        return hash(self.value)


@dataclass
class TransformerInputs:
    b: int
    delta: Delta
    theta: Optional[ShiftedMetaRate] = None
    A: Optional[DivergenceRate] = None
    mu1: Optional[DivergenceRate] = None
    mu2: Optional[CauchyRate] = None
    rho: Optional[CauchyRate] = None

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 1:
            raise InputError("b must be a positive integer")
        self.b = int(self.b)


def _num(x) -> str:
    q = exact(x)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def delta_fn(delta: Delta) -> Callable[[Fraction], Fraction]:
    """Exact-valued evaluator for a Rakotch modulus or a constant."""
    if isinstance(delta, RakotchModulus):
        if delta.constant is not None:
            return delta_fn(delta.constant)
        return lambda eps: exact(delta(eps))
    q = exact(delta)
    if not 0 < q < 1:
        raise ModulusError(f"Rakotch modulus value {delta} is not in (0, 1)")
    return lambda eps: q


def const_delta(delta: Delta) -> Fraction:
    if isinstance(delta, RakotchModulus):
        if delta.constant is None:
            raise ContractError("this bound needs a constant Rakotch modulus (r-contraction)")
        delta = delta.constant
    return delta_fn(delta)(Fraction(1))


def _require_monotone(theta: Optional[ShiftedMetaRate], name: str = "theta"):
    if theta is None:
        raise InputError(f"{name} is required")
    if not getattr(theta, "monotone_in_N", False):
        raise ContractError(f"{name} must be flagged monotone in N (use monotone_majorant)")


def _require_monotone_A(A: Optional[DivergenceRate]):
    if A is None:
        raise InputError("a rate of divergence A is required")
    if not A.monotone:
        raise ContractError("rate of divergence must be flagged monotone")


class _ChainFn:
    """``p -> max{base(p), theta(eps0, prev, p)}`` memoized per ``p``; hashable by identity."""

    def __init__(self, base, theta, eps0, prev, depth):
        self.base = base
        self.theta = theta
        self.eps0 = eps0
        self.prev = prev
        self.depth = depth
        self._memo: dict = {}
        self._lock = threading.Lock()

    def __call__(self, p: int) -> int:
        with self._lock:
            if p in self._memo:
                return self._memo[p]
        v = max(self.base(p), self.theta(self.eps0, self.prev, p))
        with self._lock:
            self._memo[p] = v
        return v


class _Memo:
    """Memoized wrapper around a plain counterfunction."""

    def __init__(self, fn, desc):
        self.fn = fn
        self.desc = desc
        self._memo: dict = {}

    def __call__(self, p):
        if p not in self._memo:
            self._memo[p] = self.fn(p)
        return self._memo[p]


def _fchain(f0, base, theta, eps0, M):
    """``[f_0, ..., f_M]`` with ``f_{m+1}(p) = max{base(p), theta(eps0, f_m, p)}``."""
    chain = [f0]
    for m in range(M):
        chain.append(_ChainFn(base, theta, eps0, chain[-1], m + 1))
    return chain


# frames per chain level when theta reads its counterfunction
_FRAMES_PER_LEVEL = 40
_RECURSION_CAP = 200_000
_limit_lock = threading.Lock()


def _ensure_depth(M: int):
    """Evaluating ``f_M`` nests ``M`` calls deep; raise the interpreter limit (never lowered)."""
    need = 1000 + _FRAMES_PER_LEVEL * (M + 1)
    if need > _RECURSION_CAP:
        raise InputError(f"chain depth M={M} exceeds the supported recursion depth")
    with _limit_lock:
        if sys.getrecursionlimit() < need:
            sys.setrecursionlimit(need)


def _psi_chain(theta, eps0, chain, psi0, M):
    """``Psi_0 = psi0``, ``Psi_{m+1} = theta(eps0, f_{M-m}, Psi_m)`` for ``m = 0..M``."""
    if not getattr(theta, "f_independent", False):
        _ensure_depth(M)
    psi = [int(psi0)]
    for m in range(M + 1):
        psi.append(theta(eps0, chain[M - m], psi[m]))
    return psi


def _f_desc(f) -> str:
    return f.dsl() if hasattr(f, "dsl") else repr(f)


def _rate_desc(r) -> Optional[str]:
    return None if r is None else (getattr(r, "desc", "") or repr(r))


# --------------------------------------------------------------------------
# Browder side


def psi_viscosity_browder(inp: TransformerInputs, eps, f, N: int = 0) -> BoundResult:
    """Metastability bound for the viscosity-Browder sequence of a family ``(S_n)``.

    ``eps~ = eps*delta(eps/2)/4``, ``eps0 = eps~*delta(eps~)/2``,
    ``M = ceil(log_{1-delta(eps~)}(eps~/2b))``; the value is
    ``Psi_{M+1} = theta(eps0, f, Psi_M)``.
    """
    _require_monotone(inp.theta)
    eps = positive(eps)
    f = as_counterfunction(f)
    d = delta_fn(inp.delta)
    theta, b = inp.theta, inp.b
    eps_t = eps * d(eps / 2) / 4
    d_t = d(eps_t)
    eps0 = eps_t * d_t / 2
    M = ceil_log(1 - d_t, eps_t / (2 * b))
    chain = _fchain(f, f, theta, eps0, M)
    psi = _psi_chain(theta, eps0, chain, N, M)
    trace = {
        "op": "psi_viscosity_browder",
        "inputs": {"b": b, "eps": _num(eps), "N": int(N), "f": _f_desc(f), "theta": _rate_desc(theta)},
        "eps_tilde": _num(eps_t),
        "delta_eps_tilde": _num(d_t),
        "eps0": _num(eps0),
        "M": M,
        "psi_chain": psi,
        "f_depth": len(chain),
        "f_independent": bool(getattr(theta, "f_independent", False)),
    }
    return BoundResult(psi[-1], trace, lambda: psi_viscosity_browder(inp, eps, f, N))


def psi_viscosity_browder_single(inp: TransformerInputs, eps, f) -> BoundResult:
    """Constant-modulus specialisation: ``eps0 = eps*delta^2/8``, ``M = ceil(log_{1-delta}(eps*delta/8b))``, ``Psi_0 = 0``."""
    _require_monotone(inp.theta)
    eps = positive(eps)
    f = as_counterfunction(f)
    delta = const_delta(inp.delta)
    theta, b = inp.theta, inp.b
    eps0 = eps * delta**2 / 8
    M = ceil_log(1 - delta, eps * delta / (8 * b))
    chain = _fchain(f, f, theta, eps0, M)
    psi = _psi_chain(theta, eps0, chain, 0, M)
    trace = {
        "op": "psi_viscosity_browder_single",
        "inputs": {"b": b, "delta": _num(delta), "eps": _num(eps), "f": _f_desc(f), "theta": _rate_desc(theta)},
        "eps0": _num(eps0),
        "M": M,
        "psi_chain": psi,
        "f_depth": len(chain),
    }
    return BoundResult(psi[-1], trace, lambda: psi_viscosity_browder_single(inp, eps, f))


def cauchy_viscosity_browder(b: int, delta: Delta, rho: CauchyRate, eps) -> int:
    """``rho(eps * delta^2 / 8)``."""
    delta = const_delta(delta)
    return rho(positive(eps) * delta**2 / 8)


# --------------------------------------------------------------------------
# Halpern side


def _a_tilde(A: DivergenceRate, d: Fraction) -> DivergenceRate:
    """``k -> A(ceil(k / d))``: a rate of divergence for ``sum d*lambda_n``."""
    return DivergenceRate(lambda k: A(ceil_clamped(Fraction(k) / d)), monotone=A.monotone, desc=f"A(ceil(k/{_num(d)}))")


def psi_viscosity_halpern(inp: TransformerInputs, eps, f, N: int = 0) -> BoundResult:
    """Metastability bound for the viscosity-Halpern iteration of a family ``(S_n)``.

    The value is ``sigma1[A~, b](eps/3, Psi_{M+1})`` with
    ``A~(k) = A(ceil(k/delta(eps/3)))``.
    """
    _require_monotone(inp.theta, "theta'")
    _require_monotone_A(inp.A)
    eps = positive(eps)
    f = as_counterfunction(f)
    d = delta_fn(inp.delta)
    theta, A, b = inp.theta, inp.A, inp.b
    d3 = d(eps / 3)
    A_t = _a_tilde(A, d3)
    eps_t = 2 * eps * d3 / 15
    d_t = d(eps_t)
    eps0 = eps_t * d_t / 4
    M = ceil_log(1 - d_t / 2, eps_t / (2 * b))

    def s1(p):
        return sigma1(A_t, b, eps / 3, p)

    def f0_fn(p):
        q = s1(p)
        return max(f(q), q)

    f0 = _Memo(f0_fn, "f0")
    chain = _fchain(f0, f0, theta, eps0, M)
    psi0 = max(int(N), A(1) + 1)
    psi = _psi_chain(theta, eps0, chain, psi0, M)
    value = s1(psi[-1])
    trace = {
        "op": "psi_viscosity_halpern",
        "inputs": {"b": b, "eps": _num(eps), "N": int(N), "f": _f_desc(f), "theta": _rate_desc(theta), "A": _rate_desc(A)},
        "delta_eps_3": _num(d3),
        "eps_tilde": _num(eps_t),
        "delta_eps_tilde": _num(d_t),
        "eps0": _num(eps0),
        "M": M,
        "psi_chain": psi,
        "f_depth": len(chain),
        "sigma1_shift": value,
    }
    return BoundResult(value, trace, lambda: psi_viscosity_halpern(inp, eps, f, N))


def psi_viscosity_halpern_single(inp: TransformerInputs, eps, f) -> BoundResult:
    """Constant-modulus specialisation: ``eps0 = eps*delta^2/30``, ``M = ceil(log_{1-delta/2}(eps*delta/15b))``, ``Psi_0 = A(1)+1``."""
    _require_monotone(inp.theta, "theta'")
    _require_monotone_A(inp.A)
    eps = positive(eps)
    f = as_counterfunction(f)
    delta = const_delta(inp.delta)
    theta, A, b = inp.theta, inp.A, inp.b
    A_t = _a_tilde(A, delta)
    eps0 = eps * delta**2 / 30
    M = ceil_log(1 - delta / 2, eps * delta / (15 * b))

    def s1(p):
        return sigma1(A_t, b, eps / 3, p)

    f0 = _Memo(lambda p: f(s1(p)), "f0")
    chain = _fchain(f0, f0, theta, eps0, M)
    psi = _psi_chain(theta, eps0, chain, A(1) + 1, M)
    value = s1(psi[-1])
    trace = {
        "op": "psi_viscosity_halpern_single",
        "inputs": {"b": b, "delta": _num(delta), "eps": _num(eps), "f": _f_desc(f), "theta": _rate_desc(theta), "A": _rate_desc(A)},
        "eps0": _num(eps0),
        "M": M,
        "psi_chain": psi,
        "f_depth": len(chain),
        "sigma1_shift": value,
    }
    return BoundResult(value, trace, lambda: psi_viscosity_halpern_single(inp, eps, f))


def cauchy_viscosity_halpern(b: int, delta: Delta, A: DivergenceRate, rho: CauchyRate, eps) -> int:
    """``sigma1[A~, b](eps/3, max{rho(eps*delta^2/30), A(1)+1})``."""
    delta = const_delta(delta)
    eps = positive(eps)
    A_t = _a_tilde(A, delta)
    start = max(rho(eps * delta**2 / 30), A(1) + 1)
    return sigma1(A_t, int(b), eps / 3, start)


# --------------------------------------------------------------------------
# vKM


def xi_vkm(b: int, delta: Delta, mu1: DivergenceRate, mu2: CauchyRate, eps, denominator: int = 2) -> int:
    """Rate for ``d(x_{n+1}, x~_n) -> 0``: ``sigma1[mu1~, b](eps, mu2(delta^2 eps / (2b)))``.

    ``denominator=3`` gives the variant used inside :func:`cauchy_vkm`.
    """
    delta = const_delta(delta)
    eps = positive(eps)
    mu1_t = _a_tilde(mu1, delta)
    return sigma1(mu1_t, int(b), eps, mu2(delta**2 * eps / (denominator * int(b))))


def omega_vkm(b: int, delta: Delta, psi: MetaRate, mu1: DivergenceRate, mu2: CauchyRate, eps, f) -> BoundResult:
    """``max{Xi(eps/3), Psi(eps/3, f^)} + 1`` with ``f^(n) = f(max{Xi(eps/3), n} + 1)``."""
    eps = positive(eps)
    f = as_counterfunction(f)
    xi3 = xi_vkm(b, delta, mu1, mu2, eps / 3)

    def f_hat(n):
        return f(max(xi3, n) + 1)

    psi_val = psi(eps / 3, f_hat)
    value = max(xi3, psi_val) + 1
    trace = {
        "op": "omega_vkm",
        "inputs": {"b": int(b), "delta": _num(const_delta(delta)), "eps": _num(eps), "f": _f_desc(f), "psi": _rate_desc(psi)},
        "xi_eps_3": xi3,
        "psi_eps_3": psi_val,
    }
    return BoundResult(value, trace, lambda: omega_vkm(b, delta, psi, mu1, mu2, eps, f))


def cauchy_vkm(b: int, delta: Delta, rho: CauchyRate, mu1: DivergenceRate, mu2: CauchyRate, eps) -> int:
    """``max{Xi(eps/3), rho(eps*delta^2/24)} + 1``, where this Xi feeds ``mu2`` with ``delta^2 eps/(3b)``."""
    eps = positive(eps)
    xi3 = xi_vkm(b, delta, mu1, mu2, eps / 3, denominator=3)
    return max(xi3, cauchy_viscosity_browder(b, delta, rho, eps / 3)) + 1


# --------------------------------------------------------------------------
# inexact iterations


def meta_browder_relaxed(psi: MetaRate, rho: CauchyRate, delta: Delta, eps, f) -> int:
    """``max{rho(eps*delta/3), Psi(eps/3, n -> f(max{rho(eps*delta/3), n}))}``."""
    delta = const_delta(delta)
    eps = positive(eps)
    f = as_counterfunction(f)
    r = rho(eps / 3 * delta)
    return max(r, psi(eps / 3, lambda n: f(max(r, n))))


def gamma_relaxed(A: DivergenceRate, rho: CauchyRate, delta: Delta, b: int, eps) -> int:
    """``Gamma(eps) = sigma1[A~, b](eps, rho(delta*eps/2))``: rate for ``d(x_n, x'_n) -> 0``."""
    delta = const_delta(delta)
    eps = positive(eps)
    return sigma1(_a_tilde(A, delta), int(b), eps, rho(delta * eps / 2))


def meta_halpern_relaxed(psi: MetaRate, A: DivergenceRate, rho: CauchyRate, delta: Delta, b: int, eps, f) -> int:
    """``max{Gamma(eps/3), Psi(eps/3, n -> f(max{Gamma(eps/3), n}))}``."""
    eps = positive(eps)
    f = as_counterfunction(f)
    g = gamma_relaxed(A, rho, delta, b, eps / 3)
    return max(g, psi(eps / 3, lambda n: f(max(g, n))))


def meta_vkm_relaxed(psi: MetaRate, A: DivergenceRate, rho: CauchyRate, delta: Delta, b: int, eps, f) -> int:
    """Same shape as :func:`meta_halpern_relaxed`; here ``A`` diverges for ``sum alpha_n beta_n``
    and ``rho`` is a rate for ``eps_n / (alpha_n beta_n) -> 0``."""
    return meta_halpern_relaxed(psi, A, rho, delta, b, eps, f)

"""Moduli of uniqueness for approximate fixed points in uniformly convex spaces.

Given a modulus of uniform convexity ``eta`` and a modulus ``Omega`` of
uniform accretivity for ``A = I - T``, the functions here produce residual
thresholds that force approximate fixed points of ``T`` to be close, and
from them explicit Cauchy rates for the path, KM and Halpern iterations.

All Euclidean instances use the Hilbert modulus ``eta(eps) = eps**2/8``.
Quantities are exact rationals whenever the inputs are.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import mpmath
import numpy as np

from .errors import ContractError, InputError, ModulusError
from .geometry import Space, make_rng
from .mappings import MapDescriptor, affine, rotation, scaled_identity
from .rate_calculus import ceil_clamped, exact, positive
from .report import FAIL, INCONCLUSIVE, PASS, VerificationReport

#: largest simulated index before a rate is reported as untestable at scale
FEASIBLE_INDEX = 10**6


@dataclass(frozen=True, eq=False)
class UniformConvexityModulus:
    """``eta: (0, 2] -> (0, 1]``, extended by 1 above 2.

    ``eta_tilde`` is the factored form ``eta(eps) = eps * eta_tilde(eps)``;
    the improved thresholds need it to be nondecreasing on (0, 2].
    """

    eta: Callable
    eta_tilde: Optional[Callable] = None
    tilde_nondecreasing: bool = False
    desc: str = ""

    def __call__(self, eps):
        eps = positive(eps)
        if eps > 2:
            return Fraction(1)
        v = self.eta(eps)
        if not 0 < v <= 1:
            raise ModulusError(f"uniform convexity modulus eta({eps}) = {v} not in (0, 1]")
        return v

    @property
    def factored(self) -> bool:
        return self.eta_tilde is not None and self.tilde_nondecreasing

    def check_factored(self, grid: Sequence = None, rel: float = 1e-12) -> bool:
        """``eta(eps) == eps * eta_tilde(eps)`` and monotonicity of ``eta_tilde`` on a grid."""
        if self.eta_tilde is None:
            return False
        grid = grid or [Fraction(k, 64) for k in range(1, 129)]
        prev = None
        for e in grid:
            lhs, rhs = self.eta(e), e * self.eta_tilde(e)
            if abs(lhs - rhs) > rel * abs(lhs):
                return False
            t = self.eta_tilde(e)
            if prev is not None and t < prev:
                return False
            prev = t
        return True


def hilbert_eta() -> UniformConvexityModulus:
    return UniformConvexityModulus(
        eta=lambda e: e * e / 8, eta_tilde=lambda e: e / 8, tilde_nondecreasing=True, desc="hilbert-eta"
    )


def power_eta(p: int) -> UniformConvexityModulus:
    """``(eps/2)**p / p``: a modulus of the power type, e.g. for l^p with ``p >= 2``."""
    p = int(p)
    if p < 2:
        raise InputError("power-eta needs p >= 2")
    return UniformConvexityModulus(
        eta=lambda e: (exact(e) / 2) ** p / p,
        eta_tilde=lambda e: exact(e) ** (p - 1) / (p * 2**p),
        tilde_nondecreasing=True,
        desc=f"power-eta {p}",
    )


@dataclass(frozen=True, eq=False)
class AccretivityModulus:
    """``Omega(eps, b) > 0`` with ``<Ax - Ay, x - y> > Omega`` whenever ``| |x| - |y| | >= eps``."""

    Omega: Callable
    desc: str = ""

    def __call__(self, eps, b):
        v = self.Omega(positive(eps), b)
        if not v > 0:
            raise ModulusError(f"accretivity modulus Omega({eps}, {b}) = {v} is not positive")
        return v


def quadratic_omega(c) -> AccretivityModulus:
    """``Omega(eps, b) = c * eps**2``."""
    c = positive(c, "quadratic coefficient")
    return AccretivityModulus(lambda eps, b: c * eps * eps, desc=f"quad {c}")


@dataclass(frozen=True, eq=False)
class StrictIncreaseModulus:
    """``iota(eps) > 0`` bounding ``phi(x + eps) - phi(x)`` from below on ``[0, b]``."""

    iota: Callable
    desc: str = ""

    def __call__(self, eps):
        v = self.iota(positive(eps))
        if not v > 0:
            raise ModulusError(f"strict-increase modulus iota({eps}) = {v} is not positive")
        return v


def omega_from_phi(iota: StrictIncreaseModulus, eps, b=None):
    """``Omega(eps, b) = eps * iota(eps) / 2``; halving makes the accretivity inequality strict."""
    eps = positive(eps)
    return eps * iota(eps) / 2


def accretivity_from_phi(iota: StrictIncreaseModulus) -> AccretivityModulus:
    return AccretivityModulus(lambda eps, b: omega_from_phi(iota, eps, b), desc=f"from-phi({iota.desc})")


def estimate_iota_grid(phi: Callable[[float], float], b: float, eps: float, n_grid: int = 1001) -> float:
    """Heuristic lower estimate of ``inf_{x in [0,b]} phi(x+eps) - phi(x)`` on a grid.

    Not certified (the infimum may fall between grid points); never used in checks.
    """
    xs = np.linspace(0.0, float(b), n_grid)
    return float(np.min([phi(x + eps) - phi(x) for x in xs]))


# --------------------------------------------------------------------------
# thresholds


def modulus_of_uniqueness(Omega: AccretivityModulus, eta: UniformConvexityModulus, b, eps, improved: Optional[bool] = None):
    """Residual ``omega_b(eps)`` below which two approximate fixed points are ``eps``-close.

    General form::

        g = Omega((eps/2) * eta(eps/b));  omega = g/(16b) * eta(g/(8b^2))

    Improved form (needs the factored ``eta``)::

        g = Omega(b * eta(eps/b));  omega = min{b * eta(g/(8b^2)), g/(4b)}

    ``improved=None`` picks the improved form when it is available.
    """
    eps = positive(eps)
    b = positive(b, "b")
    if improved is None:
        improved = eta.factored
    if improved:
        if not eta.factored:
            raise ContractError("improved form needs a factored eta with nondecreasing eta_tilde")
        g = Omega(b * eta(eps / b), b)
        return min(b * eta(g / (8 * b * b)), g / (4 * b))
    g = Omega(eps / 2 * eta(eps / b), b)
    return g / (16 * b) * eta(g / (8 * b * b))


def beta_lemma3(eta: UniformConvexityModulus, b, eps, improved: bool = False):
    """Norm decrease of the midpoint: ``(eps/2) eta(eps/b)``, or ``b eta(eps/b)`` improved."""
    eps, b = positive(eps), positive(b, "b")
    if improved:
        if not eta.factored:
            raise ContractError("improved form needs a factored eta")
        return b * eta(eps / b)
    return eps / 2 * eta(eps / b)


def midpoint_afp_threshold(eta: UniformConvexityModulus, b, eps, improved: bool = False):
    """Residual making midpoints ``eps``-approximate fixed points: ``eps eta(eps/2b)/4``, or ``b eta(eps/2b)``."""
    eps, b = positive(eps), positive(b, "b")
    if improved:
        if not eta.factored:
            raise ContractError("improved form needs a factored eta")
        return b * eta(eps / (2 * b))
    return eps * eta(eps / (2 * b)) / 4


def lemma1_threshold(Omega: AccretivityModulus, b, eps):
    """``Omega(eps, b) / (4b)``: residual forcing ``| |x1| - |x2| | <= eps``."""
    b = positive(b, "b")
    return Omega(positive(eps), b) / (4 * b)


def path_cauchy_threshold(omega, b):
    """``omega / (2b)``: path parameters below it give ``eps``-close path points."""
    return positive(omega, "omega") / (2 * positive(b, "b"))


def km_residual_bound(b, beta, n: int) -> float:
    """``2b / sqrt(pi * sum_{i<=n} beta_i (1 - beta_i))``; ``inf`` when the sum vanishes."""
    total = math.fsum(beta(i) * (1 - beta(i)) for i in range(int(n) + 1))
    if total <= 0:
        return math.inf
    return 2 * float(b) / math.sqrt(math.pi * total)


def km_residual_bounds(b, beta, n_max: int) -> np.ndarray:
    """Vector of :func:`km_residual_bound` for ``n = 0..n_max``."""
    vals = np.array([beta(i) for i in range(n_max + 1)], dtype=float)
    sums = np.cumsum(vals * (1 - vals))
    with np.errstate(divide="ignore"):
        out = 2 * float(b) / np.sqrt(np.pi * sums)
    out[sums <= 0] = np.inf
    return out


def km_index(b, omega) -> int:
    """``ceil(4 b^2 / (pi omega^2))``, exact for rational inputs (50-digit pi)."""
    omega, b = positive(omega, "omega"), positive(b, "b")
    with mpmath.workdps(50):
        v = 4 * mpmath.mpf(b.numerator) ** 2 / mpmath.mpf(b.denominator) ** 2
        w = mpmath.mpf(omega.numerator) / omega.denominator
        return max(0, int(mpmath.ceil(v / (mpmath.pi * w * w))))


def km_cauchy_rate(gamma, b, omega) -> int:
    """``gamma(ceil(4b^2 / (pi omega^2)))`` for a rate ``gamma`` of divergence of ``sum beta(1-beta)``."""
    return int(gamma(km_index(b, omega)))


def halpern_cauchy_rate(eps, b, theta, alpha, beta, D) -> int:
    """``max{theta(D eps/4b) + 1, alpha(eps/4b)} + 1``.

    ``theta`` is a rate for ``prod (1 - alpha_{n+1}) -> 0``, ``alpha`` a rate for
    ``alpha_n -> 0`` and ``D`` a positive lower bound on the product up to
    ``beta(eps/8b)`` (``beta`` is only used by :func:`halpern_D`).  The Cauchy
    rate of the Halpern iteration is this evaluated at ``omega_b(eps)``.
    """
    eps, b = positive(eps), positive(b, "b")
    D = exact(D)
    if D <= 0:
        raise InputError("D must be positive")
    return max(int(theta(D * eps / (4 * b))) + 1, int(alpha(eps / (4 * b)))) + 1


def halpern_D(alpha_seq: Callable[[int], Fraction], beta, eps, b) -> Fraction:
    """Largest admissible ``D = prod_{n=1}^{beta(eps/8b)} (1 - alpha_{n+1})``."""
    eps, b = positive(eps), positive(b, "b")
    out = Fraction(1)
    for n in range(1, int(beta(eps / (8 * b))) + 1):
        out *= 1 - exact(alpha_seq(n + 1))
    return out


def phi_halpern_harmonic(eps, b) -> int:
    """``ceil(4b/eps + 32 b^2/eps^2)``: the rate for ``alpha_n = 1/(n+1)``."""
    eps, b = positive(eps), positive(b, "b")
    return ceil_clamped(4 * b / eps + 32 * b * b / (eps * eps))


def feasibility(index: int, limit: int = FEASIBLE_INDEX) -> str:
    return PASS if index <= limit else INCONCLUSIVE


def infeasible_rate_report(check_id: str, index: int, details: dict, limit: int = FEASIBLE_INDEX) -> VerificationReport:
    """Report for a rate too large to simulate: inconclusive, never asserted."""
    return VerificationReport(
        check_id=check_id,
        status=INCONCLUSIVE if index > limit else PASS,
        measured={"index": index},
        tolerances={"feasible_index": limit},
        details={"untestable_at_scale": index > limit, **details},
    )


# --------------------------------------------------------------------------
# testbeds


@dataclass(frozen=True, eq=False)
class AccretiveTestbed:
    """``T`` nonexpansive on the ball of radius ``b`` around 0 with ``A = I - T``.

    ``lam_min``/``lam_max`` bound ``<Av, v> / |v|^2`` and ``|Av| / |v|``; the
    accretivity modulus is ``lam_min * eps**2 / 2`` and 0 is the unique fixed point.
    """

    name: str
    T: MapDescriptor
    space: Space
    b: int
    lam_min: float
    lam_max: float
    Omega: AccretivityModulus
    eta: UniformConvexityModulus = field(default_factory=hilbert_eta)

    def residual(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.T(x), axis=-1)

    def describe(self) -> dict:
        return {"name": self.name, "T": self.T.describe(), "b": self.b, "dimension": self.space.dimension, "Omega": self.Omega.desc}


def _ball(b, dim):
    # the uniqueness calculus reads b as a norm bound; the space keeps 2b as its diameter bound
    return Space(dimension=dim, radius=float(b), b=2 * int(b))


def make_testbed(c, b: int = 1, dimension: int = 2) -> AccretiveTestbed:
    """``T = c I`` on the ball of radius ``b``; ``Omega(eps) = (1-c) eps^2 / 2``."""
    c = exact(c)
    if not 0 <= c < 1:
        raise InputError("testbed needs c in [0, 1)")
    iota = StrictIncreaseModulus(lambda eps: (1 - c) * eps, desc=f"phi(t)=(1-{c})t")
    Omega = accretivity_from_phi(iota)
    return AccretiveTestbed(f"scaled-identity c={c}", scaled_identity(float(c)), _ball(b, dimension), int(b), float(1 - c), float(1 - c), Omega)


def make_psd_testbed(M, b: int = 1) -> AccretiveTestbed:
    """``T = I - M`` for symmetric ``M`` with spectrum in ``(0, 1]``; ``Omega = lam_min(M) eps^2/2``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.allclose(M, M.T):
        raise InputError("affine-psd testbed needs a symmetric matrix")
    ev = np.linalg.eigvalsh(M)
    if ev.min() <= 0 or ev.max() > 1:
        raise InputError("affine-psd testbed needs eigenvalues in (0, 1]")
    lam_min = Fraction(float(ev.min()))
    Omega = AccretivityModulus(lambda eps, bb: lam_min * eps * eps / 2, desc=f"quad {float(lam_min) / 2}")
    T = affine(np.eye(M.shape[0]) - M)
    return AccretiveTestbed("affine-psd", T, _ball(b, M.shape[0]), int(b), float(ev.min()), float(ev.max()), Omega)


def rotation_testbed(angle: float, b: int = 1) -> AccretiveTestbed:
    """Planar rotation; ``<(I-R)v, v> = (1 - cos angle)|v|^2`` and ``|(I-R)v| = sqrt(2 - 2 cos angle)|v|``."""
    lam = 1 - math.cos(angle)
    q = Fraction(lam)
    Omega = AccretivityModulus(lambda eps, bb: q * eps * eps / 2, desc=f"quad {lam / 2}")
    return AccretiveTestbed(f"rotation {angle}", rotation(angle), _ball(b, 2), int(b), lam, math.sqrt(2 - 2 * math.cos(angle)), Omega)


# --------------------------------------------------------------------------
# sampling checks


def sample_afp(tb: AccretiveTestbed, threshold: float, rng, n: int) -> np.ndarray:
    """``n`` points of C with residual at most ``threshold``.

    Residuals are at most ``lam_max |x|``, so points are drawn in the ball of
    radius ``threshold/lam_max``; a quarter of them sit on its boundary.
    """
    r = min(float(threshold) / tb.lam_max, float(tb.b)) * (1 - 1e-12)
    d = tb.space.dimension
    v = rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    radii = r * rng.random(n) ** (1.0 / d)
    radii[: n // 4] = r
    pts = v * radii[:, None]
    res = tb.residual(pts)
    if np.any(res > float(threshold)):
        raise AssertionError("approximate fixed point sampler produced a residual above threshold")
    return pts


def _report(check_id, violations, tol, tb, extra_measured=None, witnesses_fn=None, details=None, start=None):
    worst = int(np.argmax(violations)) if len(violations) else 0
    vmax = float(violations[worst]) if len(violations) else float("-inf")
    status = FAIL if vmax > tol else PASS
    measured = {"max_violation": max(vmax, 0.0), **(extra_measured or {})}
    witnesses = [witnesses_fn(worst)] if status == FAIL and witnesses_fn else []
    return VerificationReport(
        check_id=check_id,
        status=status,
        measured=measured,
        tolerances={"abs": tol},
        witnesses=witnesses,
        provenance={"testbed": tb.describe()},
        details=details or {},
        runtime=0.0 if start is None else time.perf_counter() - start,
    )


def check_lemma1(tb: AccretiveTestbed, eps, n_pairs: int = 1000, seed: int = 0, tol: float = 1e-12) -> VerificationReport:
    start = time.perf_counter()
    rng = make_rng(seed)
    thr = lemma1_threshold(tb.Omega, tb.b, eps)
    x1, x2 = sample_afp(tb, thr, rng, n_pairs), sample_afp(tb, thr, rng, n_pairs)
    # boundary points paired with the fixed point itself
    x2[: n_pairs // 4] = 0.0
    gap = np.abs(np.linalg.norm(x1, axis=1) - np.linalg.norm(x2, axis=1))
    return _report(
        f"lemma-norm-gap[{tb.name},eps={eps}]",
        gap - float(eps),
        tol,
        tb,
        {"threshold": float(thr), "max_gap": float(gap.max())},
        lambda i: {"x1": x1[i].tolist(), "x2": x2[i].tolist()},
        start=start,
    )


def check_lemma2(tb: AccretiveTestbed, eps, improved: bool = False, n_pairs: int = 1000, seed: int = 0, tol: float = 1e-12) -> VerificationReport:
    start = time.perf_counter()
    rng = make_rng(seed)
    thr = midpoint_afp_threshold(tb.eta, tb.b, eps, improved)
    x1, x2 = sample_afp(tb, thr, rng, n_pairs), sample_afp(tb, thr, rng, n_pairs)
    mid = (x1 + x2) / 2
    res = tb.residual(mid)
    return _report(
        f"lemma-midpoint[{tb.name},eps={eps},improved={improved}]",
        res - float(eps),
        tol,
        tb,
        {"threshold": float(thr), "max_midpoint_residual": float(res.max())},
        lambda i: {"x1": x1[i].tolist(), "x2": x2[i].tolist()},
        start=start,
    )


def check_lemma3(tb: AccretiveTestbed, eps, improved: bool = False, n_pairs: int = 1000, seed: int = 0, tol: float = 1e-12) -> VerificationReport:
    """``|x1| >= |x2|``, ``|x1 - x2| > eps`` implies ``|(x1+x2)/2| < |x1| - beta``."""
    start = time.perf_counter()
    rng = make_rng(seed)
    beta = float(beta_lemma3(tb.eta, tb.b, eps, improved))
    e = float(eps)
    x1 = np.empty((0, tb.space.dimension))
    x2 = np.empty_like(x1)
    while len(x1) < n_pairs:
        a, c = tb.space.sample(rng, 4 * n_pairs), tb.space.sample(rng, 4 * n_pairs)
        # adversarial share: nearly parallel pairs just beyond eps apart
        k = n_pairs // 4
        u = a[:k] / np.linalg.norm(a[:k], axis=1, keepdims=True)
        c[:k] = a[:k] - u * (e * (1 + 1e-9))
        swap = np.linalg.norm(a, axis=1) < np.linalg.norm(c, axis=1)
        a[swap], c[swap] = c[swap].copy(), a[swap].copy()
        keep = (np.linalg.norm(a - c, axis=1) > e) & (np.linalg.norm(c, axis=1) <= tb.b)
        x1 = np.vstack([x1, a[keep]])
        x2 = np.vstack([x2, c[keep]])
    x1, x2 = x1[:n_pairs], x2[:n_pairs]
    n1 = np.linalg.norm(x1, axis=1)
    nm = np.linalg.norm((x1 + x2) / 2, axis=1)
    return _report(
        f"lemma-midpoint-norm[{tb.name},eps={eps},improved={improved}]",
        nm - (n1 - beta),
        tol,
        tb,
        {"beta": beta, "min_margin": float(np.min(n1 - beta - nm))},
        lambda i: {"x1": x1[i].tolist(), "x2": x2[i].tolist()},
        start=start,
    )


def check_uniqueness(tb: AccretiveTestbed, eps, improved: Optional[bool] = None, n_pairs: int = 1000, seed: int = 0, tol: float = 1e-12) -> VerificationReport:
    """Approximate fixed points at residual ``omega_b(eps)`` are ``eps``-close.

    The same search at ten times the threshold is run and reported (not asserted)
    to show how much slack the modulus carries.
    """
    start = time.perf_counter()
    rng = make_rng(seed)
    omega = modulus_of_uniqueness(tb.Omega, tb.eta, tb.b, eps, improved)
    x1, x2 = sample_afp(tb, omega, rng, n_pairs), sample_afp(tb, omega, rng, n_pairs)
    x2[: n_pairs // 4] = -x1[: n_pairs // 4]
    dist = np.linalg.norm(x1 - x2, axis=1)
    loose = min(10 * float(omega), float(tb.b) * tb.lam_max)
    y1, y2 = sample_afp(tb, loose, rng, n_pairs), sample_afp(tb, loose, rng, n_pairs)
    y2[: n_pairs // 4] = -y1[: n_pairs // 4]
    loose_max = float(np.linalg.norm(y1 - y2, axis=1).max())
    return _report(
        f"modulus-of-uniqueness[{tb.name},eps={eps}]",
        dist - float(eps),
        tol,
        tb,
        {"omega": float(omega), "max_distance": float(dist.max())},
        lambda i: {"x1": x1[i].tolist(), "x2": x2[i].tolist()},
        details={"omega_exact": exact(omega), "slack_probe": {"residual": loose, "max_distance": loose_max, "exceeds_eps": loose_max > float(eps)}},
        start=start,
    )


def path_point(tb: AccretiveTestbed, anchor, alpha: float) -> np.ndarray:
    """``x = (1-alpha) T x + alpha anchor``; testbed maps are linear, so this is a linear solve."""
    d = tb.space.dimension
    L = tb.T(np.eye(d)).T  # columns are images of the basis vectors
    return np.linalg.solve(np.eye(d) - (1 - alpha) * L, alpha * np.asarray(anchor, dtype=float))


def check_path(tb: AccretiveTestbed, eps, n_pairs: int = 50, seed: int = 0, tol: float = 1e-9) -> VerificationReport:
    start = time.perf_counter()
    rng = make_rng(seed)
    omega = modulus_of_uniqueness(tb.Omega, tb.eta, tb.b, eps)
    thr = float(path_cauchy_threshold(omega, tb.b))
    anchor = tb.space.sample(rng, 1)[0]
    alphas = thr * rng.random((n_pairs, 2))
    alphas[0] = [thr, thr * 1e-3]
    pts = [(path_point(tb, anchor, a1), path_point(tb, anchor, a2)) for a1, a2 in alphas]
    dist = np.array([np.linalg.norm(p - q) for p, q in pts])
    return _report(
        f"path-threshold[{tb.name},eps={eps}]",
        dist - float(eps),
        tol,
        tb,
        {"threshold": thr, "max_distance": float(dist.max())},
        lambda i: {"alphas": alphas[i].tolist()},
        start=start,
    )

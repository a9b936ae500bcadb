"""Iteration schemes: Browder/Halpern, their viscosity versions, KM and vKM.

Explicit schemes are plain recursions.  Implicit schemes (Browder-type
points) are obtained by Banach iteration of the inner map, stopped on a
certified residual; every point carries its residual, the iteration count and
an a-posteriori bound on its distance to the exact implicit point.
"""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InconclusiveError, InputError, SolverError
from .geometry import Space, as_point
from .mappings import CONTRACTION, RAKOTCH, MapDescriptor, as_family
from .report import FAIL, INCONCLUSIVE, PASS, VerificationReport

# hard cap on stored trajectory length; beyond it checks turn inconclusive
MAX_HORIZON = 2_000_000
# float slack for ball membership of emitted points
MEMBERSHIP_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class ScalarSequence:
    """A real sequence with a declared domain, ``(0, 1]`` or ``[0, 1]``."""

    tag: str
    func: Callable[[int], float] = field(repr=False)
    params: dict = field(default_factory=dict)
    allow_zero: bool = False

    def __call__(self, n: int) -> float:
        v = float(self.func(int(n)))
        lo_ok = v >= 0 if self.allow_zero else v > 0
        if not (lo_ok and v <= 1):
            dom = "[0, 1]" if self.allow_zero else "(0, 1]"
            raise InputError(f"{self.tag}({n}) = {v} outside {dom}")
        return v

    def values(self, n: int) -> np.ndarray:
        return np.array([self(i) for i in range(n)])

    def describe(self) -> dict:
        return {"family": self.tag, **self.params}


def one_over_n_plus_1() -> ScalarSequence:
    return ScalarSequence("one-over-n-plus-1", lambda n: 1.0 / (n + 1))


def constant_seq(c: float) -> ScalarSequence:
    c = float(c)
    return ScalarSequence("constant", lambda n: c, {"c": c}, allow_zero=(c == 0))


def harmonic_power(p: float, scale: float = 1.0) -> ScalarSequence:
    """``scale * (n+1)**(-p)``."""
    p, scale = float(p), float(scale)
    return ScalarSequence("harmonic-power", lambda n: scale * (n + 1) ** (-p), {"p": p, "scale": scale})


def table_seq(values, name: str = "table", allow_zero: bool = True) -> ScalarSequence:
    """User sequence from a list (repeating its last value) or a callable."""
    if callable(values):
        return ScalarSequence("table", values, {"name": name}, allow_zero=allow_zero)
    vals = [float(v) for v in values]
    if not vals:
        raise InputError("empty sequence table")
    return ScalarSequence("table", lambda n: vals[min(n, len(vals) - 1)], {"name": name}, allow_zero=allow_zero)


def zero_seq() -> ScalarSequence:
    return ScalarSequence("constant", lambda n: 0.0, {"c": 0.0}, allow_zero=True)


# --------------------------------------------------------------------------
# trajectories


class Trajectory:
    """Lazily generated iterate sequence with per-index certificates.

    Explicit trajectories advance ``x_{n+1} = step(n, x_n)``; implicit ones
    compute each index independently with ``solve(n)``.  Extension is
    serialized by a lock, so several readers may share one trajectory.
    """

    def __init__(
        self,
        space: Space,
        scheme: str,
        params: dict,
        *,
        step: Optional[Callable[[int, np.ndarray], np.ndarray]] = None,
        start: Optional[np.ndarray] = None,
        solve: Optional[Callable[[int], "InnerSolve"]] = None,
        inner_map: Optional[Callable] = None,
        resolve: Optional[Callable] = None,
        max_horizon: int = MAX_HORIZON,
    ):
        if (step is None) == (solve is None):
            raise InputError("a trajectory is either explicit (step) or implicit (solve)")
        self.space = space
        self.scheme = scheme
        self.params = params
        self.max_horizon = max_horizon
        self._step = step
        self._solve = solve
        # implicit only: n -> (inner map G_n, contraction factor) and a
        # re-solve at a tighter tolerance; used to certify perturbed points
        self.inner_map = inner_map
        self.resolve = resolve
        d = space.dimension
        self._pts = np.empty((16, d))
        self._residual = np.zeros(16)
        self._error_bound = np.zeros(16)
        self._injected = np.zeros(16)
        self._iterations = np.zeros(16, dtype=np.int64)
        self.clamped: list[int] = []
        self._len = 0
        self._lock = threading.RLock()
        if step is not None:
            start = as_point(start, d)
            if not space.contains(start):
                raise InputError("start point outside C")
            self._append(start, 0.0, 0.0, 0.0, 0)

    @property
    def implicit(self) -> bool:
        return self._solve is not None

    def __len__(self):
        return self._len

    def _append(self, x, residual, bound, injected, iterations):
        if self._len == self._pts.shape[0]:
            grow = self._pts.shape[0] * 2
            self._pts = np.resize(self._pts, (grow, self._pts.shape[1]))
            self._residual = np.resize(self._residual, grow)
            self._error_bound = np.resize(self._error_bound, grow)
            self._injected = np.resize(self._injected, grow)
            self._iterations = np.resize(self._iterations, grow)
        if not self.space.contains(x, MEMBERSHIP_SLACK):
            raise SolverError(f"{self.scheme} left C at index {self._len}")
        i = self._len
        self._pts[i] = x
        self._residual[i] = residual
        self._error_bound[i] = bound
        self._injected[i] = injected
        self._iterations[i] = iterations
        self._len += 1

    def extend_to(self, n: int) -> None:
        """Make indices ``0..n`` available."""
        if n >= self.max_horizon:
            raise InconclusiveError(f"index {n} exceeds the trajectory horizon budget {self.max_horizon}")
        with self._lock:
            self._extend(n)

    def _extend(self, n: int) -> None:
        while self._len <= n:
            i = self._len
            if self._solve is not None:
                sol = self._solve(i)
                self._append(sol.point, sol.residual, sol.error_bound, sol.injected, sol.iterations)
            else:
                x = self._step(i - 1, self._pts[i - 1])
                if isinstance(x, StepResult):
                    self._append(x.point, x.residual, 0.0, x.injected, 0)
                    if x.clamped:
                        self.clamped.append(i)
                else:
                    self._append(x, 0.0, 0.0, 0.0, 0)

    def __getitem__(self, n: int) -> np.ndarray:
        if n < 0:
            raise IndexError("negative trajectory index")
        self.extend_to(n)
        return self._pts[n].copy()

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Points ``lo..hi`` inclusive as an array (a copy)."""
        with self._lock:
            self.extend_to(hi)
            return self._pts[lo : hi + 1].copy()

    def _column(self, attr: str, lo: int, hi: Optional[int]) -> np.ndarray:
        with self._lock:
            hi = self._len - 1 if hi is None else hi
            self.extend_to(hi)
            return getattr(self, attr)[lo : hi + 1].copy()

    def residuals(self, lo: int = 0, hi: Optional[int] = None) -> np.ndarray:
        return self._column("_residual", lo, hi)

    def error_bounds(self, lo: int = 0, hi: Optional[int] = None) -> np.ndarray:
        return self._column("_error_bound", lo, hi)

    def injected(self, lo: int = 0, hi: Optional[int] = None) -> np.ndarray:
        return self._column("_injected", lo, hi)

    def iterations(self, lo: int = 0, hi: Optional[int] = None) -> np.ndarray:
        return self._column("_iterations", lo, hi)

    def slack(self, lo: int, hi: int) -> float:
        """Distance allowance for the window ``lo..hi`` due to inexact inner solves.

        Each emitted implicit point is within its error bound of the exact
        point, so pairwise distances shift by at most twice the largest bound.
        """
        if not self.implicit:
            return 0.0
        return 2.0 * float(np.max(self.error_bounds(lo, hi)))

    def provenance(self) -> dict:
        return {"scheme": self.scheme, **self.params}

    def to_csv(self, path, upto: Optional[int] = None) -> None:
        """Write indices ``0..upto`` to ``path`` (a filename or an open text stream)."""
        n = (self._len - 1) if upto is None else upto
        self.extend_to(n)
        if hasattr(path, "write"):
            self._write_csv(path, n)
            return
        with open(path, "w", newline="") as fh:
            self._write_csv(fh, n)

    def _write_csv(self, fh, n: int) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + [f"x{k}" for k in range(self.space.dimension)] + ["residual", "injected_error"])
        for i in range(n + 1):
            w.writerow([i] + [repr(float(v)) for v in self._pts[i]] + [repr(float(self._residual[i])), repr(float(self._injected[i]))])


@dataclass
class StepResult:
    point: np.ndarray
    residual: float = 0.0
    injected: float = 0.0
    clamped: bool = False


@dataclass
class InnerSolve:
    point: np.ndarray
    residual: float
    iterations: int
    error_bound: float
    budget: int
    injected: float = 0.0


def default_tau(alpha: float) -> float:
    """Inner tolerance ``min{1e-10, alpha * 1e-6}``."""
    return min(1e-10, alpha * 1e-6)


def browder_budget(tau: float, alpha: float, b: int) -> int:
    """A-priori step count ``ceil(ln(tau*alpha/b) / ln(1-alpha)) + 1`` for factor ``1 - alpha``."""
    if alpha >= 1:
        return 1
    return max(0, math.ceil(math.log(tau * alpha / b) / math.log1p(-alpha))) + 1


def _banach(G, x0, tau, q, budget, space):
    """Iterate ``G`` from ``x0`` until ``d(x, G x) <= tau``; returns ``(x, residual, steps)``."""
    x = x0
    gx = G(x)
    r = float(space.dist(x, gx))
    k = 0
    while r > tau:
        if k >= budget:
            raise SolverError(f"inner solve exceeded budget {budget}", residual=r, iterations=k)
        x = gx
        gx = G(x)
        r = float(space.dist(x, gx))
        k += 1
    return x, r, k


def _rakotch_of(phi: MapDescriptor):
    cls = phi.claimed
    if cls.kind not in (CONTRACTION, RAKOTCH, "mkc"):
        raise InputError("viscosity map needs a contraction, Rakotch or MKC class")
    return cls.rakotch()


def solve_implicit(
    space: Space,
    S: MapDescriptor,
    anchor_map: Optional[MapDescriptor],
    u: Optional[np.ndarray],
    alpha: float,
    tau: float,
) -> InnerSolve:
    """Point ``z`` with ``d(z, (1-alpha) S z (+) alpha a(z)) <= tau``.

    ``a`` is the constant ``u`` (Browder) or ``anchor_map`` (viscosity).
    """
    if not tau > 0:
        raise InputError("inner tolerance must be positive")
    if not 0 < alpha <= 1:
        raise InputError(f"alpha={alpha} outside (0, 1]")
    b = int(space.b)
    if anchor_map is None:
        u = as_point(u, space.dimension)

        def G(x):
            return space.w_combine(S(x), u, alpha)

        budget = browder_budget(tau, alpha, b)
        x, r, k = _banach(G, u, tau, 1 - alpha, budget, space)
        bound = r / alpha
        return InnerSolve(x, r, k, bound, budget)

    modulus = _rakotch_of(anchor_map)
    x0 = anchor_map(space.origin)

    def G(x):
        return space.w_combine(S(x), anchor_map(x), alpha)

    if modulus.constant is not None:
        delta = float(modulus.constant)
        factor = alpha * delta
        budget = browder_budget(tau, factor, b)
        x, r, k = _banach(G, x0, tau, 1 - factor, budget, space)
        return InnerSolve(x, r, k, r / factor, budget)

    # staged scheme: the factor 1 - alpha*delta(eps') only holds for pairs at
    # distance >= eps', so run each stage down to eps' and then halve it
    x = x0
    total = 0
    total_budget = 0
    eps_stage = float(b)
    while True:
        factor = alpha * float(modulus(eps_stage))
        target = max(eps_stage, tau)
        stage_budget = browder_budget(target, factor, b)
        total_budget += stage_budget
        x, r, k = _banach(G, x, target, 1 - factor, stage_budget, space)
        total += k
        if r <= tau:
            return InnerSolve(x, r, total, max(eps_stage, r / factor), total_budget)
        eps_stage /= 2


def _seq_params(**seqs) -> dict:
    return {k: (v.describe() if isinstance(v, ScalarSequence) else v) for k, v in seqs.items()}


def browder_point(space: Space, family, u, alpha: ScalarSequence, n: int, tau: Optional[float] = None) -> np.ndarray:
    """Browder point ``y_n(u)`` up to residual ``tau``."""
    fam = as_family(family)
    a = alpha(n)
    tau = default_tau(a) if tau is None else tau
    return solve_implicit(space, fam[n], None, u, a, tau).point


def viscosity_browder_point(space: Space, family, phi: MapDescriptor, alpha: ScalarSequence, n: int, tau: Optional[float] = None) -> np.ndarray:
    fam = as_family(family)
    a = alpha(n)
    tau = default_tau(a) if tau is None else tau
    return solve_implicit(space, fam[n], phi, None, a, tau).point


def _implicit_traj(space, fam, phi, u, alpha, tau, scheme, params):
    def inner_map(n):
        a = alpha(n)
        if phi is None:
            return (lambda x: space.w_combine(fam[n](x), u, a)), 1 - a
        mod = _rakotch_of(phi)
        q = 1 - a * float(mod.constant) if mod.constant is not None else 1.0
        return (lambda x: space.w_combine(fam[n](x), phi(x), a)), q

    def resolve(n, t):
        return solve_implicit(space, fam[n], phi, u, alpha(n), t)

    def solve(n):
        a = alpha(n)
        return resolve(n, default_tau(a) if tau is None else tau(n))

    return Trajectory(space, scheme, params, solve=solve, inner_map=inner_map, resolve=resolve)


def browder_traj(space: Space, family, u, alpha: ScalarSequence, tau: Optional[Callable[[int], float]] = None) -> Trajectory:
    """Implicit trajectory ``n -> y_n(u)``; ``tau(n)`` overrides the default inner tolerance."""
    fam = as_family(family)
    u = as_point(u, space.dimension)
    params = {"family": fam.describe(), "anchor": u.tolist(), **_seq_params(alpha=alpha)}
    return _implicit_traj(space, fam, None, u, alpha, tau, "browder", params)


def viscosity_browder_traj(space: Space, family, phi: MapDescriptor, alpha: ScalarSequence, tau: Optional[Callable[[int], float]] = None) -> Trajectory:
    fam = as_family(family)
    params = {"family": fam.describe(), "phi": phi.describe(), **_seq_params(alpha=alpha)}
    return _implicit_traj(space, fam, phi, None, alpha, tau, "viscosity-browder", params)


def _check_in_c(space, *points):
    for p in points:
        if not space.contains(p):
            raise InputError("point outside C")


def halpern_traj(space: Space, family, u, start, alpha: ScalarSequence) -> Trajectory:
    """``w_{n+1} = (1-a_n) S_n(w_n) (+) a_n u``."""
    fam = as_family(family)
    u = as_point(u, space.dimension)
    _check_in_c(space, u)

    def step(n, x):
        return space.w_combine(fam[n](x), u, alpha(n))

    params = {"family": fam.describe(), "anchor": u.tolist(), **_seq_params(alpha=alpha)}
    return Trajectory(space, "halpern", params, step=step, start=start)


def viscosity_halpern_traj(space: Space, family, phi: MapDescriptor, start, alpha: ScalarSequence) -> Trajectory:
    """``x_{n+1} = (1-a_n) S_n(x_n) (+) a_n phi(x_n)``."""
    fam = as_family(family)

    def step(n, x):
        return space.w_combine(fam[n](x), phi(x), alpha(n))

    params = {"family": fam.describe(), "phi": phi.describe(), **_seq_params(alpha=alpha)}
    return Trajectory(space, "viscosity-halpern", params, step=step, start=start)


def km_traj(space: Space, T: MapDescriptor, start, beta: ScalarSequence) -> Trajectory:
    """``x_{n+1} = (1-b_n) x_n (+) b_n T(x_n)``."""

    def step(n, x):
        return space.w_combine(x, T(x), beta(n))

    return Trajectory(space, "km", {"T": T.describe(), **_seq_params(beta=beta)}, step=step, start=start)


def vkm_traj(space: Space, T: MapDescriptor, phi: MapDescriptor, start, alpha: ScalarSequence, beta: ScalarSequence) -> Trajectory:
    """``x_{n+1} = (1-b_n) x_n (+) b_n ((1-a_n) T x_n (+) a_n phi(x_n))``."""

    def step(n, x):
        inner = space.w_combine(T(x), phi(x), alpha(n))
        return space.w_combine(x, inner, beta(n))

    params = {"T": T.describe(), "phi": phi.describe(), **_seq_params(alpha=alpha, beta=beta)}
    return Trajectory(space, "vkm", params, step=step, start=start)


# --------------------------------------------------------------------------
# inexact variants


def push_toward_center(space: Space, y: np.ndarray, amount: float) -> tuple[np.ndarray, bool]:
    """Move ``y`` by ``amount`` toward the ball center; clamp to C if that overshoots out of it."""
    if amount == 0:
        return y, False
    c = space.origin
    v = c - y
    norm = float(space.norm(v))
    if norm == 0:
        v = np.zeros_like(y)
        v[0] = 1.0
        norm = float(space.norm(v))
    moved = y + (amount / norm) * v
    if space.contains(moved):
        return moved, False
    return space.project(moved), True


def inject_errors(traj: Trajectory, eps: ScalarSequence, rule: Optional[Callable] = None) -> Trajectory:
    """Inexact copy of ``traj`` whose step ``n`` misses the exact update by at most ``eps_n``.

    The default ``rule(space, y, amount)`` pushes toward the ball center.
    Explicit schemes: ``x'_{n+1}`` is the exact step from ``x'_n`` displaced
    by ``eps_n``.  Implicit schemes: ``x'_n`` is a tighter inner solve displaced
    so that its residual is at most ``eps_n``.
    """
    rule = rule or push_toward_center
    space = traj.space
    params = {**traj.params, "errors": eps.describe(), "base_scheme": traj.scheme}

    if not traj.implicit:
        base_step = traj._step

        def step(n, x):
            exact_next = base_step(n, x)
            e = eps(n)
            y, clamped = rule(space, exact_next, e)
            resid = float(space.dist(y, base_step(n, x)))
            if resid > e + 1e-12:
                raise SolverError(f"perturbation at step {n} has size {resid} > {e}", residual=resid)
            return StepResult(y, residual=resid, injected=resid, clamped=clamped)

        return Trajectory(space, f"{traj.scheme}+errors", params, step=step, start=traj[0])

    if traj.inner_map is None or traj.resolve is None:
        raise InputError("implicit trajectory does not expose its inner map")
    base_solve = traj._solve

    def solve(n):
        e = eps(n)
        sol = base_solve(n)
        if e > 0:
            tight = min(sol.residual, e / 2)
            if sol.residual > tight:
                sol = traj.resolve(n, tight)
        G, q = traj.inner_map(n)
        s = max(0.0, (e - sol.residual) / (1 + q)) if e > 0 else 0.0
        y, _ = rule(space, sol.point, s)
        resid = float(space.dist(y, G(y)))
        if resid > max(e, sol.residual) + 1e-12:
            raise SolverError(f"perturbed point {n} has residual {resid} > {e}", residual=resid)
        return InnerSolve(y, resid, sol.iterations, 0.0, sol.budget, injected=float(space.dist(y, sol.point)))

    return Trajectory(space, f"{traj.scheme}+errors", params, solve=solve)


def error_ratio_premise(
    eps: ScalarSequence,
    alpha: ScalarSequence,
    beta: Optional[ScalarSequence] = None,
    rho: Optional[Callable] = None,
    eps_grid=(1.0, 0.5, 0.25, 0.125),
    horizon: int = 10_000,
) -> VerificationReport:
    """Check the premise ``eps_n / alpha_n -> 0`` (or ``eps_n / (alpha_n beta_n)``).

    With ``rho`` the claimed rate is tested on the horizon: the ratio must stay
    below each grid value from ``rho(value)`` on.  Without it, a ratio that
    never decays below its initial value is flagged as a failed premise and
    anything else is inconclusive.
    """
    n = np.arange(horizon)
    denom = np.array([alpha(i) * (beta(i) if beta is not None else 1.0) for i in n])
    ratio = np.array([eps(i) for i in n]) / denom
    measured = {"ratio_first": float(ratio[0]), "ratio_tail_max": float(ratio[horizon // 2 :].max())}
    witnesses = []
    if rho is not None:
        for e in eps_grid:
            start = int(rho(e))
            if start >= horizon:
                continue
            tail = ratio[start:]
            worst = int(np.argmax(tail))
            if tail[worst] > float(e) + 1e-12:
                witnesses.append({"eps": float(e), "rho": start, "index": start + worst, "ratio": float(tail[worst])})
        status = FAIL if witnesses else PASS
    else:
        status = FAIL if measured["ratio_tail_max"] >= measured["ratio_first"] * (1 - 1e-12) else INCONCLUSIVE
        if status == FAIL:
            witnesses.append({"reason": "ratio does not decay", **measured})
    return VerificationReport(
        check_id="error-ratio-premise",
        status=status,
        measured=measured,
        tolerances={"abs": 1e-12},
        witnesses=witnesses,
        provenance={"eps": eps.describe(), "alpha": alpha.describe(), "beta": None if beta is None else beta.describe(), "horizon": horizon},
    )

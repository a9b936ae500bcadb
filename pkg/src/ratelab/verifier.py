"""Empirical soundness checks for computed bounds.

A bound is falsified only by a fully evaluated window whose diameter exceeds
``eps`` plus the solver slack; running out of horizon is reported as
inconclusive and never counts against the bound.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import InconclusiveError, InputError
from .geometry import make_rng
from .report import FAIL, INCONCLUSIVE, PASS, VerificationReport, combine_status
from .schemes import Trajectory

__all__ = [
    "VerificationReport",
    "WindowWitness",
    "XuOracle",
    "brute_force_xu",
    "check_bound_soundness",
    "check_cauchy_rate",
    "find_metastable_window",
    "reports_to_csv",
    "window_diameter",
]

#: windows larger than this are only handled in dimension 1
MAX_WINDOW = 10**5
#: largest index a check will simulate
FEASIBLE_INDEX = 10**6
#: absolute allowance for floating-point rounding in distance comparisons
FLOAT_SLACK = 1e-12


@dataclass(frozen=True)
class WindowWitness:
    n: int
    window_end: int
    max_pairwise_distance: float
    tolerance: float = 0.0


def window_diameter(traj: Trajectory, lo: int, hi: int) -> tuple[float, tuple[int, int]]:
    """Largest pairwise distance among points ``lo..hi`` and a pair attaining it."""
    if hi <= lo:
        return 0.0, (lo, lo)
    size = hi - lo + 1
    pts = traj.window(lo, hi)
    if size > MAX_WINDOW:
        if pts.shape[1] != 1:
            raise InconclusiveError(f"window of {size} points is too large outside dimension 1")
        i, j = int(np.argmin(pts[:, 0])), int(np.argmax(pts[:, 0]))
        return float(pts[j, 0] - pts[i, 0]), (lo + i, lo + j)
    dist = traj.space.dist
    best, pair = 0.0, (lo, lo)
    chunk = max(1, 4_000_000 // (size * pts.shape[1]))
    for start in range(0, size, chunk):
        block = dist(pts[start : start + chunk, None, :], pts[None, :, :])
        k = int(np.argmax(block))
        v = float(block.flat[k])
        if v > best:
            r, c = divmod(k, size)
            best, pair = v, (lo + start + r, lo + c)
    return best, pair


def find_metastable_window(traj: Trajectory, eps, f: Callable[[int], int], bound: int, N: int = 0) -> Optional[WindowWitness]:
    """Least ``n`` in ``[N, bound]`` whose window ``[n, f(n)]`` has diameter ``<= eps`` (plus slack).

    Returns ``None`` when every start in the range fails, which falsifies the
    bound.  A bound past the feasible index is scanned only up to that index;
    finding nothing there, or needing more horizon than the trajectory allows,
    raises :class:`InconclusiveError`.
    """
    eps = float(eps)
    bound = int(bound)
    last = min(bound, FEASIBLE_INDEX)
    for n in range(int(N), last + 1):
        hi = int(f(n))
        if hi < n:
            # empty window: the statement holds vacuously
            return WindowWitness(n, hi, 0.0, eps)
        if hi > FEASIBLE_INDEX:
            raise InconclusiveError(f"window [{n}, {hi}] exceeds the feasible index {FEASIBLE_INDEX}")
        diam, _ = window_diameter(traj, n, hi)
        tol = eps + traj.slack(n, hi) + FLOAT_SLACK
        if diam <= tol:
            return WindowWitness(n, hi, diam, tol)
    if bound > last:
        raise InconclusiveError(f"no witness up to the feasible index {FEASIBLE_INDEX}; bound is {bound}")
    return None


def check_cauchy_rate(
    traj: Trajectory,
    rho: Callable,
    eps_grid: Sequence,
    pair_budget: int = 200,
    span: int = 200,
    seed: int = 0,
) -> VerificationReport:
    """Sample index pairs ``i, j >= rho(eps)`` and require ``d(x_i, x_j) <= eps`` (plus slack).

    Pairs are drawn from ``[rho(eps), rho(eps) + span]``; that window's extremes
    and its exact diameter (when small) are always included.
    """
    start_time = time.perf_counter()
    rng = make_rng(seed)
    statuses, witnesses = [], []
    measured = {}
    for eps in eps_grid:
        e = float(eps)
        start = int(rho(eps))
        key = f"eps={e}"
        if start + span > FEASIBLE_INDEX:
            statuses.append(INCONCLUSIVE)
            measured[key] = {"rho": start, "status": INCONCLUSIVE}
            continue
        hi = start + span
        slack = traj.slack(start, hi)
        tol = e + slack + FLOAT_SLACK
        pts = traj.window(start, hi)
        pairs = [(0, span), (0, 0)]
        pairs += [tuple(sorted(p)) for p in rng.integers(0, span + 1, size=(pair_budget, 2))]
        ii = np.array([p[0] for p in pairs])
        jj = np.array([p[1] for p in pairs])
        d = traj.space.dist(pts[ii], pts[jj])
        worst_k = int(np.argmax(d))
        worst = float(d[worst_k])
        worst_pair = (start + int(ii[worst_k]), start + int(jj[worst_k]))
        if span + 1 <= 2000:
            diam, dpair = window_diameter(traj, start, hi)
            if diam > worst:
                worst, worst_pair = diam, dpair
        ok = worst <= tol
        statuses.append(PASS if ok else FAIL)
        measured[key] = {"rho": start, "max_distance": worst, "slack": slack}
        if not ok:
            witnesses.append({"eps": e, "pair": list(worst_pair), "distance": worst})
    return VerificationReport(
        check_id=f"cauchy-rate[{traj.scheme}]",
        status=combine_status(statuses),
        measured=measured,
        tolerances={"float_slack": FLOAT_SLACK},
        witnesses=witnesses,
        provenance=traj.provenance(),
        runtime=time.perf_counter() - start_time,
    )


@dataclass
class XuOracle:
    """Extremal sequence ``a_{i+1} = (1 - lam_i) a_i + lam_i b_i`` and direct partial sums/products."""

    a: np.ndarray
    partial_sums: np.ndarray
    premise_ok: bool
    premise_note: str

    def first_good_index(self, eps: float, p: int) -> int:
        """Least ``s`` with ``a_i <= eps`` for every ``i`` in ``[s, p]`` (``p + 1`` if none)."""
        bad = np.nonzero(self.a[: p + 1] > eps)[0]
        return 0 if len(bad) == 0 else int(bad[-1]) + 1

    def confirms(self, eps: float, claimed: int, p: int, tol: float = 1e-9) -> bool:
        if claimed > p:
            return True
        return bool(np.all(self.a[claimed : p + 1] <= eps + tol))


def brute_force_xu(lams, a0: float, bs, N: int, p: int, B: float, eps: Optional[float] = None) -> XuOracle:
    """Generate the extremal Xu sequence on ``[0, p + 1]`` without using any rate formula.

    The premise is ``0 <= a_0 <= B``, ``lam_i in [0, 1]``, ``b_i <= B`` and, when
    ``eps`` is given, ``b_i <= eps/2`` on ``[N, p]``.  A sequence ``lam`` with no
    mass on ``[N, p]`` cannot certify anything and marks the premise as failed.
    """
    lams = np.asarray([lams(i) for i in range(p + 1)] if callable(lams) else lams, dtype=float)[: p + 1]
    bs = np.asarray([bs(i) for i in range(p + 1)] if callable(bs) else bs, dtype=float)[: p + 1]
    if len(lams) < p + 1 or len(bs) < p + 1:
        raise InputError("sequences shorter than the horizon")
    if np.any(lams < 0) or np.any(lams > 1):
        raise InputError("lambda values must lie in [0, 1]")
    a = np.empty(p + 2)
    a[0] = a0
    for i in range(p + 1):
        a[i + 1] = (1 - lams[i]) * a[i] + lams[i] * bs[i]
    sums = np.cumsum(lams)
    note = ""
    ok = True
    if not 0 <= a0 <= B or np.any(bs > B):
        ok, note = False, "a_0 or b_i exceeds B"
    elif eps is not None and np.any(bs[N : p + 1] > eps / 2):
        ok, note = False, "b_i > eps/2 inside [N, p]"
    elif sums[p] - (sums[N - 1] if N > 0 else 0.0) <= 0:
        ok, note = False, "no lambda mass on [N, p]; divergence premise missing"
    return XuOracle(a, sums, ok, note)


def divergence_rate_from(lams: np.ndarray) -> Callable[[int], int]:
    """``k -> least m with sum_{i<=m} lam_i >= k`` (``len(lams)`` plus k when never reached)."""
    sums = np.cumsum(np.asarray(lams, dtype=float))

    def A(k: int) -> int:
        if k <= 0:
            return 0
        m = int(np.searchsorted(sums, k - 1e-12, side="left"))
        return m if m < len(sums) else len(sums) + int(k)

    return A


def product_rate_from(lams: np.ndarray) -> Callable[[int, float], int]:
    """``(m, eps) -> least K >= m with prod_{i=m}^K (1 - lam_i) <= eps`` (beyond the horizon if never)."""
    lams = np.asarray(lams, dtype=float)

    def A(m: int, eps) -> int:
        prod = 1.0
        for k in range(m, len(lams)):
            prod *= 1.0 - lams[k]
            if prod <= float(eps):
                return k
        return len(lams) + 1

    return A


def _soundness_row(traj: Trajectory, bound_fn: Callable, eps, f, N: int) -> tuple[str, dict, Optional[dict], Optional[dict]]:
    res = bound_fn(eps, f)
    bound = int(res)
    row = {"eps": eps, "f": getattr(f, "dsl", lambda: repr(f))(), "bound": bound}
    trace = getattr(res, "trace", None)
    try:
        w = find_metastable_window(traj, eps, f, bound, N)
    except InconclusiveError as exc:
        row.update(status=INCONCLUSIVE, reason=str(exc))
        return INCONCLUSIVE, row, None, trace
    if w is None:
        row.update(status=FAIL)
        hi = max(bound, int(f(bound)))
        diam, pair = window_diameter(traj, bound, hi)
        witness = {"eps": eps, "f": row["f"], "bound": bound, "last_window": [bound, hi], "pair": list(pair), "distance": diam}
        return FAIL, row, witness, trace
    row.update(status=PASS, witness=w.n, window_end=w.window_end, max_distance=w.max_pairwise_distance, tolerance=w.tolerance)
    return PASS, row, None, trace


def check_bound_soundness(
    traj: Trajectory,
    bound_fn: Callable,
    eps_grid: Iterable,
    f_grid: Iterable,
    N: int = 0,
    check_id: str = "bound-soundness",
    provenance: Optional[dict] = None,
    max_workers: int = 1,
) -> VerificationReport:
    """For each ``(eps, f)``: evaluate the bound and search for a metastable window below it.

    With ``max_workers > 1`` the scans run on a thread pool; rows keep grid order.
    """
    start_time = time.perf_counter()
    grid = [(eps, f) for eps in eps_grid for f in f_grid]
    task = lambda ef: _soundness_row(traj, bound_fn, ef[0], ef[1], N)  # noqa: E731
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            rows = list(pool.map(task, grid))
    else:
        rows = [task(ef) for ef in grid]
    statuses = [r[0] for r in rows]
    measured = [r[1] for r in rows]
    witnesses = [r[2] for r in rows if r[2] is not None]
    bound_traces = [r[3] for r in rows if r[3] is not None]
    return VerificationReport(
        check_id=check_id,
        status=combine_status(statuses),
        measured={"rows": measured},
        tolerances={"float_slack": FLOAT_SLACK, "solver_slack": "2 * max inner error bound over the window"},
        witnesses=witnesses,
        provenance=provenance if provenance is not None else traj.provenance(),
        details={"bound_traces": bound_traces} if bound_traces else {},
        runtime=time.perf_counter() - start_time,
    )


def reports_to_csv(reports: Sequence[VerificationReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check_id", "status", "n_witnesses"])
        for r in reports:
            w.writerow([r.check_id, r.status, len(r.witnesses)])

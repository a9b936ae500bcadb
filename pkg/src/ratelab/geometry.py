"""W-hyperbolic space instances and axiom checks.

The concrete spaces are closed balls ``C`` in a (possibly weighted) Euclidean
space.  Normed spaces are hyperbolic with the linear convexity map
``W(x, y, lam) = (1 - lam) x + lam y``, so every scheme in the package is
written against :meth:`Space.w_combine` and :meth:`Space.dist` only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .errors import InputError
from .report import FAIL, PASS, VerificationReport

EUCLIDEAN = "euclidean"
WEIGHTED = "weighted-euclidean"


def make_rng(seed: int = 0) -> np.random.Generator:
    """Counter-based generator (Philox) used for every sampler in the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


def as_point(x, dimension: Optional[int] = None) -> np.ndarray:
    """Coerce ``x`` to a finite float vector, optionally checking its length."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise InputError(f"a point must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("point has non-finite coordinates")
    if dimension is not None and arr.shape[0] != dimension:
        raise InputError(f"dimension mismatch: expected {dimension}, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True, eq=False)
class Space:
    """A closed ball ``C`` inside a Euclidean-type normed space.

    ``b`` is the integer diameter bound used by every rate formula; it must
    dominate ``2 * radius``.
    """

    dimension: int
    radius: float = 1.0
    center: Optional[np.ndarray] = None
    b: Optional[int] = None
    ambient: str = EUCLIDEAN
    weights: Optional[np.ndarray] = None
    _center: np.ndarray = field(init=False, repr=False, compare=False)
    _weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise InputError("dimension must be a positive integer")
        if not self.radius > 0:
            raise InputError("radius must be positive")
        center = np.zeros(self.dimension) if self.center is None else as_point(self.center, self.dimension)
        object.__setattr__(self, "_center", center)
        if self.ambient == EUCLIDEAN:
            weights = np.ones(self.dimension)
        elif self.ambient == WEIGHTED:
            if self.weights is None:
                raise InputError("weighted-euclidean space needs weights")
            weights = as_point(self.weights, self.dimension)
            if np.any(weights <= 0):
                raise InputError("weights must be positive")
        else:
            raise InputError(f"unknown ambient tag {self.ambient!r}")
        object.__setattr__(self, "_weights", weights)
        b = self.b
        if b is None:
            b = int(np.ceil(2 * float(self.radius) - 1e-12))
            b = max(b, 1)
            object.__setattr__(self, "b", b)
        if int(b) != b or b < 1:
            raise InputError("diameter bound b must be a positive integer")
        if b < 2 * float(self.radius) - 1e-12:
            raise InputError(f"b={b} does not bound the diameter 2*radius={2 * float(self.radius)}")

    @property
    def origin(self) -> np.ndarray:
        return self._center.copy()

    def norm(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.sqrt(np.sum(self._weights * v * v, axis=-1))

    def dist(self, x, y) -> np.ndarray:
        """Metric; broadcasts over leading axes."""
        return self.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))

    def w_combine(self, x, y, lam) -> np.ndarray:
        """``(1 - lam) x (+) lam y``; ``lam`` may be an array matching the leading axes."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        lam = np.asarray(lam, dtype=float)
        if lam.ndim and lam.ndim < x.ndim:
            lam = lam[..., None]
        return (1.0 - lam) * x + lam * y

    def contains(self, x, slack: float = 1e-12) -> bool:
        return bool(np.all(self.dist(x, self._center) <= float(self.radius) + slack))

    def project(self, x) -> np.ndarray:
        """Radial retraction onto ``C`` (the metric projection for the unweighted norm)."""
        x = np.asarray(x, dtype=float)
        offset = x - self._center
        r = self.norm(offset)
        if r <= float(self.radius):
            return x.copy()
        return self._center + offset * (float(self.radius) / r)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` points uniformly distributed in ``C`` (shape ``(n, dimension)``)."""
        direction = rng.standard_normal((n, self.dimension))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        # unit Euclidean sphere -> unit sphere of the weighted norm
        direction /= self.norm(direction)[:, None]
        radii = float(self.radius) * rng.random(n) ** (1.0 / self.dimension)
        return self._center + direction * radii[:, None]

    def describe(self) -> dict:
        out = {
            "dimension": self.dimension,
            "ambient": self.ambient,
            "center": self._center.tolist(),
            "radius": _num_out(self.radius),
            "b": int(self.b),
        }
        if self.ambient == WEIGHTED:
            out["weights"] = self._weights.tolist()
        return out


class CorruptedWSpace(Space):
    """Deliberately broken convexity map using ``lam**2``; violates (W2)."""

    def w_combine(self, x, y, lam):
        return super().w_combine(x, y, np.asarray(lam, dtype=float) ** 2)


def _num_out(v):
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    return v


def unit_ball(dimension: int, radius: float = 1.0, b: Optional[int] = None) -> Space:
    return Space(dimension=dimension, radius=radius, b=b)


def dist(space: Space, x, y) -> float:
    x = as_point(x, space.dimension)
    y = as_point(y, space.dimension)
    return float(space.dist(x, y))


def w_combine(space: Space, x, y, lam) -> np.ndarray:
    if not 0.0 <= float(lam) <= 1.0:
        raise InputError(f"lambda={lam} outside [0, 1]")
    x = as_point(x, space.dimension)
    y = as_point(y, space.dimension)
    return space.w_combine(x, y, float(lam))


Sampler = Callable[[np.random.Generator, int], np.ndarray]


def check_w_axioms(
    space: Space,
    sampler: Optional[Sampler] = None,
    n_samples: int = 1000,
    tol: float = 1e-9,
    check_cn: bool = False,
    seed: int = 0,
) -> VerificationReport:
    """Sample tuples from ``C`` and measure the worst violation of (W1)-(W4).

    With ``check_cn`` the CN^- inequality at ``lam = 1/2`` is measured too.
    The report passes iff every measured violation is at most ``tol``.
    """
    if n_samples < 1:
        raise InputError("n_samples must be >= 1")
    start = time.perf_counter()
    rng = make_rng(seed)
    draw = sampler if sampler is not None else space.sample
    x, y, z, w = (draw(rng, n_samples) for _ in range(4))
    lam = rng.random(n_samples)
    lam2 = rng.random(n_samples)
    # endpoints are where broken maps tend to show up
    lam[: min(4, n_samples)] = [0.0, 1.0, 0.5, 0.25][: min(4, n_samples)]
    d = space.dist

    W = space.w_combine
    wxy = W(x, y, lam)
    w1 = d(z, wxy) - ((1 - lam) * d(z, x) + lam * d(z, y))
    w2 = np.abs(d(wxy, W(x, y, lam2)) - np.abs(lam - lam2) * d(x, y))
    w3 = d(wxy, W(y, x, 1 - lam))
    w4 = d(W(x, z, lam), W(y, w, lam)) - ((1 - lam) * d(x, y) + lam * d(z, w))

    violations = {
        "W1": w1,
        "W2": w2,
        "W3": w3,
        "W4": w4,
    }
    if check_cn:
        half = np.full(n_samples, 0.5)
        mid = W(x, y, half)
        violations["CN-"] = d(z, mid) ** 2 - (0.5 * d(z, x) ** 2 + 0.5 * d(z, y) ** 2 - 0.25 * d(x, y) ** 2)

    measured = {}
    witnesses = []
    ok = True
    for name, v in violations.items():
        worst = int(np.argmax(v))
        vmax = max(float(v[worst]), 0.0)
        measured[name] = vmax
        if vmax > tol:
            ok = False
            witnesses.append({"axiom": name, "index": worst, "violation": vmax, "lambda": float(lam[worst])})
    return VerificationReport(
        check_id=f"w-axioms[{type(space).__name__},dim={space.dimension}]",
        status=PASS if ok else FAIL,
        measured=measured,
        tolerances={"abs": tol},
        witnesses=witnesses,
        provenance={"space": space.describe(), "n_samples": n_samples, "seed": seed, "cn": check_cn},
        runtime=time.perf_counter() - start,
    )

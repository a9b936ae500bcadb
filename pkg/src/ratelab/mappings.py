"""Self-maps of ``C`` together with the contraction class they claim.

Maps are closed-form descriptors (affine maps, rotations, scalings, constant
maps, ball-projected composites) so that invariance of ``C`` is cheap to
check.  A ``table`` escape hatch wraps an arbitrary callable; it is only ever
validated by sampling.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError, ModulusError
from .geometry import Space, as_point, make_rng
from .report import FAIL, PASS, VerificationReport

#: r = 0 would give delta = 1, outside the open interval (0, 1)
DELTA_CLAMP = Fraction(1) - Fraction(1, 10**12)


@dataclass(frozen=True)
class RakotchModulus:
    """``delta: (0, inf) -> (0, 1)`` with ``d(x,y) >= eps => d(phi x, phi y) <= (1 - delta(eps)) d(x,y)``.

    ``constant`` is set when the modulus does not depend on ``eps`` (the
    r-contraction case); several transformers require it.
    """

    delta: Callable[[float], float]
    constant: Optional[float] = None
    nonincreasing: bool = False
    desc: str = ""

    def __call__(self, eps):
        if not eps > 0:
            raise InputError(f"Rakotch modulus evaluated at eps={eps} <= 0")
        value = self.delta(eps)
        if not 0 < value < 1:
            raise ModulusError(f"Rakotch modulus delta({eps}) = {value} is not in (0, 1)")
        return value

    @classmethod
    def const(cls, value) -> "RakotchModulus":
        if not 0 < value < 1:
            raise ModulusError(f"constant Rakotch modulus {value} is not in (0, 1)")
        return cls(delta=lambda eps: value, constant=value, nonincreasing=True, desc=f"const {value}")


@dataclass(frozen=True)
class MKCModulus:
    """``sigma(eps)`` in ``(0, eps)`` with ``d(x,y) < eps/4 + sigma(eps) => d(phi x, phi y) <= eps/4``.

    The Meir-Keeler ``for all eps exists delta`` is stored already specialised
    to the ``eps/4`` threshold, which is the form the Rakotch conversion uses.
    """

    sigma: Callable[[float], float]
    desc: str = ""

    def __call__(self, eps):
        value = self.sigma(eps)
        if not 0 < value < eps:
            raise ModulusError(f"MKC modulus sigma({eps}) = {value} is not in (0, {eps})")
        return value


def rakotch_from_mkc(mkc: MKCModulus) -> RakotchModulus:
    """Rakotch modulus ``delta(eps) = sigma(eps) / (4 eps)``.

    This is the explicit witness from the segment-subdivision argument; the
    supremum over admissible ``sigma`` is not attempted.
    """

    def delta(eps):
        return mkc(eps) / (4 * eps)

    return RakotchModulus(delta=delta, desc=f"from-mkc({mkc.desc})")


def rakotch_from_contraction(r) -> RakotchModulus:
    """Constant modulus ``1 - r`` of an r-contraction (clamped below 1 for ``r = 0``)."""
    if not 0 <= r < 1:
        raise InputError(f"contraction factor r={r} must lie in [0, 1)")
    value = 1 - r
    if value >= 1:
        value = DELTA_CLAMP
    return RakotchModulus.const(value)


NONEXPANSIVE = "nonexpansive"
CONTRACTION = "contraction"
MKC = "mkc"
RAKOTCH = "rakotch"


@dataclass(frozen=True)
class MapClass:
    kind: str = NONEXPANSIVE
    r: Optional[float] = None
    modulus: object = None

    def __post_init__(self):
        if self.kind not in (NONEXPANSIVE, CONTRACTION, MKC, RAKOTCH):
            raise InputError(f"unknown map class {self.kind!r}")
        if self.kind == CONTRACTION and (self.r is None or not 0 <= self.r < 1):
            raise InputError("contraction class needs r in [0, 1)")
        if self.kind in (MKC, RAKOTCH) and self.modulus is None:
            raise InputError(f"{self.kind} class needs a modulus")

    def rakotch(self) -> RakotchModulus:
        """Best available Rakotch modulus for the claimed class."""
        if self.kind == CONTRACTION:
            return rakotch_from_contraction(self.r)
        if self.kind == RAKOTCH:
            return self.modulus
        if self.kind == MKC:
            return rakotch_from_mkc(self.modulus)
        raise InputError("a nonexpansive map has no Rakotch modulus")


@dataclass(frozen=True, eq=False)
class MapDescriptor:
    """A closed-form map ``C -> C`` with the class it claims to belong to."""

    kind: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    claimed: MapClass = field(default_factory=MapClass)
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def with_class(self, claimed: MapClass) -> "MapDescriptor":
        return MapDescriptor(self.kind, self.func, claimed, dict(self.params))

    def describe(self) -> dict:
        out = {"kind": self.kind, **self.params, "class": self.claimed.kind}
        if self.claimed.r is not None:
            out["r"] = self.claimed.r
        return out


def _as_center(center, dimension):
    return np.zeros(dimension) if center is None else as_point(center, dimension)


def identity() -> MapDescriptor:
    return MapDescriptor("identity", lambda x: x.copy(), MapClass(NONEXPANSIVE))


def scaled_identity(c, center=None, dimension: Optional[int] = None) -> MapDescriptor:
    """``x -> center + c (x - center)``; a ``|c|``-contraction when ``|c| < 1``."""
    c = float(c)
    if center is None:
        fn = lambda x: c * x
    else:
        p = as_point(center, dimension)
        fn = lambda x: p + c * (x - p)
    cls = MapClass(CONTRACTION, r=abs(c)) if abs(c) < 1 else MapClass(NONEXPANSIVE)
    return MapDescriptor("scaled-identity", fn, cls, {"c": c})


def constant(value) -> MapDescriptor:
    p = as_point(value)
    return MapDescriptor(
        "constant",
        lambda x: np.broadcast_to(p, np.shape(x)).copy(),
        MapClass(CONTRACTION, r=0.0),
        {"value": p.tolist()},
    )


def rotation(angle: float, center=None, plane: Sequence[int] = (0, 1)) -> MapDescriptor:
    """Rotation by ``angle`` in the coordinate ``plane`` about ``center``; an isometry."""
    i, j = plane
    cs, sn = math.cos(angle), math.sin(angle)

    def fn(x):
        p = np.zeros(x.shape[-1]) if center is None else np.asarray(center, dtype=float)
        v = x - p
        out = v.copy()
        out[..., i] = cs * v[..., i] - sn * v[..., j]
        out[..., j] = sn * v[..., i] + cs * v[..., j]
        return p + out

    return MapDescriptor("rotation", fn, MapClass(NONEXPANSIVE), {"angle": angle})


def affine(matrix, shift=None) -> MapDescriptor:
    """``x -> M x + s``; claims the spectral norm of ``M`` as contraction factor."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    s = np.zeros(m.shape[0]) if shift is None else as_point(shift, m.shape[0])
    r = float(np.linalg.norm(m, 2))
    cls = MapClass(CONTRACTION, r=r) if r < 1 else MapClass(NONEXPANSIVE)
    return MapDescriptor(
        "affine-contraction", lambda x: x @ m.T + s, cls, {"matrix": m.tolist(), "shift": s.tolist()}
    )


def projection_composite(space: Space, inner: MapDescriptor) -> MapDescriptor:
    """``P_C o inner``; nonexpansive whenever ``inner`` is (the projection is 1-Lipschitz)."""

    def fn(x):
        y = inner(x)
        if y.ndim == 1:
            return space.project(y)
        return np.array([space.project(row) for row in y])

    return MapDescriptor("projection-composite", fn, inner.claimed, {"inner": inner.describe()})


def table(func: Callable, claimed: Optional[MapClass] = None, name: str = "table") -> MapDescriptor:
    """Arbitrary user callable; only sampling-based validation applies."""

    def fn(x):
        if x.ndim == 1:
            return np.asarray(func(x), dtype=float)
        return np.array([np.asarray(func(row), dtype=float) for row in x])

    return MapDescriptor("user-table", fn, claimed or MapClass(NONEXPANSIVE), {"name": name})


def apply(map: MapDescriptor, x, space: Optional[Space] = None) -> np.ndarray:
    """Evaluate ``map`` at ``x``; with a space, both ``x`` and the image must lie in ``C``."""
    x = as_point(x, None if space is None else space.dimension)
    if space is not None and not space.contains(x):
        raise InputError("point lies outside C")
    y = map(x)
    if space is not None and not space.contains(y):
        raise InputError(f"map {map.kind} sent a point of C outside C")
    return y


class MapFamily:
    """Indexed family ``n -> S_n`` of nonexpansive maps."""

    def __init__(self, member: Callable[[int], MapDescriptor], name: str = "family"):
        self._member = member
        self.name = name
        self._const: Optional[MapDescriptor] = None

    @classmethod
    def constant(cls, T: MapDescriptor) -> "MapFamily":
        fam = cls(lambda n: T, name=f"const({T.kind})")
        fam._const = T
        return fam

    @property
    def is_constant(self) -> bool:
        return self._const is not None

    def __getitem__(self, n: int) -> MapDescriptor:
        return self._member(n)

    def describe(self) -> dict:
        if self._const is not None:
            return {"constant": self._const.describe()}
        return {"name": self.name}


def as_family(T) -> MapFamily:
    return T if isinstance(T, MapFamily) else MapFamily.constant(T)


def _close_pairs(space: Space, rng, n: int, max_dist: float):
    """Pairs in C at distance < max_dist (rejection of the partner that leaves C)."""
    x = space.sample(rng, n)
    step = rng.standard_normal((n, space.dimension))
    step /= space.norm(step)[:, None]
    radii = max_dist * rng.random(n) * (1 - 1e-12)
    y = x + step * radii[:, None]
    inside = space.dist(y, space.origin) <= float(space.radius)
    y[~inside] = x[~inside]
    return x, y


def check_class(
    map: MapDescriptor,
    space: Space,
    sampler=None,
    n_samples: int = 1000,
    tol: float = 1e-9,
    eps_grid: Sequence[float] = (0.25, 0.5, 1.0),
    seed: int = 0,
) -> VerificationReport:
    """Test the claimed class inequality (and C-invariance) on sampled pairs."""
    start = time.perf_counter()
    rng = make_rng(seed)
    draw = sampler if sampler is not None else space.sample
    cls = map.claimed
    d = space.dist
    measured = {}
    witnesses = []

    def record(name, x, y, viol):
        worst = int(np.argmax(viol)) if len(viol) else 0
        v = float(viol[worst]) if len(viol) else 0.0
        measured[name] = max(v, 0.0)
        if v > tol:
            witnesses.append({"check": name, "x": x[worst].tolist(), "y": y[worst].tolist(), "violation": v})

    x, y = draw(rng, n_samples), draw(rng, n_samples)
    tx, ty = map(x), map(y)
    out_of_c = d(tx, space.origin) - float(space.radius)
    record("invariance", x, x, out_of_c)

    dxy, dt = d(x, y), d(tx, ty)
    if cls.kind == NONEXPANSIVE:
        record("nonexpansive", x, y, dt - dxy)
    elif cls.kind == CONTRACTION:
        record(f"contraction(r={cls.r})", x, y, dt - cls.r * dxy)
    elif cls.kind == RAKOTCH:
        record("nonexpansive", x, y, dt - dxy)
        for eps in eps_grid:
            mask = dxy >= eps
            delta = float(cls.modulus(eps))
            record(f"rakotch(eps={eps})", x[mask], y[mask], dt[mask] - (1 - delta) * dxy[mask])
    elif cls.kind == MKC:
        record("nonexpansive", x, y, dt - dxy)
        for eps in eps_grid:
            sigma = float(cls.modulus(eps))
            cx, cy = _close_pairs(space, rng, n_samples, eps / 4 + sigma)
            record(f"mkc(eps={eps})", cx, cy, d(map(cx), map(cy)) - eps / 4)

    failed = bool(witnesses)
    return VerificationReport(
        check_id=f"map-class[{map.kind}:{cls.kind}]",
        status=FAIL if failed else PASS,
        measured=measured,
        tolerances={"abs": tol},
        witnesses=witnesses,
        provenance={"map": map.describe(), "space": space.describe(), "n_samples": n_samples, "seed": seed},
        runtime=time.perf_counter() - start,
    )

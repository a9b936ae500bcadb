"""Structured verification records."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"


def jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and Fractions into JSON-friendly values.

    Fractions become exact ``"p/q"`` strings (``"3"`` when integral).
    """
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return jsonable(value.item())
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


@dataclass
class VerificationReport:
    """Outcome of one empirical check.

    ``status`` is one of ``"pass"``, ``"fail"`` or ``"inconclusive"``; an
    inconclusive report never counts as a falsification.
    """

    check_id: str
    status: str
    measured: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    witnesses: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status == PASS

    @property
    def failed(self) -> bool:
        return self.status == FAIL

    def to_dict(self, include_runtime: bool = False) -> dict:
        out = {
            "check_id": self.check_id,
            "status": self.status,
            "measured": jsonable(self.measured),
            "tolerances": jsonable(self.tolerances),
            "witnesses": jsonable(self.witnesses),
            "provenance": jsonable(self.provenance),
            "details": jsonable(self.details),
        }
        if include_runtime:
            out["runtime"] = self.runtime
        return out

    def to_json(self, include_runtime: bool = False) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=2, sort_keys=True)

    def summary(self) -> str:
        return f"[{self.status.upper():>12}] {self.check_id}"


def combine_status(statuses) -> str:
    """Fail dominates, then inconclusive, then pass."""
    statuses = list(statuses)
    if FAIL in statuses:
        return FAIL
    if INCONCLUSIVE in statuses:
        return INCONCLUSIVE
    return PASS

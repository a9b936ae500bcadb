"""Quantitative rates for viscosity, Halpern and Krasnoselskii-Mann iterations.

Rates are exact integer/rational computations (``rate_calculus``,
``transformers``, ``uniqueness``); the ``verifier`` checks them empirically
on simulated trajectories from ``schemes`` over spaces from ``geometry``.
"""

from .errors import (
    ConfigError,
    ContractError,
    InconclusiveError,
    InputError,
    ModulusError,
    RatelabError,
    SolverError,
)
from .geometry import Space, check_w_axioms, dist, unit_ball, w_combine
from .report import FAIL, INCONCLUSIVE, PASS, VerificationReport

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "FAIL",
    "INCONCLUSIVE",
    "InconclusiveError",
    "InputError",
    "ModulusError",
    "PASS",
    "RatelabError",
    "SolverError",
    "Space",
    "VerificationReport",
    "check_w_axioms",
    "dist",
    "unit_ball",
    "w_combine",
]

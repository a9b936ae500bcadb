"""Exception types shared across the package."""


class RatelabError(Exception):
    """Base class for all errors raised by ratelab."""


class InputError(RatelabError, ValueError):
    """An argument violates an operation's precondition."""


class ModulusError(RatelabError, ValueError):
    """A modulus callable returned a value outside its admissible range."""


class ContractError(RatelabError, TypeError):
    """A rate object lacks a property (flag) the operation requires."""


class SolverError(RatelabError, RuntimeError):
    """An inner fixed-point solve exhausted its iteration budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InconclusiveError(RatelabError):
    """A check could not be completed within its resource budget.

    Distinct from a failed check: nothing was falsified.
    """


class ConfigError(RatelabError, ValueError):
    """An experiment configuration is malformed or references unknown presets."""

"""Typed errors shared by every module.

Shape algebra is total: an operation either returns a tensor whose shape
follows its documented formula or raises one of these. Nothing broadcasts
silently.
"""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the operation's shape formula."""


class ConfigError(ValueError):
    """A layer spec, hyperparameter, or run configuration is invalid."""


class ContractError(ValueError):
    """An API precondition unrelated to shapes or configuration was violated."""

"""Exception hierarchy shared by every module."""


class CemError(Exception):
    """Base class for all errors raised by cemcache."""


class ConfigurationError(CemError, ValueError):
    """An invalid configuration value; ``field`` names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ContractError(CemError, ValueError):
    """A precondition of an operation was violated."""


class IntervalLookupError(ContractError, LookupError):
    """A cache interval is not a member of the candidate set."""


class InstanceTooLargeError(ContractError):
    """An exhaustive search would exceed its size guard."""


class InfeasibleError(CemError):
    """No caching schedule satisfies the requested budget."""


class DegenerateInputError(CemError, ValueError):
    """The input makes the requested quantity undefined (zero norm, constant ranks, ...)."""


class NumericalDivergenceError(CemError, ArithmeticError):
    def __init__(self, timestep: int):
        self.timestep = timestep
        super().__init__(f"non-finite value encountered at timestep {timestep}")


class ParseError(CemError, ValueError):
    """A file could not be parsed. ``line`` is 1-based, or None for whole-file problems."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class IntegrityError(ParseError):
    """A file parsed but its redundant fields disagree with each other."""

"""Exception hierarchy for the library.

Diagnostic functions (``validate_*``) return lists of violations instead of raising;
everything that needs valid input raises one of the errors below.
"""

from typing import Optional


class LexRLError(Exception):
    """Base class for all library errors."""


class MdpValidationError(LexRLError):
    """Raised when an MDP violates its invariants."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("invalid MDP: " + "; ".join(violations))


class GridSpecError(LexRLError):
    """Raised for grid specs that cannot be turned into an MDP."""


class EnvironmentFormatError(LexRLError):
    """Raised when an environment file cannot be read."""


class LtlSyntaxError(LexRLError):
    """Raised for malformed LTL text; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} (at position {position})")


class UnknownPropositionError(LtlSyntaxError):
    """Raised when a formula mentions a proposition outside the alphabet."""

    def __init__(self, name: str, position: int):
        self.name = name
        super().__init__(f"unknown atomic proposition '{name}'", position)


class NotSafetyFormulaError(LexRLError):
    """Raised when a formula is outside the syntactic safety fragment."""


class AutomatonTooLargeError(LexRLError):
    """Raised when formula progression exceeds the state cap."""

    def __init__(self, limit: int):
        self.limit = limit
        super().__init__(
            f"safety automaton exceeds {limit} states; translate the formula with an "
            "external tool and import it in HOA format instead"
        )


class HoaFormatError(LexRLError):
    """Raised for malformed HOA input, tagged with line and column."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class UnsupportedHoaFeatureError(LexRLError):
    """Raised for HOA features outside the supported subset."""

    def __init__(self, feature: str):
        self.feature = feature
        super().__init__(f"unsupported HOA feature: {feature}")


class UnsuitableLdbaError(LexRLError):
    """Raised when an automaton is not a suitable LDBA."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("automaton is not a suitable LDBA: " + "; ".join(violations))


class AlphabetMismatchError(LexRLError):
    """Raised when an automaton reads propositions the MDP does not label."""

    def __init__(self, missing: list[str]):
        self.missing = missing
        super().__init__("propositions missing from the MDP alphabet: " + ", ".join(missing))


class DisallowedActionError(LexRLError):
    """Raised when an action is not allowed in a state."""

    def __init__(self, state: object, action: object):
        self.state = state
        self.action = action
        super().__init__(f"action {action!r} is not allowed in state {state!r}")


class EmptyActionSetError(LexRLError):
    """Raised when an action restriction leaves a state without any action."""

    def __init__(self, state: object):
        self.state = state
        super().__init__(f"no allowed action left in state {state!r}")


class ConfigError(LexRLError):
    """Raised for invalid experiment configurations."""


class CheckpointError(LexRLError):
    """Raised for unreadable or incompatible checkpoints."""


class DimensionMismatchError(CheckpointError):
    """Raised when a checkpoint does not fit the product it is checked against."""


class StageError(LexRLError):
    """Wraps a failure of one experiment stage."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")

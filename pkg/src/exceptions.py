from typing import Optional, Any, Dict


class MagcapException(Exception):
    """
    Base exception for all magcap errors.

    Provides structured error information with details for logging and for the
    CLI's machine-readable error output. All custom exceptions inherit from it.

    Args:
        message: Human-readable error message
        details: Additional structured data about the error

    Example:
        >>> raise MagcapException("Something went wrong", {"context": "solve"})
    """

    def __init__(self, message: str, details: Optional[Any] = None):
        self.message = message
        self.details = details
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for logging/serialization."""
        return {
            "error_type": self.__class__.__name__,
            "message": self.message,
            "details": self.details
        }


class SeparationError(MagcapException):
    """
    Raised when the EPM-IPM distance drops below the dipole model's validity floor.

    Args:
        norm: The offending separation norm (m)
        min_separation: Configured floor (m)
        stage: RK4 stage index when raised inside an integration step

    Example:
        >>> raise SeparationError(0.031, 0.05)
    """

    def __init__(self, norm: float, min_separation: float, stage: Optional[int] = None):
        self.norm = norm
        self.min_separation = min_separation
        self.stage = stage
        where = f" at RK4 stage {stage}" if stage is not None else ""
        message = f"Separation {norm:.6g} m below minimum {min_separation:.6g} m{where}"
        super().__init__(message, {"norm": norm, "min_separation": min_separation, "stage": stage})

    def at_stage(self, stage: int) -> "SeparationError":
        """Return a copy annotated with the integrator stage."""
        return SeparationError(self.norm, self.min_separation, stage)


class ContractViolationError(MagcapException):
    """
    Raised when a function's preconditions are broken (shapes, signs, ranges).

    Args:
        name: Argument or quantity that violates the contract
        message: Description of the violation
    """

    def __init__(self, name: str, message: str):
        self.name = name
        error_message = f"Contract violation for {name}: {message}"
        super().__init__(error_message, {"name": name, "message": message})


class ScenarioParseError(MagcapException):
    """
    Raised when a scenario file cannot be parsed.

    Args:
        path: Scenario file path
        line: 1-based line of the problem (None if unknown)
        column: 1-based column of the problem (None if unknown)
        problem: Parser description
    """

    def __init__(self, path: str, line: Optional[int], column: Optional[int], problem: str):
        self.path = path
        self.line = line
        self.column = column
        location = f"{path}:{line}:{column}" if line is not None else path
        message = f"Cannot parse scenario {location}: {problem}"
        super().__init__(message, {"path": path, "line": line, "column": column, "problem": problem})


class ScenarioValidationError(MagcapException):
    """
    Raised when a scenario parses but violates a semantic invariant.

    Args:
        field: Dotted path of the offending field (e.g. constraints.joint_limits.q_min[3])
        message: Which invariant is violated and how
    """

    def __init__(self, field: str, message: str):
        self.field = field
        error_message = f"Invalid scenario field {field}: {message}"
        super().__init__(error_message, {"field": field, "message": message})


class EquilibriumError(MagcapException):
    """
    Raised when no joint configuration balances the IPM within joint limits.

    Args:
        reason: Why the search failed
    """

    def __init__(self, reason: str):
        message = (
            f"No equilibrium configuration found: {reason}. "
            "Try moving the IPM start closer to the arm or relaxing joint limits / EPM floor."
        )
        super().__init__(message, {"reason": reason})


class RolloutDivergedError(MagcapException):
    """
    Raised when a rollout produces non-finite states.

    Args:
        step: Time index where the rollout blew up
        reason: Description
    """

    def __init__(self, step: int, reason: str):
        self.step = step
        message = f"Rollout diverged at step {step}: {reason}"
        super().__init__(message, {"step": step, "reason": reason})


class BundleError(MagcapException):
    """
    Raised when a result bundle directory is missing files or is inconsistent.

    Args:
        path: Bundle directory or file
        reason: What is wrong with it
    """

    def __init__(self, path: str, reason: str):
        self.path = path
        message = f"Result bundle error for {path}: {reason}"
        super().__init__(message, {"path": path, "reason": reason})

# ============================================================================
#  File:    error_handling.py
#  Purpose: Error codes, standardized messages and the exception hierarchy
#           shared by every stage of the imaging pipeline
# ============================================================================
# SECTION 1: Imports and Globals
# ============================================================================
#
import traceback
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, Optional

from loguru import logger
#
# ============================================================================
# SECTION 2: Error Codes and Messages
# ============================================================================
ERROR_CODES = {
    'E001': 'Invalid input',
    'E002': 'Config validation failed',
    'E003': 'Geometry construction failed',
    'E004': 'Field operation failed',
    'E005': 'Linear solve failed',
    'E006': 'Numeric breach',
    'E007': 'Artifact IO failed',
    'E008': 'Pipeline stage failed',
    'E999': 'Unknown error'
}

# Exit codes returned by the command line entry point
EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_NUMERIC_ERROR = 3
#
# ============================================================================
# SECTION 3: Error Handling Utilities
# ============================================================================
# Function 3.1: get_error_message
# Purpose: Formats a standardized error message from an error code.
# ============================================================================
#
def get_error_message(code: str, detail: Optional[Any] = None) -> str:
    """Formats a standardized error message from an error code."""
    message = ERROR_CODES.get(code, ERROR_CODES['E999'])
    if detail:
        return f"[{code}] {message}: {str(detail)}"
    return f"[{code}] {message}"
#
# ============================================================================
# Class 3.2: ErrorContext
# Purpose: Structured record of a failure, written to the log and manifest.
# ============================================================================
#
@dataclass
class ErrorContext:
    """Context information for error handling."""
    error_type: str
    error_message: str
    timestamp: datetime
    stack_trace: Optional[str] = None
    context_data: Dict[str, Any] = field(default_factory=dict)
    severity: str = "error"
    resolution_hint: Optional[str] = None
#
# ============================================================================
# SECTION 4: Exception Hierarchy
# ============================================================================
# Class 4.1: MreitError
# Purpose: Base class carrying an error code, context data and an exit code.
# ============================================================================
#
class MreitError(Exception):
    """
    Base error for the toolkit.

    Every subclass fixes its error code; the command line maps
    ``exit_code`` onto the process status.
    """

    error_code: str = 'E999'
    exit_code: int = EXIT_NUMERIC_ERROR
    resolution_hint: Optional[str] = None

    def __init__(self, message: str, error_code: Optional[str] = None,
                 context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        if error_code is not None:
            self.error_code = error_code
        self.context = context or {}
        self.timestamp = datetime.now()

    def formatted(self) -> str:
        return get_error_message(self.error_code, str(self))

    def to_error_context(self) -> ErrorContext:
        """Convert to a structured error record."""
        return ErrorContext(
            error_type=self.error_code,
            error_message=str(self),
            timestamp=self.timestamp,
            stack_trace="".join(traceback.format_exception(self)) if self.__traceback__ else None,
            context_data=self.context,
            severity="error",
            resolution_hint=self.resolution_hint or ERROR_CODES.get(self.error_code, "Unknown error")
        )


class ConfigError(MreitError):
    error_code = 'E002'
    exit_code = EXIT_CONFIG_ERROR
    resolution_hint = "Check the experiment file against config/experiment_schema.json"


class GeometryError(MreitError):
    error_code = 'E003'
    resolution_hint = "Check grid extent, domain shape and electrode placement"


class FieldError(MreitError):
    error_code = 'E004'


class PhantomError(MreitError):
    error_code = 'E001'


class SolverError(MreitError):
    error_code = 'E005'
    resolution_hint = "Check for disconnected unknowns or nonpositive coefficients"


class NumericError(MreitError):
    error_code = 'E006'


class MetricsError(MreitError):
    error_code = 'E001'


class ArtifactError(MreitError):
    error_code = 'E007'
#
# ============================================================================
# Class 4.2: StageError
# Purpose: Wraps any failure inside a named pipeline stage.
# ============================================================================
#
class StageError(MreitError):
    """Failure inside a pipeline stage; keeps the cause's exit code."""

    error_code = 'E008'

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}", context={"stage": stage})
        self.stage = stage
        self.cause = cause
        if isinstance(cause, MreitError):
            self.exit_code = cause.exit_code
            self.context["cause_code"] = cause.error_code
#
# ============================================================================
# Function 4.3: log_error
# Purpose: Logs an error with its structured context and returns the record.
# ============================================================================
#
def log_error(error: MreitError) -> ErrorContext:
    record = error.to_error_context()
    logger.error(
        "{} | context={} | hint={}",
        error.formatted(), record.context_data, record.resolution_hint
    )
    return record
#
#
## End of Script

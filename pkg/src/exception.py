import sys
from typing import Optional

from src.logger import logging


def error_message_detail(error, error_detail: sys):
    """
    Generates a detailed error message including file name and line number of the exception.

    Args:
        error (Exception): The error object.
        error_detail (sys): System information related to the error.

    Returns:
        str: Detailed error message formatted as "[File Name] [Line Number]: [Error Message]".
    """
    _, _, ex_tb = error_detail.exc_info()
    if ex_tb is None:
        return str(error)
    # walk to the innermost frame, where the error was actually raised
    while ex_tb.tb_next is not None:
        ex_tb = ex_tb.tb_next
    file_name = ex_tb.tb_frame.f_code.co_filename
    error_message = f"Error occurred in Python script '{file_name}' at line {ex_tb.tb_lineno}: {str(error)}"
    return error_message


class CustomException(Exception):
    """
    Wraps a failure at a stage boundary and records where it happened.

    Attributes:
        error_message (str): Detailed error message including file name and line number.
        cause (Exception): The original error, kept so callers can branch on its type.
    """
    def __init__(self, error_message, error_detail):
        """
        Args:
            error_message (Exception | str): The error being wrapped.
            error_detail (sys): System information related to the error.
        """
        super().__init__(error_message)
        self.cause = error_message if isinstance(error_message, Exception) else None
        self.error_message = error_message_detail(error_message, error_detail=error_detail)

    def __str__(self):
        return self.error_message


class ZebrafishCountError(ValueError):
    """Base class for every domain error raised by the components."""


class BadMagic(ZebrafishCountError):
    """Stream does not start with the EVS1 magic."""


class TruncatedRecord(ZebrafishCountError):
    """Input length is not a header plus a whole number of records."""


class CoordOutOfRange(ZebrafishCountError):
    """An event lies outside the sensor declared by the stream header."""


class TimestampRegression(ZebrafishCountError):
    """An event is older than the one before it."""


class InvariantViolation(ZebrafishCountError):
    """A value breaks a type invariant (range, sign, enumeration)."""


class ParseError(ZebrafishCountError):
    """
    Text input could not be parsed.

    Attributes:
        source (str): File name or "<text>".
        line (int): 1-based line number, if known.
        column (int): 1-based column (field) number, if known.
    """
    def __init__(self, message: str, source: str = "<text>", line: Optional[int] = None,
                 column: Optional[int] = None):
        self.source = source
        self.line = line
        self.column = column
        where = source
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")


class NonPositiveDuration(ZebrafishCountError):
    """Dark capture duration must be strictly positive."""


class GeometryMismatch(ZebrafishCountError):
    """Inputs do not share one sensor geometry."""


class NonConvergence(ZebrafishCountError):
    """Fixed-point undistortion did not reach its tolerance."""


class EventOutOfWindow(ZebrafishCountError):
    """An event handed to a window renderer lies outside that window."""


class NegativeExtent(ZebrafishCountError):
    """A box has a non-positive width or height."""


class SingularInnovationCovariance(ZebrafishCountError):
    """The Kalman innovation covariance cannot be inverted."""


class InsufficientFrames(ZebrafishCountError):
    """Fewer per-frame counts than the counting window needs."""


class EmptyGroundTruth(ZebrafishCountError):
    """Ground truth holds no boxes, so MOTA is undefined."""


class NonPositiveTruth(ZebrafishCountError):
    """A counting trial's true count must be positive."""


class UnknownFishId(ZebrafishCountError):
    """An occlusion script names a fish the scene does not have."""


class ConfigError(ZebrafishCountError):
    """Configuration file or override is invalid."""


def log_and_wrap(error: Exception, stage: str) -> CustomException:
    """Log a stage failure and return it wrapped with its origin; call inside an except block."""
    logging.error(f"Error in {stage}: {error}")
    return CustomException(error, sys)

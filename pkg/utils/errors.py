"""
Exception hierarchy for the threshold network toolkit

Every error carries the process exit code the command layer maps it to.
Library code raises these; only commands.py turns them into exit codes.
"""
from typing import Any, Dict, Optional


class BtnError(Exception):
    """Base class for all toolkit errors"""

    exit_code = 1


class ShapeError(BtnError):
    """Dimension, alphabet or file-shape violation"""

    exit_code = 4


class InconsistentDatasetError(BtnError):
    """Dataset has two samples with equal input and different labels"""

    exit_code = 2


class SearchBudgetError(BtnError):
    """Seed search gave up after its retry budget"""

    exit_code = 3

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BudgetExhaustedError(BtnError):
    """Min-size search ran out of its state budget"""

    exit_code = 3


class SamplingBudgetError(BtnError):
    """Rejection sampler hit max-draws without an accepted sample"""

    exit_code = 3

    def __init__(self, message: str, acceptance_estimate: float = 0.0, draws: int = 0):
        super().__init__(message)
        self.acceptance_estimate = acceptance_estimate
        self.draws = draws


class NoInterpolatorError(BtnError):
    """No network of the requested architecture fits the dataset"""

    exit_code = 4


class EnumerationCapError(BtnError):
    """Parameter space too large to enumerate"""

    exit_code = 4


class SupportTooLargeError(BtnError):
    """Exact computation over the support exceeds its cap"""

    exit_code = 4


class MalformedStreamError(BtnError):
    """Bit stream could not be decoded"""

    exit_code = 5

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (bit offset {offset})")
        self.offset = offset


class ConstructionError(BtnError):
    """A built object failed its own verification"""

    exit_code = 1

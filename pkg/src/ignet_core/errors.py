"""
Exception hierarchy shared by all ignet packages
"""

from typing import Dict, Optional


class IgnetError(Exception):
    """Base class for all errors raised by the pipeline"""

    category = "error"


class ShapeError(IgnetError, ValueError):
    """Array shapes do not fit an operation"""

    category = "shape"

    def __init__(self, message: str, layer: Optional[str] = None):
        self.layer = layer
        if layer is not None:
            message = f"{layer}: {message}"
        super().__init__(message)


class NotScalarError(IgnetError, ValueError):
    """Gradient requested for a non-scalar root"""

    category = "shape"


class CameraError(IgnetError, ValueError):
    """Camera parameters violate the pinhole model invariants"""

    category = "camera"


class ConfigError(IgnetError, ValueError):
    """Configuration value or toggle combination is invalid"""

    category = "config"


class NonFiniteLossError(IgnetError, ArithmeticError):
    """A loss term evaluated to NaN or infinity"""

    category = "diverged"

    def __init__(self, term: str, value: float, terms: Optional[Dict[str, float]] = None):
        self.term = term
        self.value = value
        self.terms = dict(terms) if terms is not None else {term: value}
        super().__init__(f"loss term '{term}' is not finite ({value})")


class TrainingDivergedError(IgnetError, RuntimeError):
    """Training produced a non-finite or runaway loss, or non-finite weights"""

    category = "diverged"

    def __init__(self, stage: str, step: int, terms: Dict[str, float], reason: Optional[str] = None):
        self.stage = stage
        self.step = step
        self.terms = dict(terms)
        self.reason = reason
        breakdown = ", ".join(f"{k}={v:.6g}" for k, v in sorted(self.terms.items()))
        suffix = f" ({reason})" if reason else ""
        super().__init__(f"{stage} diverged at step {step}: {breakdown}{suffix}")


class FrameFormatError(IgnetError, ValueError):
    """Binary frame file is malformed"""

    category = "format"


class CheckpointError(IgnetError, ValueError):
    """Checkpoint container is malformed or of the wrong kind"""

    category = "format"

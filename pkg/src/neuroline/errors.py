"""Exception hierarchy.

All errors derive from :class:`NeurolineError` (itself a ``ValueError``).
``stage`` is filled in by pipeline composers such as ``build_profile`` so a
caller can tell which step rejected the input.
"""


class NeurolineError(ValueError):
    stage = None


class LengthError(NeurolineError):
    """Signal too short for the requested analysis."""


class DataError(NeurolineError):
    """Non-finite or otherwise invalid sample values."""


class ConfigError(NeurolineError):
    """Invalid configuration or parameter combination."""


class SizeError(NeurolineError):
    """Sample size outside the supported range."""


class DegenerateError(NeurolineError):
    """Zero-variance or all-identical data where spread is required."""


class BaselineError(NeurolineError):
    """Idle baseline unusable (non-positive sd or too few samples)."""


class ScreeningError(NeurolineError):
    """User cannot be onboarded with the current calibration data."""


class UndecidableError(NeurolineError):
    """Measurement lies outside the support of both likelihoods."""


class FormatError(NeurolineError):
    """Malformed record or file."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class VersionError(FormatError):
    """File written by an incompatible format version."""


class TrainingAborted(NeurolineError):
    """GAN training hit a non-finite loss; ``checkpoint`` holds the last good state."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint

"""Exception types raised across the package."""


class PJSError(Exception):
    """Base class for all tracker errors."""


class InvalidInputError(PJSError, ValueError):
    """Solver inputs with mismatched shapes or non-finite values."""


class InvalidStateError(PJSError, ValueError):
    """An affine state that cannot be warped (degenerate or non-finite)."""


class ConfigError(PJSError, ValueError):
    """Inconsistent or unknown configuration values."""


class DegenerateWeightsError(PJSError, ValueError):
    """Particle weights that do not form a distribution."""


class DegenerateEvidenceError(PJSError, ValueError):
    """Both occlusion likelihoods vanished."""


class SequenceLoadError(PJSError, OSError):
    """A sequence directory is missing files or has malformed ground truth."""

"""Exception types shared across the package."""


class GiplabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(GiplabError, ValueError):
    """Invalid configuration value, key, or combination."""


class ShapeError(GiplabError, ValueError):
    """Tensor or adjacency dimensions do not line up."""


class NonFiniteError(GiplabError, FloatingPointError):
    """A forward operation produced NaN or Inf."""


class IngestError(GiplabError, ValueError):
    """A dataset file is missing, malformed, or internally inconsistent."""


class StratificationError(GiplabError, ValueError):
    """A class is too small to appear in every cross-validation fold."""


class CheckpointError(GiplabError, ValueError):
    """Base for checkpoint read failures."""


class CheckpointParseError(CheckpointError):
    """Checkpoint file is malformed; message carries the offending line number."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint magic line does not match the supported format version."""


class CompatibilityError(GiplabError, ValueError):
    """Checkpoint and dataset disagree (e.g. feature dimension mismatch)."""


class DivergenceError(GiplabError, ArithmeticError):
    """Training produced a non-finite loss; message carries step and batch ids."""

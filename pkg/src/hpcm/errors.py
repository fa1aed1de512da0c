class HpcmError(Exception):
    """Base class for all library errors."""


class ConfigError(HpcmError, ValueError):
    pass


class ShapeError(HpcmError, ValueError):
    pass


class WeightError(HpcmError, KeyError):
    pass


class CorruptBitstreamError(HpcmError):
    pass


class IncompatibleStreamError(HpcmError):
    """Stream header disagrees with the decoder configuration."""


class CoderContractError(HpcmError):
    """Misuse of the range coder API (zero-frequency symbol, double finalize)."""

"""Exception types shared across the simulator."""


class FlsimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(FlsimError):
    """Invalid experiment configuration (unknown key, bad type, bad value)."""


class LayoutError(FlsimError):
    """Parameter-vector layout, shape, or payload-kind mismatch."""


class InputError(FlsimError):
    """Operation received values outside its contract (bad label, empty input)."""


class DataError(FlsimError):
    """Dataset-level failure (missing files, malformed containers)."""


class IdxFormatError(DataError):
    """IDX byte stream has a wrong magic number or malformed header."""


class IdxLengthError(DataError):
    """IDX byte stream is truncated relative to its declared dimensions."""

class AptGenError(Exception):
    pass


class ParameterError(AptGenError, ValueError):
    """Malformed input: wrong shape, out-of-range action, empty batch."""


class StateError(AptGenError, RuntimeError):
    """Operation called in the wrong lifecycle state."""


class DimensionError(AptGenError, ValueError):
    pass


class FormatError(AptGenError, ValueError):
    """Bad magic header or truncated binary payload."""


class ConfigError(AptGenError, ValueError):
    pass

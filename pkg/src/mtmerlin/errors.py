"""Exception types shared across the package."""


class MerlinError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(MerlinError, ValueError):
    pass


class NotPSD(MerlinError, ValueError):
    pass


class DegenerateSpectrum(MerlinError, ValueError):
    pass


class DegeneratePeak(MerlinError, ValueError):
    pass


class NonPositiveInput(MerlinError, ValueError):
    pass


class OutOfBounds(MerlinError, IndexError):
    pass


class NonFinite(MerlinError, FloatingPointError):
    pass


class Diverged(MerlinError, FloatingPointError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class StaleTape(MerlinError, RuntimeError):
    pass


class FormatError(MerlinError, ValueError):
    """Malformed SLCS / MLP1 container."""


class ConfigError(MerlinError, ValueError):
    """Invalid configuration document; carries the offending key and line."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class CoherenceSaturation(UserWarning):
    """Coherence magnitudes were clamped below 1 before whitening."""

"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value (non-positive durations, bad beam, ...)."""


class RangeError(ValueError):
    """A time or frame index outside the stream."""


class ShapeError(ValueError):
    """Feature matrix dimensions do not chain."""


class ContractError(RuntimeError):
    """An internal invariant was violated.

    These signal bugs, not recoverable states: a commit that would move
    delays backwards, or a decoder result that does not extend committed
    output.
    """


class ManifestError(ValueError):
    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")

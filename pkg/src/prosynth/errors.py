"""Exception types shared across the package."""


class ProsynthError(Exception):
    """Base class for package-specific failures."""


class ConfigError(ProsynthError):
    """A configuration file or parameter is invalid or incomplete."""


class DataError(ProsynthError):
    """An input file or dataset violates its contract."""


class ShapeError(ProsynthError):
    """Operand shapes are incompatible; message names the offending op."""

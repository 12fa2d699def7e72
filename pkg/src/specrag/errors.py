"""Exception hierarchy shared across the package."""


class SpecragError(Exception):
    """Base class for all package-specific errors."""


class DimError(SpecragError):
    """Embedding dimensionality does not match what an operation expects."""


class DegenerateVectorError(SpecragError):
    """Vector has (near) zero norm and cannot be normalized."""


class ConfigError(SpecragError):
    """Invalid configuration value or malformed config file."""


class BuildError(SpecragError):
    """Index construction is impossible with the given inputs."""


class NotReadyError(SpecragError):
    """Operation requires a fitted component that has not been fitted."""


class RetrievalError(SpecragError):
    """Retrieval failed in a way that cannot be recovered per-query."""


class FormatError(SpecragError):
    """A data file does not conform to its declared binary or text layout."""


class IoError(SpecragError):
    """A report or artifact could not be written to its destination."""

"""Exception types shared across the package."""


class MebAuthError(Exception):
    """Base class for all package errors."""


class ShapeError(MebAuthError, ValueError):
    """Tensor or layer dimensions are inconsistent."""


class FormatError(MebAuthError, ValueError):
    """A persisted file is malformed, truncated, or fails its checksum."""


class UnknownUserError(MebAuthError, KeyError):
    """Operation referenced a user that is not enrolled / present."""


class DuplicateUserError(MebAuthError, ValueError):
    """User already exists where uniqueness is required."""


class ConfigError(MebAuthError, ValueError):
    """Invalid configuration value."""

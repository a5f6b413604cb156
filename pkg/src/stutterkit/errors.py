"""Exception types shared across the package.

``ValidationError`` subclasses map to CLI exit code 2 (bad input); anything
else is an internal error (exit code 1).
"""


class ValidationError(ValueError):
    """Invalid user input: bad config, malformed file, impossible request."""


class CatalogError(ValidationError):
    pass


class ManifestError(ValidationError):
    pass


class SplitError(ValidationError):
    pass


class CurationError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class CheckpointError(ValidationError):
    pass

"""Exception types shared across the package."""


class ZsgenError(Exception):
    """Base class for all package errors."""


class ConfigError(ZsgenError):
    """Bad configuration or inputs that can never work (dimension mismatch, empty corpus, ...)."""


class UsageError(ZsgenError):
    """API misuse: stale caches, shape mismatches between calls, shrinking a classifier head."""


class ParseError(ZsgenError):
    """Malformed input file. Carries the offending line number when known."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class MissingEmbeddingError(ConfigError):
    """No embedding vector could be produced for a class name."""

"""Exception types shared across the toolkit."""


class DivsegError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DivsegError):
    """Operands or files carry incompatible shapes."""


class DomainError(DivsegError):
    """An input lies outside an operation's mathematical domain."""


class ConfigError(DivsegError):
    """A configuration value violates its contract."""


class ContractError(DivsegError):
    """An API precondition was violated (e.g. non-scalar loss, empty mask)."""


class ParseError(DivsegError):
    """A file failed to parse (bad magic, truncation, version mismatch)."""


class NumericError(DivsegError):
    """A computation produced non-finite values."""

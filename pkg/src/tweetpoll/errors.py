class TweetpollError(Exception):
    """Base class for package errors."""


class DomainError(TweetpollError, ValueError):
    """An argument lies outside the operation's input domain."""


class ConfigurationError(TweetpollError):
    """Pipeline configuration cannot produce a valid run."""


class DataError(TweetpollError):
    """Input data is unusable for the requested operation."""


class InfeasibleTargetError(DataError):
    """Requested table rates cannot be hit at the published precision."""

    def __init__(self, message, required_n=None):
        super().__init__(message)
        self.required_n = required_n

"""Exception hierarchy.

The CLI maps each family to an exit code: ``DataError`` -> 2,
``BackendError`` -> 3, ``ConfigError`` -> 1.
"""


class MCeFSError(Exception):
    pass


class ConfigError(MCeFSError):
    pass


class DataError(MCeFSError):
    pass


class MalformedXml(DataError):
    pass


class UnknownPolarity(DataError):
    pass


class KTooLarge(DataError):
    pass


class CorruptCheckpoint(DataError):
    pass


class ProtocolViolation(MCeFSError):
    pass


class ElicitationFailed(MCeFSError):
    pass


class EmptyPool(MCeFSError):
    pass


class EmptyInput(MCeFSError, ValueError):
    pass


class MissingCell(MCeFSError, KeyError):
    pass


class BackendError(MCeFSError):
    pass


class BackendExhausted(BackendError):
    pass


class AuthError(BackendError):
    pass


class MalformedResponse(BackendError):
    pass

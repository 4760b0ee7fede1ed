"""Exception hierarchy shared by every subpackage."""


class DevbindError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(DevbindError, ValueError):
    """An argument violates a documented precondition."""


class FormatError(DevbindError):
    """A persisted record or wire frame is malformed.

    ``section`` names the part of the record being parsed and ``offset`` the
    byte position where parsing stopped.
    """

    def __init__(self, message, section=None, offset=None):
        self.section = section
        self.offset = offset
        where = []
        if section is not None:
            where.append(f"section={section}")
        if offset is not None:
            where.append(f"offset={offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class CatastrophicCodeError(ParameterError):
    """Convolutional generators share a non-trivial polynomial factor."""


class ChaosRangeError(DevbindError, ArithmeticError):
    """A chaotic iteration left the unit interval."""


class ProtocolError(DevbindError):
    """A protocol message was rejected or arrived out of order."""

    def __init__(self, reason, detail=""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class AuthenticationError(ProtocolError):
    """A hash check in the deployment handshake failed."""

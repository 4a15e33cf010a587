"""Typed errors raised across the package."""


class GSError(Exception):
    """Base class for all gsctrl errors."""


class MissingFile(GSError, FileNotFoundError):
    pass


class FormatError(GSError, ValueError):
    """A container file could not be decoded."""


class BadMagic(FormatError):
    pass


class HeaderMismatch(FormatError):
    pass


class MalformedContainer(FormatError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class CoefficientLengthMismatch(GSError, ValueError):
    pass


class InvalidDimension(GSError, ValueError):
    pass


class ResolutionMismatch(GSError, ValueError):
    pass


class ShapeMismatch(GSError, ValueError):
    pass


class ChannelOutOfRange(GSError, IndexError):
    pass


class InvalidRange(GSError, ValueError):
    pass

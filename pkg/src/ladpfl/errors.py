"""Exception hierarchy shared by every ladpfl module.

All errors derive from :class:`LadpError`, itself a ``ValueError``, so callers
that only care about "bad input" can catch the builtin.
"""


class LadpError(ValueError):
    pass


# tensor_core
class MismatchedLength(LadpError):
    pass


class NotADistribution(LadpError):
    pass


class NegativeStd(LadpError):
    pass


# model_engine
class ShapeMismatch(LadpError):
    pass


class NonPositiveClip(LadpError):
    pass


class EmptyDataset(LadpError):
    pass


# dp_mechanism
class InvalidDelta(LadpError):
    pass


class InvalidEpsilon(LadpError):
    pass


class NonPositiveInput(LadpError):
    pass


# fl_runtime
class TooFewClients(LadpError):
    pass


class MissingClass(LadpError):
    pass


class InvalidRate(LadpError):
    pass


class EmptyCollection(LadpError):
    pass


class EmptyClientDataset(LadpError):
    pass


# privacy_accountant
class InvalidBudget(LadpError):
    pass


class InvalidSizes(LadpError):
    pass


class InvalidConstants(LadpError):
    pass


class EtaOutOfWindow(LadpError):
    pass


# bench
class ConfigError(LadpError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class InvalidParams(LadpError):
    pass


class FormatError(LadpError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        where = f" (byte offset {offset})" if offset is not None else ""
        super().__init__(message + where)


class DimensionMismatch(LadpError):
    pass

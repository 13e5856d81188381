"""Exception types raised by the evaluator."""


class PsgEvalError(Exception):
    """Base class for all evaluator errors."""


class MaskFormatError(PsgEvalError, ValueError):
    """A run-length mask does not describe its declared grid."""


class ValidationError(PsgEvalError, ValueError):
    """An input document violates a structural invariant."""


class ProtocolError(PsgEvalError):
    """A prediction set violates the constraints of the requested protocol."""

"""Exception hierarchy shared across the package."""


class StegoError(Exception):
    """Base class for every error raised by newsstego."""


# tensor engine
class ShapeMismatch(StegoError, ValueError):
    pass


class UnknownPrimitive(StegoError, KeyError):
    pass


class NonFiniteOutput(StegoError, FloatingPointError):
    pass


class NonScalarLoss(StegoError, ValueError):
    pass


class DetachedLoss(StegoError, ValueError):
    pass


class NonDeterministicFunction(StegoError, RuntimeError):
    pass


class NonFiniteGradient(StegoError, FloatingPointError):
    pass


# networks / checkpoints
class InvalidConfig(StegoError, ValueError):
    pass


class LengthMismatch(StegoError, ValueError):
    pass


class NonFiniteTheta(StegoError, FloatingPointError):
    pass


class BadMagic(StegoError, ValueError):
    pass


class CorruptTensor(StegoError, ValueError):
    pass


class VersionUnsupported(StegoError, ValueError):
    pass


# corruption channel
class DegenerateQuad(StegoError, RuntimeError):
    pass


class BadDimensions(StegoError, ValueError):
    pass


# payload codec
class BudgetTooSmall(StegoError, ValueError):
    pass


class BadLength(StegoError, ValueError):
    pass


# training / evaluation
class EmptyDataset(StegoError, ValueError):
    pass


class UnreadableImage(StegoError, OSError):
    pass


class DivergedLoss(StegoError, FloatingPointError):
    pass


class EmptyInput(StegoError, ValueError):
    pass


class IoFailure(StegoError, OSError):
    pass


# verification workflow
class IdCollision(StegoError, ValueError):
    pass


class EmptyText(StegoError, ValueError):
    pass


ImageUnreadable = UnreadableImage

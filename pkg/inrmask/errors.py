from typing import Optional


class InrMaskError(Exception):
    """Base class for every error raised by inrmask."""


class ShapeError(InrMaskError, ValueError):
    pass


class NonFiniteError(InrMaskError, ArithmeticError):
    pass


class DivisionByZeroError(InrMaskError, ZeroDivisionError):
    pass


class EmptyTensorError(InrMaskError, ValueError):
    pass


class TapeError(InrMaskError, RuntimeError):
    pass


class AreaRangeError(InrMaskError, ValueError):
    pass


class EmptyInputError(InrMaskError, ValueError):
    pass


class ConfigError(InrMaskError, ValueError):
    pass


class NetpbmError(InrMaskError, ValueError):
    pass


class DivergenceError(InrMaskError, ArithmeticError):
    """An optimization produced a non-finite loss."""

    def __init__(self, epoch: int, seed: Optional[int] = None, iteration: Optional[int] = None, detail: str = ""):
        self.epoch = epoch
        self.seed = seed
        self.iteration = iteration
        where = f"epoch {epoch}"
        if seed is not None:
            where += f", seed {seed}"
        if iteration is not None:
            where += f", iteration {iteration}"
        message = f"Optimization diverged at {where}"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class WeightFormatError(InrMaskError, ValueError):
    pass


class BadMagicError(WeightFormatError):
    pass


class VersionMismatchError(WeightFormatError):
    pass


class TruncatedPayloadError(WeightFormatError):
    pass


class BadNameError(WeightFormatError):
    pass

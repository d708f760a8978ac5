class ShapeError(ValueError):
    """Operand dimensions do not line up."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class BackwardError(RuntimeError):
    pass


class OptimizerStateError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class WavFormatError(ValueError):
    pass


class UnsupportedCodecError(WavFormatError):
    pass


class SampleRateMismatchError(WavFormatError):
    pass


class ClipTooShortError(ValueError):
    pass


class AugmentationError(ValueError):
    pass


class LabelError(ValueError):
    pass


class BudgetExceededError(RuntimeError):
    def __init__(self, verdict):
        self.verdict = verdict
        super().__init__(verdict.summary())

    def __reduce__(self):
        return self.__class__, (self.verdict,)


class LogitStoreError(ValueError):
    pass


class CorruptLogitStoreError(LogitStoreError):
    pass


class EnsembleMismatchError(LogitStoreError):
    pass

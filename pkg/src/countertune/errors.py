"""Exception types shared across the package."""


class CounterTuneError(Exception):
    """Base class for all errors raised by this package."""


class DatasetFormatError(CounterTuneError):
    """A space, measurements, or arch file violates the documented format.

    Carries file path and 1-based line number so CLI users can locate the
    offending row without a stack trace.
    """

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        self.message = message
        super().__init__(f"{self.path}:{self.line}: {message}")


class UnknownCounterError(DatasetFormatError):
    """A counter column name is neither canonical nor mapped by the arch."""


class ModelFormatError(CounterTuneError):
    """A serialized model file is truncated, unversioned, or malformed."""


class ParameterMismatchError(CounterTuneError):
    """A model was asked to predict for a space it was not trained on."""


class ModelTrainingError(CounterTuneError):
    """Training preconditions violated (too few records, rank deficiency)."""


class AnalysisError(CounterTuneError):
    """Bottleneck equations were handed an incomplete counter map."""


class SpaceExhaustedError(CounterTuneError):
    """Selection was requested but every configuration is already explored."""

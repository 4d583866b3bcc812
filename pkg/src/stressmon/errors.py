"""Exception taxonomy shared across the package."""


class StressmonError(Exception):
    """Base class for all errors raised by this package."""


class FilterDesignError(StressmonError):
    """Invalid filter specification or an unstable realization."""


class SignalTooShortError(StressmonError):
    """Signal shorter than the filter cascade can process."""


class InsufficientBeatsError(StressmonError):
    """Too few detected beats (or surviving NN intervals) for analysis."""


class InsufficientDataError(StressmonError):
    """Not enough data for the requested computation."""


class ProtocolError(StressmonError):
    """Query-engine operation invoked out of phase."""


class UnknownSampleError(StressmonError):
    pass


class DuplicateSampleError(StressmonError):
    pass


class NeverQueriedError(StressmonError):
    """Label offered for a sample that was never queried."""


class DuplicateLabelError(StressmonError):
    pass


class InvalidLabelError(StressmonError):
    """Stress level or activity outside the EMA vocabulary."""


class SnapshotFormatError(StressmonError):
    """Corrupt or incompatible engine snapshot."""


class DegenerateTaskError(StressmonError):
    """Binary label mapping produced an empty class."""


class DatasetError(StressmonError):
    """Malformed dataset or training set unusable for fitting."""


class InvalidWindowError(StressmonError):
    """Raw window fails shape or metadata validation."""


class UnknownSubjectError(StressmonError):
    pass


class UnknownPromptError(StressmonError):
    pass


class ExpiredPromptError(StressmonError):
    pass


class DuplicateResponseError(StressmonError):
    pass

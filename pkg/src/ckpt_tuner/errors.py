"""Exception hierarchy shared across the package."""


class CkptTunerError(Exception):
    """Base class for all package errors."""


class ParameterError(CkptTunerError, ValueError):
    """An operation received an invalid argument combination."""


class DegenerateWorkloadError(CkptTunerError):
    """The workload carries too little variation for the requested operation."""


class NoCatchUpError(CkptTunerError):
    """Processing capacity does not exceed the input rate, so lag never drains."""


class InsufficientDataError(CkptTunerError):
    """A learner was asked to operate on too few samples."""


class DetectionMissError(CkptTunerError):
    """No anomalous interval was found where a failure was expected."""


class ProfilingFailedError(CkptTunerError):
    """Too many profiling cells were invalid to build usable models."""


class DegenerateFitError(CkptTunerError):
    """The regression design matrix is rank deficient."""

    def __init__(self, message: str, feature: str | None = None):
        super().__init__(message)
        self.feature = feature

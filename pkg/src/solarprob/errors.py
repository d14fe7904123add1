"""Exception types raised across the package."""


class SolarProbError(Exception):
    """Base class for all package errors."""


# ingest
class MalformedHeader(SolarProbError):
    pass


class EmptyFile(SolarProbError):
    pass


class EmptyDataset(SolarProbError):
    pass


class MisalignedClearSky(SolarProbError):
    pass


# dist / calibrate / metrics
class InvalidProbability(SolarProbError, ValueError):
    pass


class NonPositiveScale(SolarProbError, ValueError):
    pass


class LengthMismatch(SolarProbError, ValueError):
    pass


class InvalidLevels(SolarProbError, ValueError):
    pass


class EmptyCalibrationSet(SolarProbError, ValueError):
    pass


# ngboost
class DimensionMismatch(SolarProbError, ValueError):
    pass


class DegenerateTargets(UserWarning):
    """Emitted when the training targets have zero variance."""


# baselines
class EmptyBucket(SolarProbError, LookupError):
    pass


class InsufficientHistory(SolarProbError):
    pass


class DegenerateRange(SolarProbError, ValueError):
    pass


# harness
class ConfigInvalid(SolarProbError, ValueError):
    pass


class MissingData(SolarProbError):
    pass


class IoFailure(SolarProbError, OSError):
    pass


class SerializationError(SolarProbError, ValueError):
    pass

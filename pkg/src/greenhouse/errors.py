"""Exception and warning types raised across the package."""


class GreenhouseError(Exception):
    """Base class for every error raised by greenhouse.

    ``step`` is filled in by the training pipeline so that a failure deep in a
    component still says which phase of training it came from.
    """

    step = None

    def __str__(self):
        msg = super().__str__()
        if self.step:
            return f"{self.step}: {msg}"
        return msg


# -- series ingestion --------------------------------------------------------

class SeriesFormatError(GreenhouseError):
    pass


class MissingHeader(SeriesFormatError):
    pass


class NonMonotonicTimestamps(SeriesFormatError):
    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"timestamps not strictly increasing at row {row}")


class IrregularSpacing(SeriesFormatError):
    def __init__(self, row, expected_step, got_step):
        self.row = row
        self.expected_step = expected_step
        self.got_step = got_step
        super().__init__(
            f"irregular spacing at row {row}: step {got_step}, expected {expected_step}"
        )


class NonNumericValue(SeriesFormatError):
    def __init__(self, row, text):
        self.row = row
        super().__init__(f"non-numeric or non-finite entry at row {row}: {text!r}")


class EmptySeries(SeriesFormatError):
    pass


class SeriesTooShort(GreenhouseError):
    pass


class SegmentTooShort(GreenhouseError):
    def __init__(self, segment, length, required):
        self.segment = segment
        self.length = length
        self.required = required
        super().__init__(
            f"segment {segment} has {length} points, at least {required} required"
        )


# -- predictor -----------------------------------------------------------------

class NonFiniteActivation(GreenhouseError):
    pass


class DivergedTraining(GreenhouseError):
    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite at epoch {epoch}")


class WrongWindowLength(GreenhouseError):
    pass


# -- stats ---------------------------------------------------------------------

class TooFewSamples(GreenhouseError):
    pass


class CholeskyFailure(GreenhouseError):
    pass


class DimensionMismatch(GreenhouseError):
    pass


class PercentileOutOfRange(GreenhouseError, ValueError):
    pass


class NegativeDistance(GreenhouseError):
    pass


# -- bundles -------------------------------------------------------------------

class MalformedBundle(GreenhouseError):
    pass


class SchemaVersionMismatch(MalformedBundle):
    pass


class BundleDimensionMismatch(GreenhouseError):
    pass


# -- detection / evaluation ----------------------------------------------------

class MalformedResult(GreenhouseError):
    pass


class MalformedLabels(GreenhouseError):
    pass


class LabelOutOfRange(GreenhouseError):
    pass


class BadParams(GreenhouseError, ValueError):
    pass


class CannotPlace(GreenhouseError):
    pass


# -- warnings ------------------------------------------------------------------

class ConstantSeriesWarning(UserWarning):
    """Series has (numerically) zero spread; a unit scale was substituted."""


class DegenerateDistancesWarning(UserWarning):
    """Calibration distances have zero spread; a tiny floor scale was used."""

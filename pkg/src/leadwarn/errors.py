"""Exception hierarchy shared by every pipeline stage."""


class LeadWarnError(Exception):
    """Base class; the CLI maps it to exit status 1 (validation) or 2."""


class ValidationError(LeadWarnError, ValueError):
    pass


# ingest
class MissingColumn(ValidationError):
    pass


class EmptyAfterFiltering(ValidationError):
    pass


class MalformedNumeric(ValidationError):
    pass


# features
class EmptyLog(ValidationError):
    pass


# pv_sampling
class SeriesTooShort(ValidationError):
    pass


class NoEvents(ValidationError):
    pass


class EmptyGrid(ValidationError):
    pass


# windowing
class TooFewRows(ValidationError):
    pass


class HorizonExceedsFrames(ValidationError):
    pass


class EmptyCandidates(ValidationError):
    pass


# graph_builder
class EmptyWindow(ValidationError):
    pass


# hyperbolic
class CurvatureMismatch(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


# nn_core / model
class ShapeMismatch(ValidationError):
    pass


class EmptyMatrix(ValidationError):
    pass


class EmptySequence(ValidationError):
    pass


class UnknownVariant(ValidationError):
    pass


class NonFiniteGradient(LeadWarnError, FloatingPointError):
    """Raised when a gradient or parameter leaves the finite range."""


# train_eval
class TooFewWindows(ValidationError):
    pass


class DegenerateSplit(UserWarning):
    """A split without positives; metrics fall back to their defined values."""


class NoPositives(ValidationError):
    pass


class OneClassOnly(ValidationError):
    pass


# synth
class InvalidConfig(ValidationError):
    pass

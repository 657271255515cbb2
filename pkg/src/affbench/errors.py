"""Exception types raised across the benchmark engine."""


class AffBenchError(Exception):
    """Base class for all errors raised by affbench."""


# --- mask / image / manifest I/O ---

class MissingFile(AffBenchError):
    pass


class MalformedRaster(AffBenchError):
    pass


class LabelOutOfRange(AffBenchError):
    pass


class IoFailure(AffBenchError):
    pass


class ParseError(AffBenchError):
    pass


class DuplicateId(AffBenchError):
    pass


class UnmappedLabel(AffBenchError):
    pass


class InvalidTaxonomy(AffBenchError):
    pass


# --- metric computation ---

class ShapeMismatch(AffBenchError):
    pass


class TaxonomyMismatch(AffBenchError):
    pass


class UnknownClass(AffBenchError):
    pass


class NoDefinedClasses(AffBenchError):
    pass


class EmptyForeground(AffBenchError):
    pass


class ClassAbsentInAnnotation(AffBenchError):
    """Signals that a pair contributes nothing to a class's weighted tally."""


# --- scale perturbation / occupancy ---

class NonPositiveFactor(AffBenchError):
    pass


class InvalidFactor(AffBenchError):
    pass


class EmptyObjectClassSet(AffBenchError):
    pass


class EmptyInput(AffBenchError):
    pass


# --- augmentation ---

class InvalidConfig(AffBenchError):
    pass


class CropLargerThanScaled(AffBenchError):
    pass


class NegativeVariance(AffBenchError):
    pass


# --- evaluation orchestration ---

class MissingPrediction(AffBenchError):
    pass


class EmptyManifest(AffBenchError):
    pass


class KeyMismatch(AffBenchError):
    pass

"""Exception hierarchy shared by every pipeline stage."""


class SecDoarError(Exception):
    """Base class for all errors raised by this package."""


# ingestion

class IngestError(SecDoarError):
    pass


class ColumnCountMismatch(IngestError):
    pass


class BadTimestamp(IngestError):
    pass


class Unparseable(IngestError):
    pass


class MissingField(IngestError):
    pass


class MappingMismatch(IngestError):
    pass


class NormalizationFailed(IngestError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("record failed validation: " + ", ".join(str(v) for v in self.violations))


class StoreUnavailable(IngestError):
    pass


# semantic layer

class SemanticError(SecDoarError):
    pass


class UncoveredTool(SemanticError):
    pass


class UnboundPredicate(SemanticError):
    pass


class ConflictUnresolvable(SemanticError):
    pass


# composition

class CompositionError(SecDoarError):
    pass


class DuplicateTool(CompositionError):
    pass


class UnknownTool(CompositionError):
    pass


class UnknownKind(CompositionError):
    pass


class UnknownFeature(CompositionError):
    pass


class TaxonomyCycle(CompositionError):
    pass


class NoComposition(CompositionError):
    pass


# metrics

class MetricError(SecDoarError):
    pass


class ZeroDenominator(MetricError):
    pass


class IntervalOutOfHorizon(MetricError):
    pass


class UnknownMetric(MetricError):
    pass


# orchestration / reporting

class ChannelInactive(SecDoarError):
    pass


class ChannelFull(SecDoarError):
    pass


class CompositionInvalid(SecDoarError):
    def __init__(self, result):
        self.result = result
        super().__init__("composition invalid: " + "; ".join(result.reasons))


class StageError(SecDoarError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


class UnsupportedFormat(SecDoarError):
    pass


class InvalidInjection(SecDoarError):
    pass


class ConfigError(SecDoarError):
    pass

"""Exception hierarchy shared across the package."""


class BeliefTrackError(Exception):
    """Base class for all engine errors."""


class OntologyError(BeliefTrackError):
    """Malformed or inconsistent ontology definition."""


class UnknownValueError(OntologyError):
    """A goal label does not exist in a slot's inventory."""


class CorpusError(BeliefTrackError):
    """Malformed dialogue corpus, or labels outside the ontology."""


class EmbeddingError(BeliefTrackError):
    """Malformed word-vector file or inconsistent vector dimensions."""


class DimensionMismatchError(BeliefTrackError):
    """Vector or matrix shapes disagree with the ontology or embedding size."""


class ModelFormatError(BeliefTrackError):
    """Model file cannot be parsed or fails its provenance checks."""


class TrainingDivergedError(BeliefTrackError):
    """Training loss became non-finite."""


class TemplateCoverageError(BeliefTrackError):
    """Synthetic utterance templates cannot realize an ontology value."""

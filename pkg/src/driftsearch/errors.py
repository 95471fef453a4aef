"""Exception types shared across the package."""


class DriftSearchError(Exception):
    """Base class for all package-specific errors."""


class NotFoundError(DriftSearchError):
    """A referenced observation, entry, term, or session does not exist."""


class DimensionError(DriftSearchError):
    """Feature dimensions are inconsistent."""


class ValidationError(DriftSearchError):
    """An input value violates its contract (range, positivity, ...)."""


class NumericError(DriftSearchError):
    """Non-finite values encountered in inputs or intermediates."""


class SingularModelError(DriftSearchError):
    """Posterior covariance solve failed.

    Unreachable for valid hyperparameters (the prior precision keeps the
    system positive definite); raised only as a bug trap.
    """


class EmptyCorpusError(DriftSearchError):
    """Corpus contains no documents."""


class EmptyVocabularyError(DriftSearchError):
    """All terms were removed by the document-frequency thresholds."""


class EmptySliceError(DriftSearchError):
    """Keyword features requested for an empty document slice."""


class NoResultsError(DriftSearchError):
    """A query matched no documents."""


class InsufficientDataError(DriftSearchError):
    """A dataset directory holds fewer files than requested."""

"""Exception types shared across the toolkit."""


class ParseError(SyntaxError):
    """Malformed toy-language source; carries 1-based line/column."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class TreeFormatError(ValueError):
    """Malformed serialized tree text."""


class NotALeafError(ValueError):
    """A leaf-only operation was given an inner node."""


class EmptyTreeError(ValueError):
    """Operation requires a tree with at least one leaf."""


class EmptyCorpusError(ValueError):
    """Operation requires a non-empty corpus."""


class InsufficientDataError(ValueError):
    """Too few usable rows/points to fit."""


class DegenerateSampleError(ValueError):
    """All paired differences are zero, or too few nonzero ones remain."""


class UnequalSamplesError(ValueError):
    """Paired populations must have equal size."""


class DimensionMismatchError(ValueError):
    """Tensor shapes are inconsistent with the model dimensions."""


class UnencodableLabelError(ValueError):
    """A label id falls outside the model's embedding table."""


class NonFiniteGradientError(FloatingPointError):
    """A gradient tensor contains NaN or infinity; the update is aborted."""


class ZeroProbabilityError(ValueError):
    """A predicted probability of zero (or less) reached the entropy sum."""


class TooFewExamplesError(ValueError):
    """Corpus too small for the requested fold count."""


class TooFewCommitsError(ValueError):
    """Commit history too short for a longitudinal split."""


class CheckpointMismatchError(ValueError):
    """Checkpoint hyperparameters disagree with the requested configuration."""


class MissingClassError(ValueError):
    """Both classes must be present in the training data."""


class LengthMismatchError(ValueError):
    """Paired prediction/label lists must have equal length."""


class EmptyCommitError(ValueError):
    """A commit must carry at least one method prediction."""

"""Exception types shared across the package.

The CLI maps these onto exit codes: config/usage problems exit 1, data
problems exit 2, numeric failures exit 3.
"""


class ConfigError(Exception):
    """Bad configuration: unknown keys, infeasible values, missing sections."""


class DataError(Exception):
    """Malformed or inconsistent input data."""


class NumericError(Exception):
    """Numeric failure: non-finite values, broken gradients."""


class DimensionMismatch(DataError):
    """Operands have incompatible shapes."""


class VocabularyError(DataError):
    """Unknown action/adverb, or a required resource (vector, antonym) is missing."""


class DegenerateInputError(DataError):
    """Input is structurally empty, e.g. an all-padded attention window."""


class SplitError(DataError):
    """Dataset cannot be split as requested."""


class SamplingError(DataError):
    """Batch sampling preconditions violated (e.g. single-action dataset)."""


class DocumentError(DataError):
    """Malformed tagged-token document."""


class StoreFormatError(DataError):
    """Feature store or annotation file violates its format."""


class CheckpointError(DataError):
    """Checkpoint corrupt, truncated, or of an unsupported version."""


class TapeStateError(Exception):
    """Computation tape used out of contract (e.g. double backward)."""


class OptimizerError(NumericError):
    """Optimizer step aborted, e.g. on a non-finite gradient."""

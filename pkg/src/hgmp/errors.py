"""Exception types shared across the package.

``HgmpError`` covers domain errors (bad arguments, violated preconditions);
``DataFormatError`` covers malformed on-disk inputs (datasets, configs,
checkpoints). The CLI maps them to exit codes 1 and 2 respectively.
"""


class HgmpError(Exception):
    """Domain error: a precondition or invariant was violated."""


class DataFormatError(HgmpError):
    """Malformed or missing on-disk input (dataset, config, checkpoint)."""

"""Error hierarchy. Each class maps to a CLI exit code."""


class DividError(Exception):
    exit_code = 1


class UsageError(DividError):
    """Bad flags, contradictory configuration, unmet preconditions."""

    exit_code = 2


class DataError(DividError):
    """Unreadable/corrupt inputs: videos, manifests, tensor files."""

    exit_code = 3


class NumericError(DividError):
    """Degenerate math: divide-by-zero schedules, negative radicands, non-finite losses."""

    exit_code = 4

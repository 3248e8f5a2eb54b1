"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage/configuration problems exit 2,
data/format problems exit 3, numerical failures exit 4.
"""


class DeltascopeError(Exception):
    """Base class for all toolkit errors."""


class UsageError(DeltascopeError, ValueError):
    """An API or CLI call that cannot be honoured as requested."""


class ConfigError(DeltascopeError, ValueError):
    """An unsupported or inconsistent configuration value."""


class DimensionError(DeltascopeError, ValueError):
    """Array extents that do not fit the operation's contract."""


class ValidationError(DeltascopeError, ValueError):
    """Input values outside their declared domain."""


class FormatError(DeltascopeError, ValueError):
    """A file that does not match its declared on-disk format."""


class CorruptionError(DeltascopeError, ValueError):
    """A checkpoint or payload whose sections disagree with its metadata."""


class StateError(DeltascopeError, RuntimeError):
    """An operation invoked before its required state exists."""


class DegenerateDatasetError(DeltascopeError, ValueError):
    """A dataset with only one class where both are required."""


class NumericalError(DeltascopeError, RuntimeError):
    """A non-finite value produced where finite math is required."""

"""Exception hierarchy shared by every usersim module."""


class UserSimError(Exception):
    """Base class for all errors raised by usersim."""

    exit_code = 1


class ContractError(UserSimError, ValueError):
    """A precondition of an operation was violated."""

    exit_code = 2


class ShapeError(ContractError):
    """Array dimensions do not line up."""


class ConfigError(ContractError):
    """Invalid or unknown configuration value."""


class UndefinedMetricError(ContractError):
    """A metric is undefined for the given input (e.g. AUC on one class)."""


class DataError(UserSimError):
    """Problem with log, embedding or dataset contents."""

    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line
        self.path = path


class UnknownItemError(DataError, KeyError):
    def __init__(self, items, context=""):
        if isinstance(items, str):
            items = [items]
        self.items = list(items)
        shown = ", ".join(repr(i) for i in self.items[:10])
        more = f" (+{len(self.items) - 10} more)" if len(self.items) > 10 else ""
        prefix = f"{context}: " if context else ""
        super().__init__(f"{prefix}unknown item id(s): {shown}{more}")

    def __str__(self):
        return self.args[0]


class UnsatisfiableError(DataError):
    """Requested resampling cannot be achieved with the available data."""


class CheckpointError(DataError):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class DimensionError(CheckpointError, ShapeError):
    """Checkpoint and catalog disagree on the embedding dimension."""


class NumericError(UserSimError, ArithmeticError):
    """Non-finite values appeared during training or an update."""

    exit_code = 4

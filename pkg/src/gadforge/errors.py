"""Exception hierarchy shared by every module."""


class GadError(Exception):
    """Base class for all harness errors."""


class DataError(GadError, ValueError):
    """Input data is unusable (non-finite values, inconsistent records)."""


class MalformedInputError(DataError):
    """A record references something that cannot exist (e.g. node id >= n)."""


class ShapeError(DataError):
    """Declared and actual array shapes disagree."""


class ConsistencyError(DataError):
    """Conflicting records for the same entity."""


class DegenerateColumnError(DataError):
    """A statistic cannot be computed because a column has no observed values."""

    def __init__(self, dimension, category=None):
        self.dimension = dimension
        self.category = category
        where = f" for category {category}" if category is not None else ""
        super().__init__(f"dimension {dimension} has no observed values{where}")


class ConstructionError(GadError, RuntimeError):
    """A generative procedure could not reach its target."""


class BudgetExceeded(GadError):
    """A resource budget was breached during a benchmark run."""

    def __init__(self, peak_bytes, budget_bytes):
        self.peak_bytes = peak_bytes
        self.budget_bytes = budget_bytes
        super().__init__(f"peak memory {peak_bytes} B exceeds budget {budget_bytes} B")

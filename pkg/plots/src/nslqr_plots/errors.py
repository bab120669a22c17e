"""Error types for figure generation."""


class PlotsError(Exception):
    """Base class for all figure-generation failures."""


class MissingColumns(PlotsError):
    """An input CSV lacks one of the documented columns."""


class InsufficientPoints(PlotsError):
    """Too few distinct axis values for a meaningful fit."""

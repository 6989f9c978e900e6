"""Exception hierarchy.

Data problems (bad input files, degenerate alignments) derive from
:class:`DataError`; numerical breakdowns derive from :class:`NumericError`.
The command-line front end maps the two families to distinct exit codes.
"""


class CatparcError(Exception):
    """Base class for all package errors."""


class DataError(CatparcError):
    """Input data cannot be used."""


class FormatError(DataError):
    """Malformed alignment or table file."""


class EmptyInputError(DataError):
    """Input stream contained no sequences."""


class DegenerateDataError(DataError):
    """Filtering or encoding left nothing to analyse."""


class InputError(DataError):
    """Argument inconsistent with the data (e.g. wrong sequence length)."""


class NumericError(CatparcError):
    """Non-finite values or a numerical routine failed."""


class SingularityError(NumericError):
    """A matrix that must be inverted is numerically singular."""


class ParameterError(CatparcError, ValueError):
    """Invalid simulation or model parameters."""

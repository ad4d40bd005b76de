"""Exception and warning types raised across the package."""


class MDQWError(Exception):
    """Base class for all package errors."""


class NormalizationError(MDQWError, ValueError):
    """Initial coin amplitudes do not have unit norm."""


class CapacityError(MDQWError):
    """The lattice (or oracle) is too small for the requested evolution."""


class ScheduleError(MDQWError):
    """The detector was asked to measure twice in one time step."""


class DomainError(MDQWError, ValueError):
    """An argument lies outside the domain of an operation."""


class MissingRecordError(MDQWError, KeyError):
    """A snapshot or site series was requested but never recorded."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class EmptySeriesError(MDQWError, ValueError):
    """A series with no points was passed to a reduction."""


class DegenerateDataError(MDQWError, ValueError):
    """Fit input does not determine a unique line."""


class StationarityWarning(UserWarning):
    """A saturation window still drifts by more than the spread threshold."""

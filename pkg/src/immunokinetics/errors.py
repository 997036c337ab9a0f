"""Exception hierarchy shared by the library and the command-line tool."""


class ImmunokineticsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ImmunokineticsError, ValueError):
    """Invalid parameters, scenario files or run settings."""


class InvalidKernelError(ImmunokineticsError, ValueError):
    """A model ingredient returned a non-finite value or broke its invariants."""


class DomainError(ImmunokineticsError, ValueError):
    """An immunity level or time lies outside the admissible domain."""


class QuadratureError(ImmunokineticsError, RuntimeError):
    pass


class NoEquilibriumError(ImmunokineticsError, RuntimeError):
    pass


class PopulationExtinctionError(ImmunokineticsError, RuntimeError):
    pass


class SchemeError(ImmunokineticsError, RuntimeError):
    """The discrete scheme produced a state it should never produce."""


class PreInitialCharacteristic(ImmunokineticsError):
    """The characteristic through (t, z) started before time zero.

    Callers evaluating the characteristic solution catch this and fall back
    to the initial-density branch.
    """


class HistoryError(ImmunokineticsError, RuntimeError):
    """A delayed value was requested outside the stored history."""


class DegeneracyError(ImmunokineticsError, ValueError):
    """The total mass of an abstract point vanishes."""

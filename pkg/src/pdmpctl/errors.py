"""Exception hierarchy shared by the solver, simulator and CLI."""


class PdmpError(Exception):
    """Base class for every error raised by pdmpctl."""


class ModelError(PdmpError):
    """Malformed config, unknown family id or inadmissible parameter."""


class InfeasibleActionError(PdmpError):
    pass


class DomainError(PdmpError):
    """A state or time lies outside the region where an operation is defined."""


class GridHullError(DomainError):
    """A value field was read outside the hull of its support points."""


class StepSizeError(PdmpError):
    pass


class DivergenceError(PdmpError):
    """An integral along an unbounded flow line cannot be bounded."""


class ConvergenceError(PdmpError):
    pass


class MonotonicityError(PdmpError):
    """Value-iteration iterates decreased beyond round-off."""


class SweepDivergence(PdmpError):
    """The vanishing-discount sweep shows unbounded growth."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SimulationError(PdmpError):
    pass

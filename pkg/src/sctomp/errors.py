"""Exception hierarchy shared by all planner stages."""


class PlannerError(Exception):
    """Base class for every error raised by :mod:`sctomp`."""


class DomainError(PlannerError, ValueError):
    """A parameter value lies outside the domain of an operation."""


class DegenerateCurveError(PlannerError):
    """Parametric speed vanishes, so frames and rates are undefined."""


class RegularityError(PlannerError):
    """A spline has a parametric speed coefficient that is not positive."""

    def __init__(self, message, segment=None, coefficient=None):
        super().__init__(message)
        self.segment = segment
        self.coefficient = coefficient


class CorridorError(PlannerError):
    """Corridor input failed to parse or validate.

    ``index`` is the 1-based region index the failure refers to, or ``None``
    when the failure is about the whole document (``field`` then names the
    offending key, e.g. ``"goal"``).
    """

    def __init__(self, message, index=None, field=None):
        super().__init__(message)
        self.index = index
        self.field = field


class CorridorParseError(CorridorError):
    """Corridor file is not valid JSON or does not match the schema."""


class OutOfTubeError(PlannerError):
    """Point is outside the tube where the path projection is well posed."""


class ForwardProgressError(PlannerError):
    """Path-parameter rate is at or below its positive floor."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class UnsupportedError(PlannerError):
    """Input is valid in general but not handled by this operation."""


class SetupError(PlannerError):
    """Optimal control problem data are inconsistent."""


class SolverError(PlannerError):
    """Stage-2 solve failed; ``report`` holds the backend diagnostics."""

    def __init__(self, message, report=None, node=None, constraint=None):
        super().__init__(message)
        self.report = report
        self.node = node
        self.constraint = constraint


class SplineOptimizationError(PlannerError):
    """Stage-1 optimization did not reach a feasible regular spline."""

    def __init__(self, message, report=None, constraint=None):
        super().__init__(message)
        self.report = report
        self.constraint = constraint

"""Exception hierarchy shared by all modules."""


class VecGRError(Exception):
    """Base class for every error raised by this package."""


class ParseError(VecGRError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(VecGRError, ValueError):
    pass


class BoundsError(VecGRError, ValueError):
    pass


class InfeasibleScenario(VecGRError):
    pass


class PreconditionError(VecGRError, ValueError):
    pass


class PlanningTimeout(VecGRError):
    pass


class PartialResult(VecGRError):
    """Fewer paths than requested; ``paths`` holds the ones that were found."""

    def __init__(self, paths, requested):
        self.paths = list(paths)
        self.requested = requested
        super().__init__(f"found {len(self.paths)} of {requested} paths")


class DegenerateSegment(VecGRError, ValueError):
    pass


class DomainError(VecGRError, ValueError):
    pass


class InfeasibleDynamics(VecGRError):
    def __init__(self, best, violation):
        self.best = best
        self.violation = violation
        super().__init__(f"no feasible via parameters; best violation {violation:.3g} m/s")


class EmptyObservation(VecGRError, ValueError):
    pass


class OrderingError(VecGRError, ValueError):
    pass


class UnsupportedFeature(VecGRError):
    pass


class StripsTypeError(VecGRError, TypeError):
    pass


class InapplicableAction(VecGRError):
    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class Unsolvable(VecGRError):
    pass


class ControllerTimeout(VecGRError):
    pass


class ConfigError(VecGRError, ValueError):
    pass

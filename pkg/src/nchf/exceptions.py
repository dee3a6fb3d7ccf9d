class NCHFError(Exception):
    """Base class for all errors raised by this package."""


class GridError(NCHFError, ValueError):
    pass


class RegularizationError(NCHFError, ValueError):
    pass


class ConstraintViolation(NCHFError):
    pass


class TubularNeighborhoodError(NCHFError):
    pass


class StepTooLarge(NCHFError):
    pass


class OperatorOverflow(NCHFError):
    pass


class CFLCollapse(NCHFError):
    """Adaptive step fell below ``dt_min``.

    ``location`` is the cell index of maximal diffusivity.
    """

    def __init__(self, message, t=None, dt=None, location=None):
        super().__init__(message)
        self.t = t
        self.dt = dt
        self.location = location


class InvariantViolation(NCHFError):
    def __init__(self, name, step, detail=""):
        super().__init__(f"invariant '{name}' violated at step {step}: {detail}")
        self.name = name
        self.step = step


class ConfigError(NCHFError, ValueError):
    pass


class CheckpointError(NCHFError, ValueError):
    pass

class GeometryError(ValueError):
    """Base class for refusals raised by the geometric routines."""


class NotImmersionError(GeometryError):
    pass


class MultiplicityError(GeometryError):
    """Multiplicity signature is not locally constant where it must be."""


class DupinConditionError(GeometryError):
    pass


class DegenerateSphereError(GeometryError):
    pass


class PlaneLeafError(GeometryError):
    pass


class ConvergenceError(GeometryError):
    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class OffSurfaceError(GeometryError):
    pass


class StageError(GeometryError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause

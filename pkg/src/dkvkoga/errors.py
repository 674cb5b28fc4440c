"""Exception types raised across the package."""

import numpy as np


class DkvkogaError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(DkvkogaError, ValueError):
    pass


class NotPositiveDefinite(DkvkogaError, np.linalg.LinAlgError):
    pass


class ConvergenceFailure(DkvkogaError, RuntimeError):
    pass


class InvalidBox(DkvkogaError, ValueError):
    pass


class TooFewTrainingPoints(DkvkogaError, ValueError):
    pass


class GraphConstructionError(DkvkogaError, TypeError):
    pass


class EmptyTrainingSet(DkvkogaError, ValueError):
    pass


class DegenerateKernel(DkvkogaError, RuntimeError):
    pass


class StepSizeUnderflow(DkvkogaError, RuntimeError):
    pass


class ZeroNormTarget(DkvkogaError, ValueError):
    pass


class VersionMismatch(DkvkogaError, ValueError):
    pass


class SchemaError(DkvkogaError, ValueError):
    pass


class IoError(DkvkogaError, OSError):
    pass

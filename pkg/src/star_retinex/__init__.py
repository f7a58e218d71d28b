"""Structure and texture aware Retinex decomposition."""
from .engine import (Decomposition, StarParams, TraceRecord, angular_error, color_correct,
                     enhance_lowlight, estimate_illuminant, objective, star_decompose,
                     star_inner)
from .errors import (FormatError, InvalidIlluminantError, InvalidInputError,
                     SingularSystemError, SolverError, StarError)
from .filters import WeightKind, WindowSpec, build_weight, forward_gradient, mlv_map, tv_map
from .solver import DiagonalWeights, GradientOperator, Method, SolverSettings, solve_subproblem

__version__ = "0.1.0"

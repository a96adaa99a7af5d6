"""Mountain-pass and inverse-function machinery on discretised graded Frechet spaces."""

from .errors import (
    C1Violation,
    EpsilonCritical,
    FamilyMismatch,
    FrechetMPError,
    GradeError,
    MissingGradient,
    NonFiniteError,
    PathError,
    PreconditionError,
    UnknownProblem,
)
from .graded_space import (
    BornologySample,
    GradedVector,
    MetricWeights,
    SeminormFamily,
    coordinate_sample,
    dual_norm,
    dual_norms,
    frechet_metric,
    seminorm,
)
from .functional import FunctionalHandle, gradient_check, ps_diagnose
from .path_space import DiscretePath, path_metric, path_sup, psi, refine
from .ekeland import EkelandCertificate, almost_minimizer
from .mountain_pass import MountainPassConfig, MountainPassResult, check_geometry, run
from .diffeo_solver import SolveConfig, SolveReport, TameMapHandle, injectivity_probe, solve, verify_c1
from .problems import BUILTINS, ProblemSpec, builtin

__version__ = "0.1.0"

"""Carnot groups, homogeneous gauge quasi-distances and Besicovitch families.

The main entry points are :func:`wbcp_refutation_pipeline`, which builds a
verified family of arbitrarily many Besicovitch balls whenever the gauge's
horizontal exponent is below the step, and :func:`derive_quotient` for the
step-2 quotient of a step-3 group.
"""

from .besicovitch import (
    Ball,
    BesicovitchFamily,
    PipelineReport,
    VerificationReport,
    criterion_excess,
    generate_r2_family,
    lift_family,
    normalize_plane_model,
    search_family,
    select_r,
    verify_family,
    wbcp_refutation_pipeline,
)
from .errors import (
    CarnotError,
    ConsistencyError,
    ConvergenceError,
    DegenerateBracketError,
    DomainError,
    HypothesisViolatedError,
    ShapeError,
    UnsupportedStepError,
)
from .gauge import (
    GaugeBall,
    QuasiDistance,
    distance,
    distance_from_origin,
    estimate_qt_constant,
    plane_metric,
    unit_sphere_sample,
)
from .groups import (
    GroupSpec,
    PlaneModel,
    abelian,
    builtin,
    dilate,
    free_nilpotent_2_3,
    heisenberg1,
    inverse,
    multiply,
    plane_embed,
    validate,
)
from .quotient import (
    derive_quotient,
    heisenberg_restriction,
    lift_point,
    project,
    quotient_distance,
    submetry_check,
)

__version__ = "0.1.0"

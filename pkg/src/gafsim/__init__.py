"""Zero statistics of Gaussian analytic functions on C^n.

Sampling of i.i.d. standard complex Gaussian coefficient fields, certified
truncation, spherical quadrature, exact one-variable zero counting, and the
Monte Carlo experiment drivers built on them.
"""

__version__ = "0.1.0"

from .coeff import (
    CapacityError,
    CoefficientTable,
    MultiIndex,
    Seed,
    enumerate_indices,
    sample_coefficients,
    small_ball_probability,
)
from .gaf import (
    DegreeTooSmallError,
    GafSample,
    TailBound,
    choose_degree,
    evaluate,
    evaluate_at,
    log_abs,
    log_abs_at,
    realize,
    restrict_to_line,
    tail_bound,
)
from .geometry import (
    PoissonKernelQuery,
    SpherePartition,
    harmonic_reproduce,
    kernel_second_normalization,
    partition_sphere,
    poisson_kernel,
    surface_integral,
)
from .zeros import (
    ContourError,
    CountingEstimate,
    HoleVerdict,
    count_zeros_companion,
    count_zeros_disk,
    counting_from_jensen,
    hole_test,
    nevanlinna_T,
    sphere_log_integral,
)
from .experiments import (
    ExperimentConfig,
    ExperimentError,
    FitGateError,
    FitResult,
    HoleCurve,
    fit_scaling_exponent,
    run_concentration,
    run_hole_curve,
    run_invariance,
    run_max_growth,
    run_surface_checks,
)

__all__ = [
    "CapacityError",
    "CoefficientTable",
    "ContourError",
    "CountingEstimate",
    "DegreeTooSmallError",
    "ExperimentConfig",
    "ExperimentError",
    "FitGateError",
    "FitResult",
    "GafSample",
    "HoleCurve",
    "HoleVerdict",
    "MultiIndex",
    "PoissonKernelQuery",
    "Seed",
    "SpherePartition",
    "TailBound",
    "choose_degree",
    "count_zeros_companion",
    "count_zeros_disk",
    "counting_from_jensen",
    "enumerate_indices",
    "evaluate",
    "evaluate_at",
    "fit_scaling_exponent",
    "harmonic_reproduce",
    "hole_test",
    "kernel_second_normalization",
    "log_abs",
    "log_abs_at",
    "nevanlinna_T",
    "partition_sphere",
    "poisson_kernel",
    "realize",
    "restrict_to_line",
    "run_concentration",
    "run_hole_curve",
    "run_invariance",
    "run_max_growth",
    "run_surface_checks",
    "sample_coefficients",
    "small_ball_probability",
    "sphere_log_integral",
    "surface_integral",
    "tail_bound",
]

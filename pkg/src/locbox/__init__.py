"""Tight outer rectangles for range-based target localization with
bounded, distribution-free noise.

Two convex relaxations bound the set of target positions consistent with
noisy range measurements: a benchmark semidefinite lifting and a tighter
one built from linear-fractional representations.  A brute-force grid
oracle and a Monte Carlo harness quantify how much area the tighter route
saves.
"""

from .harness import (
    ExperimentConfig,
    TrialDraw,
    TrialRecord,
    gen_instance,
    run_experiment,
    timing_sweep,
)
from .lfr import (
    Lfr,
    NearSingularError,
    NoWitnessError,
    PhiLfr,
    build_phi_lfr,
    flatten_map,
    lfr_compose_linear,
    lfr_eval,
    lfr_stack,
    unflatten_witness,
)
from .model import (
    GridCloud,
    GridSpec,
    Instance,
    Polyhedron,
    coherent,
    member_x,
    membership_mask,
    theta,
)
from .oracle import coherent_ml_set, grid_cloud, truncated_gaussian_argmax_check
from .relaxations import (
    BenchmarkSdpMatrices,
    LfrSdpMatrices,
    benchmark_sdp_matrices,
    benchmark_truth_lift,
    build_benchmark_sdp,
    build_lfr_sdp,
    lfr_sdp_matrices,
    lfr_truth_lift,
)
from .sdp import (
    LmiSpec,
    SdpProblem,
    SdpSolution,
    SdpStatus,
    solve,
    write_sdpa,
)
from .superset import (
    DegenerateDenominatorError,
    DirectionSolveError,
    EmptyCloudError,
    Method,
    RegionResult,
    bounding_rect,
    compute_superset,
    extra_directions,
    gain_factor,
    rect_area,
    rect_directions,
    rect_part,
    union_rect_interval,
)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkSdpMatrices",
    "DegenerateDenominatorError",
    "DirectionSolveError",
    "EmptyCloudError",
    "ExperimentConfig",
    "GridCloud",
    "GridSpec",
    "Instance",
    "Lfr",
    "LfrSdpMatrices",
    "LmiSpec",
    "Method",
    "NearSingularError",
    "NoWitnessError",
    "PhiLfr",
    "Polyhedron",
    "RegionResult",
    "SdpProblem",
    "SdpSolution",
    "SdpStatus",
    "TrialDraw",
    "TrialRecord",
    "benchmark_sdp_matrices",
    "benchmark_truth_lift",
    "bounding_rect",
    "build_benchmark_sdp",
    "build_lfr_sdp",
    "build_phi_lfr",
    "coherent",
    "coherent_ml_set",
    "compute_superset",
    "extra_directions",
    "flatten_map",
    "gain_factor",
    "gen_instance",
    "grid_cloud",
    "lfr_compose_linear",
    "lfr_eval",
    "lfr_sdp_matrices",
    "lfr_stack",
    "lfr_truth_lift",
    "member_x",
    "membership_mask",
    "rect_area",
    "rect_directions",
    "rect_part",
    "run_experiment",
    "union_rect_interval",
    "solve",
    "theta",
    "timing_sweep",
    "truncated_gaussian_argmax_check",
    "unflatten_witness",
    "write_sdpa",
]

"""Kernel-aggregated change-point detection for dynamic network sequences.

Two kernels computed on a sequence of network snapshots feed a
Mahalanobis-combined scan statistic; inference is by permutation or by a
fast analytic Bonferroni approximation, with binary segmentation on top
for multiple change points.
"""

from .errors import DegeneracyError, FormatError, ParameterError
from .graphs import (
    DCSBMParams,
    ERGMParams,
    ERParams,
    GeneratorSpec,
    GraphSequence,
    GraphSnapshot,
    RGGParams,
    SBMParams,
    generate_sequence,
    read_sequence,
    rgg_default_radius,
    threshold_binarize,
    write_sequence,
)
from .inference import (
    FIXED_SPLIT,
    KAP_PERM,
    KAPF_ANALYTIC,
    FastConfig,
    PermConfig,
    TestOutcome,
    calibrate_critical_values,
    fast_test,
    fixed_split_test,
    nu_approx,
    permutation_test,
    tail_probability_d,
    tail_probability_w,
)
from .kernels import (
    GraphletProfile,
    KernelMatrix,
    build_kernel,
    gaussian_kernel,
    graphlet_kernel,
    graphlet_profile,
    read_kernel,
    write_kernel,
)
from .moments import (
    MomentCache,
    TimeMoments,
    build_cache,
    cross_time_correlation,
    finite_sample_slope,
    time_moments,
)
from .scan import (
    ScanConfig,
    ScanProfile,
    fixed_split_statistic,
    quadform_profile,
    raw_processes,
    scan_statistic,
)
from .segmentation import SegmentationConfig, SegmentationResult, binary_segmentation

__version__ = "0.1.0"

__all__ = [
    "DegeneracyError",
    "FormatError",
    "ParameterError",
    "GraphSnapshot",
    "GraphSequence",
    "GeneratorSpec",
    "ERParams",
    "SBMParams",
    "DCSBMParams",
    "RGGParams",
    "ERGMParams",
    "generate_sequence",
    "rgg_default_radius",
    "threshold_binarize",
    "read_sequence",
    "write_sequence",
    "KernelMatrix",
    "GraphletProfile",
    "gaussian_kernel",
    "graphlet_kernel",
    "graphlet_profile",
    "build_kernel",
    "read_kernel",
    "write_kernel",
    "MomentCache",
    "TimeMoments",
    "build_cache",
    "time_moments",
    "cross_time_correlation",
    "finite_sample_slope",
    "ScanConfig",
    "ScanProfile",
    "scan_statistic",
    "quadform_profile",
    "raw_processes",
    "fixed_split_statistic",
    "PermConfig",
    "FastConfig",
    "TestOutcome",
    "KAP_PERM",
    "KAPF_ANALYTIC",
    "FIXED_SPLIT",
    "permutation_test",
    "fast_test",
    "fixed_split_test",
    "nu_approx",
    "tail_probability_d",
    "tail_probability_w",
    "calibrate_critical_values",
    "SegmentationConfig",
    "SegmentationResult",
    "binary_segmentation",
]

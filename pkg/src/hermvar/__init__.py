"""Hermite processes on dyadic grids, Skorokhod integrals against them, and
their 1/H-variation."""

from .chaos import (
    KernelTensor,
    PathSample,
    discrete_covariance,
    fbm_cholesky_oracle,
    kernel_tensor,
    multiple_wiener_integral,
    simulate_hermite_path,
    simulate_hermite_paths,
)
from .grid import DyadicGrid, Partition, align_partition, make_dyadic_grid
from .kernel import HermiteParams, ReducedKernelParams, c_constant, fbm_covariance, kernel_Lt, transfer_operator
from .malliavin import (
    CylindricalVariable,
    Direction,
    ElementaryProcess,
    duality_check,
    malliavin_derivative,
    realize,
    skorokhod_integral,
    sobolev_norm_estimate,
)
from .randomness import NoisePath, SeedSpec, sample_noise, wiener_integral
from .special import beta_fn, gaussian_abs_moment, singular_integral
from .variation import VariationReport, converge_integral, converge_z, estimate_C, inequality_suite, variation_statistic

__all__ = [name for name in dir() if not name.startswith("_")]

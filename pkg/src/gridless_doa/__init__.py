"""Gridless direction-of-arrival estimation for non-uniform linear arrays."""

__version__ = "0.1.0"

from .errors import (ConfigError, ConstructionError, DivergenceError, DomainError, EstimationError,
                     GridlessDoaError, NumericalError, ParseError)
from .geometry import (ArrayGeometry, Scene, Target, equivalent_ula, make_perturbed_nla, make_ula,
                       mimo_virtual_array, noise_std_for_snr, steering_matrix, steering_vector,
                       synthesize_snapshot, wavelength_from_frequency)
from .manifold import (SamplingMatrix, accurate_truncation_order, bessel_j, default_truncation_order,
                       sampling_matrix, vandermonde_matrix)
from .solvers import ApgConfig, ApgState, apg_solve, dbf_spectrum, ista_solve, refine_atoms
from .rooting import DoaEstimate, estimate_fnlanm, root_polynomial
from .metrics import (TrialResult, crlb_single_snapshot, location_deviation, resolution, rmse,
                      success_rate)

__all__ = [
    "ApgConfig", "ApgState", "ArrayGeometry", "ConfigError", "ConstructionError", "DivergenceError",
    "DoaEstimate", "DomainError", "EstimationError", "GridlessDoaError", "NumericalError", "ParseError",
    "SamplingMatrix", "Scene", "Target", "TrialResult", "accurate_truncation_order", "apg_solve",
    "bessel_j", "crlb_single_snapshot", "dbf_spectrum", "default_truncation_order", "equivalent_ula",
    "estimate_fnlanm", "ista_solve", "location_deviation", "make_perturbed_nla", "make_ula",
    "mimo_virtual_array", "noise_std_for_snr", "refine_atoms", "resolution", "rmse", "root_polynomial",
    "sampling_matrix", "steering_matrix", "steering_vector", "success_rate", "synthesize_snapshot",
    "vandermonde_matrix", "wavelength_from_frequency",
]

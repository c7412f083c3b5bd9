"""Glosten-Milgrom lattice market simulator with Kyle-Back Gaussian reference.

Core pipeline: quantize a finite asset-value distribution onto a delta
lattice, evaluate the Skellam pricing kernel h_n/p, simulate equilibrium
demand paths (exact conditioned walk and full constructive point-process
modes), account insider profit/loss functionals (U, U^S, L), and run the
convergence suite against the continuous Kyle-Back limit.
"""

from .quantizer import (
    AssetDistribution,
    Quantization,
    QuantizationError,
    gaussian_boundaries,
    quantize,
)
from .skellam import skellam_cdf, skellam_pmf, skellam_quantile, skellam_sf

__all__ = [
    "AssetDistribution",
    "Quantization",
    "QuantizationError",
    "gaussian_boundaries",
    "quantize",
    "skellam_cdf",
    "skellam_pmf",
    "skellam_quantile",
    "skellam_sf",
]

__version__ = "0.1.0"

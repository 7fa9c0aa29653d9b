"""k-core analysis and generation toolkit."""

from .params import ModelParams, TruncatedPoisson, derive_params, largest_fixed_point, phi, threshold
from .graph import Graph, decompose, peel_core, wp_run

__version__ = "0.1.0"

__all__ = [
    "Graph", "ModelParams", "TruncatedPoisson", "decompose", "derive_params",
    "largest_fixed_point", "peel_core", "phi", "threshold", "wp_run",
]

"""Fractal Lipschitz-Killing curvatures of random self-similar sets."""
__version__ = "0.1.0"

from .dimension import hausdorff_dimension, lambda_of_D, lattice_analysis, spectral_report
from .intervals import IntervalSet, curvatures_1d, leaf_cover_1d, r_correction_1d
from .limits import (average_limit, curvature_curves, epsilon_grid, m_infinity_regression,
                     rhs_constant)
from .rifs import (BaseSet, Depth, Markov, ModelError, OffspringAtom, Resolution, RifsModel,
                   Similarity, load_model, sample_tree)

__all__ = [
    "BaseSet", "Depth", "IntervalSet", "Markov", "ModelError", "OffspringAtom", "Resolution",
    "RifsModel", "Similarity", "average_limit", "curvature_curves", "curvatures_1d",
    "epsilon_grid", "hausdorff_dimension", "lambda_of_D", "lattice_analysis", "leaf_cover_1d",
    "load_model", "m_infinity_regression", "r_correction_1d", "rhs_constant", "sample_tree",
    "spectral_report",
]

"""Low-rank kernel approximation by projecting kernel eigenfunctions onto a basis span."""

from .estimators import IKA, GlobalContrastNormalizer, Nystrom, PCAWhitening, UnitNormalizer
from .evaluation import ErrorEstimate, compare_methods, empirical_error, mean_reduction
from .exceptions import (
    DegenerateLandmarks,
    EigenNonConvergence,
    NegativeEigenvalue,
    NotPositiveDefinite,
    RankDeficientBasis,
)
from .ika import (
    BasisSet,
    FeatureMap,
    KernelCenteredBasis,
    MonomialBasis,
    apply_feature_map,
    build_basis_matrix,
    estimate_m,
    estimate_p,
    fit_ika,
)
from .kernels import FiniteRankKernel, GaussianKernel, LinearKernel, build_gram, eval_kernel
from .linalg import GeneralizedEigenSolution, cholesky, solve_generalized_eig, sym_eig
from .nystrom import fit_nystrom

__version__ = "0.1.0"

__all__ = [
    "IKA", "Nystrom", "GlobalContrastNormalizer", "PCAWhitening", "UnitNormalizer",
    "ErrorEstimate", "compare_methods", "empirical_error", "mean_reduction",
    "DegenerateLandmarks", "EigenNonConvergence", "NegativeEigenvalue",
    "NotPositiveDefinite", "RankDeficientBasis",
    "BasisSet", "FeatureMap", "KernelCenteredBasis", "MonomialBasis",
    "apply_feature_map", "build_basis_matrix", "estimate_m", "estimate_p", "fit_ika",
    "FiniteRankKernel", "GaussianKernel", "LinearKernel", "build_gram", "eval_kernel",
    "GeneralizedEigenSolution", "cholesky", "solve_generalized_eig", "sym_eig",
    "fit_nystrom",
]

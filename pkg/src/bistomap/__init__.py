"""Bi-stochastic kernels and diffusion embeddings from reference-set affinities.

A Gaussian (or user-supplied) affinity between a weighted point cloud
and a small reference set is normalized by two derived densities; the
induced symmetric kernel is then exactly bi-stochastic under a
reweighted point measure, with no iterative balancing.  Its spectrum is
computed from a small reference Gram matrix and its eigenfunctions
extend to new points in closed form, giving out-of-sample diffusion
coordinates.  An iterative balancing baseline is included for
comparison.
"""

from .affinity import (
    AffinityMatrix,
    DensityPair,
    NormalizedAffinity,
    Provenance,
    ValidationReport,
    WeightedMeasure,
    compute_densities,
    gaussian_affinity,
    load_affinity,
    load_affinity_values,
    median_bandwidth,
    normalize_affinity,
    validate_assumptions,
)
from .data_model import (
    Measure,
    PointSet,
    ReferenceSet,
    load_measure,
    load_points,
    save_points,
    select_reference,
    uniform_measure,
)
from .embedding import (
    DiffusionEmbedding,
    diffusion_coordinates,
    eigenfunction_values,
    extend_new_points,
    fit_from_affinity,
    fit_model,
    write_embedding,
)
from .errors import (
    AssumptionViolationError,
    BistomapError,
    DegenerateDataError,
    ExtensionError,
    IngestionError,
    NumericalError,
)
from .estimator import BistochasticDiffusionMap
from .persistence import load_model, save_model
from .sinkhorn import SinkhornResult, SymmetricKernel, sinkhorn_balance, stochastic_residual
from .spectral import (
    KernelMatrix,
    ReferenceGram,
    SpectralModel,
    apply_operator,
    bistochastic_residual,
    eigendecompose,
    extend_eigenfunctions,
    gram,
    materialize_kernel,
    restrict_eigenfunctions,
)

__version__ = "0.1.0"

__all__ = [
    "AffinityMatrix",
    "AssumptionViolationError",
    "BistochasticDiffusionMap",
    "BistomapError",
    "DegenerateDataError",
    "DensityPair",
    "DiffusionEmbedding",
    "ExtensionError",
    "IngestionError",
    "KernelMatrix",
    "Measure",
    "NormalizedAffinity",
    "NumericalError",
    "PointSet",
    "Provenance",
    "ReferenceGram",
    "ReferenceSet",
    "SinkhornResult",
    "SpectralModel",
    "SymmetricKernel",
    "ValidationReport",
    "WeightedMeasure",
    "apply_operator",
    "bistochastic_residual",
    "compute_densities",
    "diffusion_coordinates",
    "eigendecompose",
    "eigenfunction_values",
    "extend_eigenfunctions",
    "extend_new_points",
    "fit_from_affinity",
    "fit_model",
    "gaussian_affinity",
    "gram",
    "load_affinity",
    "load_affinity_values",
    "load_measure",
    "load_model",
    "load_points",
    "materialize_kernel",
    "median_bandwidth",
    "normalize_affinity",
    "restrict_eigenfunctions",
    "save_model",
    "save_points",
    "select_reference",
    "sinkhorn_balance",
    "stochastic_residual",
    "uniform_measure",
    "validate_assumptions",
    "write_embedding",
]

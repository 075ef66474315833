"""Reference Gram matrix, its spectrum, and eigenfunction transfer.

The normalized affinity factors the kernel: the full (m, m) kernel is
the Gram matrix of its rows, while the small (n, n) reference Gram is
the Gram matrix of its columns under the reweighted measure.  Both share
their nonzero spectrum, so the expensive object is never needed: the
reference Gram is eigendecomposed and its eigenvectors are transferred
to eigenfunctions on the data (and back) by closed-form sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affinity import Provenance
from .data_model import ReferenceSet, _freeze
from .errors import NumericalError

__all__ = [
    "ReferenceGram",
    "SpectralModel",
    "KernelMatrix",
    "gram",
    "eigendecompose",
    "extend_eigenfunctions",
    "restrict_eigenfunctions",
    "apply_operator",
    "materialize_kernel",
    "bistochastic_residual",
    "DEFAULT_SPECTRAL_CUTOFF",
    "DENSE_SIZE_GUARD",
    "PSD_TOLERANCE",
]

DEFAULT_SPECTRAL_CUTOFF = 1e-12
DENSE_SIZE_GUARD = 2000
# Eigenvalues in [-PSD_TOLERANCE, 0) are rounding noise and are clamped
# to zero; anything below is treated as an upstream bug.
PSD_TOLERANCE = 1e-10
LAMBDA_MAX_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class ReferenceGram:
    """The (n, n) Gram matrix of normalized-affinity columns.

    Exactly symmetric by construction; positive semidefinite up to
    rounding, with the reference density as a fixed point and spectrum
    in [0, 1].
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise ValueError(f"Gram matrix must be square, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise NumericalError("reference Gram has non-finite entries")
        if not np.array_equal(vals, vals.T):
            raise ValueError("Gram matrix must be exactly symmetric; use gram() to build it")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def size(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Retained eigenpairs of the reference Gram plus everything needed
    to evaluate eigenfunctions at arbitrary points.

    Attributes
    ----------
    eigenvalues : (r,) array, descending, all > 0
    eigenvectors : (n, r) array with orthonormal, sign-normalized columns
    cutoff : float
        Relative retention threshold that produced the truncation.
    reference : ReferenceSet or None
        None when the affinity came from an external file.
    reference_density : (n,) array
        Frozen at fit time; out-of-sample rows reuse it unchanged.
    provenance : Provenance
    n_samples : int
        Number of data points the model was fitted on.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    cutoff: float
    reference: ReferenceSet | None
    reference_density: np.ndarray
    provenance: Provenance
    n_samples: int

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        vec = np.asarray(self.eigenvectors, dtype=np.float64)
        dens = np.asarray(self.reference_density, dtype=np.float64)
        if lam.ndim != 1 or lam.size < 1:
            raise ValueError("need at least one retained eigenvalue")
        if np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be sorted in descending order")
        if np.any(lam <= 0.0) or not np.all(np.isfinite(lam)):
            raise ValueError("retained eigenvalues must be finite and positive")
        if vec.shape != (dens.shape[0], lam.shape[0]):
            raise ValueError(f"eigenvector table shape {vec.shape} does not match "
                             f"{dens.shape[0]} references x {lam.shape[0]} eigenvalues")
        if self.reference is not None and len(self.reference) != dens.shape[0]:
            raise ValueError("reference set size does not match the density length")
        object.__setattr__(self, "eigenvalues", _freeze(lam))
        object.__setattr__(self, "eigenvectors", _freeze(vec))
        object.__setattr__(self, "reference_density", _freeze(dens))

    @property
    def n_references(self):
        return self.reference_density.shape[0]

    @property
    def n_retained(self):
        return self.eigenvalues.shape[0]

    @property
    def n_features(self):
        return None if self.reference is None else self.reference.dim

    @property
    def lambda_max_warning(self):
        dev = abs(float(self.eigenvalues[0]) - 1.0)
        if dev > LAMBDA_MAX_TOLERANCE:
            return (f"largest eigenvalue {self.eigenvalues[0]!r} deviates from 1 "
                    f"by {dev:.3e} (> {LAMBDA_MAX_TOLERANCE:g})")
        return None


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """The dense (m, m) kernel, materialized on demand only.

    ``symmetry_defect`` records the worst asymmetry of the raw Gram
    product before the exact (p + p^T)/2 symmetrization was applied.
    """

    values: np.ndarray
    symmetry_defect: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise ValueError(f"kernel must be square, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise NumericalError("materialized kernel has non-finite entries")
        if np.any(vals < 0.0):
            raise NumericalError("materialized kernel has negative entries")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def size(self):
        return self.values.shape[0]


def gram(beta, w):
    """Accumulate the (n, n) reference Gram under the reweighted measure.

    Entry (i, j) sums normalized-affinity columns i and j against the
    weighted measure.  The result is symmetrized as (A + A^T)/2 because
    floating-point summation order can break exact symmetry.
    """
    b = beta.values
    wt = w.weights
    if b.shape[0] != wt.shape[0]:
        raise ValueError(f"normalized affinity has {b.shape[0]} rows but the weighted "
                         f"measure has {wt.shape[0]} entries")
    A = b.T @ (wt[:, None] * b)
    A = 0.5 * (A + A.T)
    if not np.all(np.isfinite(A)):
        raise NumericalError("reference Gram accumulation produced non-finite entries")
    return ReferenceGram(A)


def _sign_normalize(vectors):
    # Flip each column so its largest-magnitude component (first such
    # index on ties) is positive; eigenvectors are only defined up to
    # sign and this makes persisted models deterministic.
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs[None, :]


def eigendecompose(A, *, cutoff=DEFAULT_SPECTRAL_CUTOFF, reference, densities,
                   provenance, n_samples):
    """Full symmetric eigendecomposition of the reference Gram.

    Eigenvalues in [-1e-10, 0) are clamped to zero; pairs with
    eigenvalue > cutoff * lambda_max are retained, sorted descending,
    with sign-normalized eigenvectors.

    Parameters
    ----------
    A : ReferenceGram
    cutoff : float
        Relative retention threshold in [0, 1).
    reference : ReferenceSet or None
        Stored on the model for out-of-sample evaluation.
    densities : DensityPair
        Supplies the frozen per-reference density.
    provenance : Provenance
    n_samples : int

    Raises
    ------
    NumericalError
        If any eigenvalue is below -1e-10: the Gram of nonnegative
        factors is positive semidefinite in exact arithmetic, so this
        indicates an upstream bug, not noise.
    """
    if not 0.0 <= cutoff < 1.0:
        raise ValueError(f"cutoff must lie in [0, 1), got {cutoff!r}")
    lam, vec = np.linalg.eigh(A.values)
    if lam[0] < -PSD_TOLERANCE:
        raise NumericalError(f"reference Gram is not positive semidefinite: "
                             f"eigenvalue {lam[0]!r} below -{PSD_TOLERANCE:g}")
    lam = lam[::-1].copy()
    vec = vec[:, ::-1]
    np.clip(lam, 0.0, None, out=lam)
    keep = int(np.count_nonzero(lam > cutoff * lam[0]))
    if keep < 1:
        raise NumericalError("no eigenvalues above the cutoff; the Gram matrix is zero")
    return SpectralModel(
        eigenvalues=lam[:keep],
        eigenvectors=_sign_normalize(vec[:, :keep]),
        cutoff=float(cutoff),
        reference=reference,
        reference_density=densities.reference_density,
        provenance=provenance,
        n_samples=int(n_samples),
    )


def extend_eigenfunctions(model, beta):
    """Evaluate eigenfunctions on the data from reference eigenvectors.

    Column k is (beta @ v_k) / sqrt(lambda_k).  The columns are
    orthonormal under the weighted measure.
    """
    b = beta.values
    if b.shape[1] != model.n_references:
        raise ValueError(f"normalized affinity has {b.shape[1]} columns but the model "
                         f"holds {model.n_references} references")
    if np.any(model.eigenvalues <= 0.0):
        raise ValueError("retained eigenvalues must be positive; the cutoff is misconfigured")
    # Same expression as the out-of-sample path, for exact consistency.
    return (b @ model.eigenvectors) / np.sqrt(model.eigenvalues)


def restrict_eigenfunctions(model, psi, beta, w):
    """Recover reference eigenvectors from eigenfunctions on the data.

    Column k is (beta^T (w * psi_k)) / sqrt(lambda_k); composed with
    :func:`extend_eigenfunctions` it is the identity on retained
    eigenvectors.
    """
    b = beta.values
    psi = np.asarray(psi, dtype=np.float64)
    if psi.shape != (b.shape[0], model.n_retained):
        raise ValueError(f"eigenfunction table shape {psi.shape} does not match "
                         f"({b.shape[0]}, {model.n_retained})")
    if np.any(model.eigenvalues <= 0.0):
        raise ValueError("retained eigenvalues must be positive; the cutoff is misconfigured")
    return (b.T @ (w.weights[:, None] * psi)) / np.sqrt(model.eigenvalues)


def apply_operator(beta, w, f):
    """Apply the kernel integral operator to per-point function values.

    Uses the factored O(m n) form beta @ (beta^T @ (w * f)), which equals
    the dense kernel action without materializing it.
    """
    b = beta.values
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (b.shape[0],):
        raise ValueError(f"function values must have shape ({b.shape[0]},), got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("function values must be finite")
    return b @ (b.T @ (w.weights * f))


def materialize_kernel(beta, max_m=DENSE_SIZE_GUARD, *, force=False):
    """Materialize the dense (m, m) kernel as the Gram of affinity rows.

    Every production path is low rank; the dense kernel exists for
    diagnostics and small-problem verification only, so sizes above
    ``max_m`` are refused unless ``force`` is set.
    """
    b = beta.values
    m = b.shape[0]
    if m > max_m and not force:
        raise ValueError(f"refusing to materialize a {m} x {m} kernel (guard max_m={max_m}); "
                         f"pass force=True to override")
    raw = b @ b.T
    defect = float(np.max(np.abs(raw - raw.T))) if m > 1 else 0.0
    return KernelMatrix(0.5 * (raw + raw.T), symmetry_defect=defect)


def bistochastic_residual(beta, w):
    """Worst-case deviation of the kernel's weighted row sums from one.

    Computed in factored form as max_x |sum_i beta[x, i] * (beta^T w)_i - 1|;
    by symmetry the column statement is identical.  On any valid
    pipeline output this sits at machine precision.
    """
    b = beta.values
    wt = w.weights
    if b.shape[0] != wt.shape[0]:
        raise ValueError(f"normalized affinity has {b.shape[0]} rows but the weighted "
                         f"measure has {wt.shape[0]} entries")
    return float(np.max(np.abs(b @ (b.T @ wt) - 1.0)))

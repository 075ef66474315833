"""Diffusion-map coordinates for in-sample and genuinely new points.

Coordinates follow the usual convention: the constant leading eigenpair
is dropped and column k carries eigenvalue^time * eigenfunction.  The
eigenfunctions are rescaled so the constant one equals exactly one
(multiplying the orthonormal table by the reference-density norm), which
makes the embedding invariant under a uniform rescaling of the affinity.
New points are embedded by rebuilding their affinity rows with the
stored builder and reusing the frozen reference density and eigenpairs;
densities are never refreshed after fitting.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .affinity import (
    DEFAULT_MIN_DENSITY,
    STRICT_POSITIVITY_TOL,
    DensityPair,
    compute_densities,
    gaussian_affinity,
    median_bandwidth,
    normalize_affinity,
    validate_assumptions,
)
from .data_model import FLOAT_FORMAT, _freeze, select_reference, uniform_measure
from .errors import AssumptionViolationError, ExtensionError
from .spectral import (
    DEFAULT_SPECTRAL_CUTOFF,
    eigendecompose,
    extend_eigenfunctions,
    gram,
)

__all__ = [
    "DiffusionEmbedding",
    "fit_model",
    "fit_from_affinity",
    "eigenfunction_values",
    "diffusion_coordinates",
    "extend_new_points",
    "write_embedding",
]


@dataclass(frozen=True, eq=False)
class DiffusionEmbedding:
    """Per-point diffusion coordinates.

    ``coordinates`` has one row per point and one column per retained
    non-constant eigenpair used; ``eigenvalues`` lists the eigenvalue
    behind each column.
    """

    coordinates: np.ndarray
    time: float
    eigenvalues: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coordinates, dtype=np.float64)
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        if coords.ndim != 2:
            raise ValueError(f"coordinates must be 2-D, got shape {coords.shape}")
        if lam.shape != (coords.shape[1],):
            raise ValueError("need one eigenvalue per coordinate column")
        object.__setattr__(self, "coordinates", _freeze(coords))
        object.__setattr__(self, "eigenvalues", _freeze(lam))

    @property
    def n_components(self):
        return self.coordinates.shape[1]


def fit_from_affinity(alpha, mu, *, reference=None, cutoff=DEFAULT_SPECTRAL_CUTOFF,
                      min_density=DEFAULT_MIN_DENSITY):
    """Fit the spectral model from an already-built affinity matrix.

    Runs validation, densities, normalization, the reference Gram, its
    eigendecomposition, and the in-sample eigenfunction table.

    Returns
    -------
    (SpectralModel, ndarray)
        The model and the (m, r) in-sample eigenfunction table.
    """
    report = validate_assumptions(alpha, mu)
    if not report.passed:
        raise AssumptionViolationError(
            "validation stage failed:\n" + report.summary(),
            rows=report.failed_rows, columns=report.failed_columns)
    if min(report.min_data_density, report.min_reference_density) < min_density:
        warnings.warn(
            f"densities pass strict positivity but fall below {min_density:g} "
            f"(min per-point {report.min_data_density:.3e}, min per-reference "
            f"{report.min_reference_density:.3e}); results may be ill-conditioned",
            RuntimeWarning, stacklevel=2)
    densities, weighted = compute_densities(alpha, mu)
    beta = normalize_affinity(alpha, densities)
    A = gram(beta, weighted)
    model = eigendecompose(A, cutoff=cutoff, reference=reference, densities=densities,
                           provenance=alpha.provenance, n_samples=len(mu))
    psi = extend_eigenfunctions(model, beta)
    return model, psi


def fit_model(X, mu=None, *, strategy="all", size=None, seed=0, epsilon="median",
              cutoff=DEFAULT_SPECTRAL_CUTOFF, min_density=DEFAULT_MIN_DENSITY):
    """Fit the full pipeline on a point set.

    Parameters
    ----------
    X : PointSet
    mu : Measure, optional
        Uniform over the points when omitted.
    strategy, size, seed
        Reference selection, see :func:`select_reference`.
    epsilon : "median" or float
        Gaussian bandwidth; "median" uses the median squared distance.
    cutoff : float
        Relative spectral retention threshold.
    min_density : float
        Near-zero density warning threshold (does not fail).

    Returns
    -------
    (SpectralModel, ndarray)
    """
    if mu is None:
        mu = uniform_measure(len(X))
    elif len(mu) != len(X):
        raise ValueError(f"measure length {len(mu)} does not match {len(X)} points")
    Y = select_reference(X, strategy, size=size, seed=seed)
    if epsilon == "median":
        epsilon = median_bandwidth(X, Y)
    alpha = gaussian_affinity(X, Y, float(epsilon))
    return fit_from_affinity(alpha, mu, reference=Y, cutoff=cutoff, min_density=min_density)


def eigenfunction_values(model, X_new, *, tol=STRICT_POSITIVITY_TOL):
    """Evaluate the retained eigenfunctions at new points.

    Rebuilds affinity rows with the stored builder, normalizes them with
    the fresh per-point density but the frozen per-reference density,
    and transfers through the stored eigenvectors.  Re-evaluating the
    training points reproduces the in-sample table bit for bit.

    Raises
    ------
    ExtensionError
        If the model's affinity came from an external file.
    AssumptionViolationError
        Listing the offending points when any new point has vanishing
        affinity to the whole reference set.
    """
    if not model.provenance.computable or model.reference is None:
        raise ExtensionError(
            "model was fitted from a precomputed affinity file; affinities at new "
            "points cannot be evaluated")
    if X_new.dim != model.reference.dim:
        raise ValueError(f"new points are {X_new.dim}-D but the model was fitted "
                         f"on {model.reference.dim}-D data")
    alpha = gaussian_affinity(X_new, model.reference, model.provenance.epsilon)
    data_density = alpha.values.sum(axis=1)
    bad = np.nonzero(~(np.isfinite(data_density) & (data_density > tol)))[0]
    if bad.size:
        shown = ", ".join(str(i) for i in bad[:10])
        raise AssumptionViolationError(
            f"{bad.size} new point(s) have vanishing affinity to the reference set "
            f"(too far for the fitted bandwidth): point indices {shown}",
            rows=bad)
    densities = DensityPair(data_density, model.reference_density)
    beta = normalize_affinity(alpha, densities)
    return extend_eigenfunctions(model, beta)


def diffusion_coordinates(model, psi, *, time=0.0, n_components=None):
    """Scale eigenfunctions into diffusion coordinates.

    Column k holds eigenvalue_{k+1}^time times the constant-normalized
    eigenfunction k+1; the constant leading pair is excluded.  At time
    zero the columns are the constant-normalized eigenfunctions
    themselves.
    """
    psi = np.asarray(psi, dtype=np.float64)
    r = model.n_retained
    if psi.ndim != 2 or psi.shape[1] != r:
        raise ValueError(f"eigenfunction table must have {r} columns, got shape {psi.shape}")
    if time < 0.0:
        raise ValueError(f"diffusion time must be nonnegative, got {time!r}")
    if n_components is None:
        n_components = r - 1
    n_components = int(n_components)
    if not 0 <= n_components <= r - 1:
        raise ValueError(f"embedding dimension must be between 0 and {r - 1} "
                         f"(model retained r={r} eigenpairs), got {n_components}")
    lam = model.eigenvalues[1:n_components + 1]
    # The norm of the reference density rescales the orthonormal table so
    # the constant eigenfunction is exactly one; this cancels the 1/c
    # eigenfunction scaling under affinity -> c * affinity.
    scale = float(np.linalg.norm(model.reference_density))
    coords = psi[:, 1:n_components + 1] * lam**float(time) * scale
    return DiffusionEmbedding(coordinates=coords, time=float(time), eigenvalues=lam)


def extend_new_points(model, X_new, *, time=0.0, n_components=None,
                      tol=STRICT_POSITIVITY_TOL):
    """Out-of-sample diffusion coordinates for genuinely new points."""
    psi_new = eigenfunction_values(model, X_new, tol=tol)
    return diffusion_coordinates(model, psi_new, time=time, n_components=n_components)


def write_embedding(embedding, destination, *, delimiter=",", header=False):
    """Write coordinates as delimiter-separated text, one row per point.

    With ``header``, a comment-prefixed metadata line records the
    diffusion time and the eigenvalues, followed by column names
    psi_2..psi_{K+1}.
    """
    def _write(f):
        if header:
            lams = delimiter.join(FLOAT_FORMAT % v for v in embedding.eigenvalues)
            f.write(f"# time={FLOAT_FORMAT % embedding.time} eigenvalues={lams}\n")
            names = delimiter.join(f"psi_{k + 2}" for k in range(embedding.n_components))
            f.write(names + "\n")
        np.savetxt(f, embedding.coordinates, fmt=FLOAT_FORMAT, delimiter=delimiter)

    if hasattr(destination, "write"):
        _write(destination)
    else:
        with open(destination, "w", encoding="utf-8") as f:
            _write(f)

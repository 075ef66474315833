"""Scikit-learn estimator wrapping the reference-set kernel pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .affinity import DEFAULT_MIN_DENSITY
from .data_model import Measure, PointSet
from .embedding import diffusion_coordinates, extend_new_points, fit_model
from .spectral import DEFAULT_SPECTRAL_CUTOFF

__all__ = ["BistochasticDiffusionMap"]


class BistochasticDiffusionMap(TransformerMixin, BaseEstimator):
    """Diffusion-map embedding from a bi-stochastic reference-set kernel.

    Builds a Gaussian affinity between the data and a small reference
    set, normalizes it by two derived densities so the induced kernel is
    exactly bi-stochastic under a reweighted point measure (no iterative
    balancing), computes the spectrum from the small reference Gram
    matrix, and embeds points with eigenvalue^t-scaled eigenfunctions.
    ``transform`` evaluates the eigenfunctions at new points in closed
    form, so the embedding extends out of sample.

    Parameters
    ----------
    n_components : int, default=2
        Embedding dimension; the constant leading eigenpair is excluded.
    diffusion_time : float, default=0.0
        Exponent t scaling each coordinate by eigenvalue^t.
    epsilon : "median" or float, default="median"
        Gaussian bandwidth in squared-distance units; "median" uses the
        median pairwise squared distance to the reference set.
    reference_strategy : {"all", "uniform", "fps"}, default="all"
        How the reference set is chosen from the training points.
    reference_size : int, optional
        Reference-set size for "uniform" and "fps"; ignored for "all".
    cutoff : float, default=1e-12
        Relative spectral cutoff; eigenpairs with eigenvalue below
        cutoff * lambda_max are dropped.
    min_density : float, default=1e-12
        Warn (without failing) when a density falls below this.
    random_state : int, default=0
        Seed for the "uniform" reference draw; fitting is deterministic.

    Attributes
    ----------
    embedding_ : ndarray of shape (n_samples, n_components)
        In-sample diffusion coordinates.
    eigenvalues_ : ndarray of shape (r,)
        Retained spectrum, descending; the first eigenvalue is 1.
    eigenvectors_ : ndarray of shape (n_references, r)
        Orthonormal, sign-normalized reference eigenvectors.
    eigenfunctions_ : ndarray of shape (n_samples, r)
        In-sample eigenfunction table, orthonormal under the weighted
        measure.
    reference_points_ : ndarray of shape (n_references, n_features)
    reference_indices_ : ndarray of shape (n_references,)
        Positions of the reference points in the training set.
    reference_density_ : ndarray of shape (n_references,)
    bandwidth_ : float
        The Gaussian bandwidth actually used.
    model_ : SpectralModel
        The full fitted model (persistable via ``save_model``).
    n_features_in_ : int

    Examples
    --------
    >>> import numpy as np
    >>> from bistomap import BistochasticDiffusionMap
    >>> X = np.random.default_rng(0).normal(size=(200, 5))
    >>> dm = BistochasticDiffusionMap(n_components=2, reference_strategy="fps",
    ...                               reference_size=20)
    >>> coords = dm.fit_transform(X)
    >>> coords.shape
    (200, 2)
    >>> dm.transform(X[:10]).shape
    (10, 2)
    """

    def __init__(self, n_components=2, diffusion_time=0.0, epsilon="median",
                 reference_strategy="all", reference_size=None,
                 cutoff=DEFAULT_SPECTRAL_CUTOFF, min_density=DEFAULT_MIN_DENSITY,
                 random_state=0):
        self.n_components = n_components
        self.diffusion_time = diffusion_time
        self.epsilon = epsilon
        self.reference_strategy = reference_strategy
        self.reference_size = reference_size
        self.cutoff = cutoff
        self.min_density = min_density
        self.random_state = random_state

    def fit(self, X, y=None, sample_weight=None):
        """Fit the spectral model on X.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
        y : ignored
        sample_weight : array-like of shape (n_samples,), optional
            Strictly positive point masses; uniform when omitted.

        Returns
        -------
        self
        """
        X = check_array(X, dtype=np.float64)
        points = PointSet(X)
        measure = None if sample_weight is None else Measure(np.asarray(sample_weight,
                                                                        dtype=np.float64))
        model, psi = fit_model(
            points, measure,
            strategy=self.reference_strategy,
            size=self.reference_size,
            seed=self.random_state,
            epsilon=self.epsilon,
            cutoff=self.cutoff,
            min_density=self.min_density,
        )
        embedding = diffusion_coordinates(model, psi, time=self.diffusion_time,
                                          n_components=self.n_components)
        self.model_ = model
        self.eigenvalues_ = model.eigenvalues
        self.eigenvectors_ = model.eigenvectors
        self.eigenfunctions_ = psi
        self.embedding_ = embedding.coordinates
        self.reference_points_ = model.reference.points
        self.reference_indices_ = model.reference.source_indices
        self.reference_density_ = model.reference_density
        self.bandwidth_ = model.provenance.epsilon
        self.n_features_in_ = points.dim
        return self

    def fit_transform(self, X, y=None, sample_weight=None):
        """Fit on X and return the in-sample embedding."""
        self.fit(X, y, sample_weight=sample_weight)
        return self.embedding_

    def transform(self, X):
        """Embed (possibly new) points with the fitted model.

        Re-embedding the training points reproduces ``embedding_``
        exactly; points with vanishing affinity to every reference raise
        with their indices.
        """
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features but the model was fitted "
                             f"with {self.n_features_in_}")
        embedding = extend_new_points(self.model_, PointSet(X),
                                      time=self.diffusion_time,
                                      n_components=self.n_components)
        return embedding.coordinates

"""Iterative symmetric balancing of a positive kernel, as a baseline.

Classical alternating row/column normalization, folded into a single
symmetric update: with current scaling d, the balanced row sums are
s = d * (K d), and the update d <- d / sqrt(s) is the geometric mean of
the two alternating scalings.  This targets the counting measure (plain
row and column sums equal one), unlike the reference-set construction,
which is bi-stochastic w.r.t. its reweighted measure in one pass; the
two normalizations are different targets and are never conflated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import _freeze

__all__ = ["SymmetricKernel", "SinkhornResult", "sinkhorn_balance", "stochastic_residual"]

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SymmetricKernel:
    """A strictly positive symmetric (m, m) kernel matrix."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise ValueError(f"kernel must be a square matrix, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("kernel contains non-finite entries")
        if np.any(vals <= 0.0):
            i, j = np.argwhere(vals <= 0.0)[0]
            raise ValueError(f"kernel must be strictly positive; entry ({i}, {j}) "
                             f"is {vals[i, j]!r}")
        scale = max(1.0, float(np.max(vals)))
        if float(np.max(np.abs(vals - vals.T))) > SYMMETRY_TOL * scale:
            raise ValueError("kernel must be symmetric")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def size(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class SinkhornResult:
    """Outcome of the balancing iteration.

    ``scaling`` is the vector d with diag(d) K diag(d) balanced;
    ``residuals`` is the trajectory of max |row/col sum - 1| measured
    after each update.  Non-convergence is flagged, not raised.
    """

    scaling: np.ndarray
    balanced: np.ndarray
    iterations: int
    residual: float
    residuals: tuple
    converged: bool

    def __post_init__(self):
        object.__setattr__(self, "scaling", _freeze(self.scaling))
        object.__setattr__(self, "balanced", _freeze(self.balanced))


def sinkhorn_balance(kernel, tol=1e-8, max_iter=1000, scaling_init=None):
    """Balance a positive symmetric kernel to doubly stochastic form.

    Parameters
    ----------
    kernel : SymmetricKernel
    tol : float
        Stop once every row and column sum of diag(d) K diag(d) is
        within ``tol`` of one.
    max_iter : int
        Iteration budget; exhausting it flags the result non-converged.
    scaling_init : array, optional
        Strictly positive starting scaling, ones by default.

    Returns
    -------
    SinkhornResult
    """
    if not tol > 0.0:
        raise ValueError(f"tolerance must be positive, got {tol!r}")
    max_iter = int(max_iter)
    if max_iter < 1:
        raise ValueError(f"need at least one iteration, got {max_iter}")
    K = kernel.values
    if scaling_init is None:
        d = np.ones(K.shape[0])
    else:
        d = np.array(scaling_init, dtype=np.float64)
        if d.shape != (K.shape[0],) or not np.all(np.isfinite(d)) or np.any(d <= 0.0):
            raise ValueError("scaling_init must be strictly positive with one entry per row")

    trajectory = []
    iterations = 0
    # Row sums of the symmetrically scaled matrix; by symmetry the
    # column sums are identical, so one residual covers both.
    sums = d * (K @ d)
    residual = float(np.max(np.abs(sums - 1.0)))
    while residual > tol and iterations < max_iter:
        d = d / np.sqrt(sums)
        iterations += 1
        sums = d * (K @ d)
        residual = float(np.max(np.abs(sums - 1.0)))
        trajectory.append(residual)
    return SinkhornResult(
        scaling=d,
        balanced=d[:, None] * K * d[None, :],
        iterations=iterations,
        residual=residual,
        residuals=tuple(trajectory),
        converged=residual <= tol,
    )


def stochastic_residual(matrix):
    """Max over all rows and columns of |sum - 1| (counting measure)."""
    M = np.asarray(matrix, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"need a 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix contains non-finite entries")
    rows = np.max(np.abs(M.sum(axis=1) - 1.0))
    cols = np.max(np.abs(M.sum(axis=0) - 1.0))
    return float(max(rows, cols))

"""Asymmetric affinities and the densities that normalize them.

The construction starts from a nonnegative affinity between the data
points and a small reference set.  Two derived densities normalize it:
a per-point density (the row sums of the affinity) and a per-reference
density (the square root of the affinity mass weighted by the per-point
density and the point measure).  Dividing by both yields the normalized
affinity whose Gram products define a kernel that is exactly
bi-stochastic under the reweighted point measure, with no iteration.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .data_model import Measure, _freeze, _parse_grid, _read_text
from .errors import AssumptionViolationError, DegenerateDataError

__all__ = [
    "Provenance",
    "AffinityMatrix",
    "DensityPair",
    "NormalizedAffinity",
    "WeightedMeasure",
    "ValidationReport",
    "gaussian_affinity",
    "median_bandwidth",
    "compute_densities",
    "validate_assumptions",
    "normalize_affinity",
    "load_affinity",
    "load_affinity_values",
    "STRICT_POSITIVITY_TOL",
    "DEFAULT_MIN_DENSITY",
]

# Hard positivity floor: a denormal guard, since the construction only
# needs strict positivity.  Near-zero densities are reported separately
# against the user-facing DEFAULT_MIN_DENSITY without failing.
STRICT_POSITIVITY_TOL = 1e-300
DEFAULT_MIN_DENSITY = 1e-12


@dataclass(frozen=True, eq=False)
class Provenance:
    """How an affinity matrix was built, for reproducible re-evaluation.

    ``gaussian`` affinities record their bandwidth and can be evaluated
    at new points; ``external`` affinities record a content digest and
    cannot.
    """

    builder: str
    epsilon: float | None = None
    digest: str | None = None

    @property
    def computable(self):
        return self.builder == "gaussian"


@dataclass(frozen=True, eq=False)
class AffinityMatrix:
    """An (m, n) matrix of nonnegative finite affinities plus provenance."""

    values: np.ndarray
    provenance: Provenance

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError(f"affinity must be a 2-D array, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            i, j = np.argwhere(~np.isfinite(vals))[0]
            raise ValueError(f"affinity entry ({i}, {j}) is non-finite")
        if np.any(vals < 0.0):
            i, j = np.argwhere(vals < 0.0)[0]
            raise ValueError(f"affinity entry ({i}, {j}) is negative")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class DensityPair:
    """Per-point and per-reference densities derived from an affinity."""

    data_density: np.ndarray       # length m, row sums of the affinity
    reference_density: np.ndarray  # length n, sqrt of weighted column mass

    def __post_init__(self):
        for name in ("data_density", "reference_density"):
            dens = np.asarray(getattr(self, name), dtype=np.float64)
            if dens.ndim != 1 or dens.size < 1:
                raise ValueError(f"{name} must be a non-empty 1-D array, got shape {dens.shape}")
            if not np.all(np.isfinite(dens)) or np.any(dens <= 0.0):
                raise ValueError(f"{name} must be strictly positive and finite")
            object.__setattr__(self, name, _freeze(dens))


@dataclass(frozen=True, eq=False)
class NormalizedAffinity:
    """The affinity divided by both densities; rows satisfy a unit identity.

    For every row x, sum_i values[x, i] * reference_density[i] == 1 up to
    rounding, which is the algebraic content of the kernel's
    bi-stochasticity.
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError(f"normalized affinity must be 2-D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("normalized affinity contains non-finite entries")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class WeightedMeasure:
    """The point measure reweighted by the squared per-point density.

    This is the measure under which the constructed kernel is
    bi-stochastic.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError(f"weights must be a non-empty 1-D array, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise ValueError("weighted measure must be strictly positive and finite")
        object.__setattr__(self, "weights", _freeze(w))

    def __len__(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class ValidationReport:
    """Structured result of the affinity assumption checks.

    Three conditions are checked: (1) every affinity entry is finite,
    (2) every per-point density lies in (tol, inf), (3) every
    per-reference density lies in (tol, inf).  Failures are reported,
    never raised; callers decide.
    """

    passed: bool
    affinity_finite: bool
    nonfinite_entries: tuple = ()
    data_density_positive: bool = True
    failed_rows: tuple = ()
    min_data_density: float = float("nan")
    reference_density_positive: bool = True
    failed_columns: tuple = ()
    min_reference_density: float = float("nan")
    tol: float = STRICT_POSITIVITY_TOL

    def summary(self):
        lines = [f"affinity assumption check (tol={self.tol:g}): "
                 f"{'pass' if self.passed else 'FAIL'}"]
        if self.affinity_finite:
            lines.append("  [1] affinity entries finite ... ok")
        else:
            shown = ", ".join(f"({i}, {j})" for i, j in self.nonfinite_entries[:10])
            lines.append(f"  [1] affinity entries finite ... FAIL (entries {shown})")
        if self.data_density_positive:
            lines.append(f"  [2] per-point density positive and finite ... ok "
                         f"(min {self.min_data_density:.6g})")
        else:
            shown = ", ".join(str(i) for i in self.failed_rows[:10])
            lines.append(f"  [2] per-point density positive and finite ... FAIL "
                         f"(rows {shown}; min {self.min_data_density:.6g})")
        if self.reference_density_positive:
            lines.append(f"  [3] per-reference density positive and finite ... ok "
                         f"(min {self.min_reference_density:.6g})")
        else:
            shown = ", ".join(str(j) for j in self.failed_columns[:10])
            lines.append(f"  [3] per-reference density positive and finite ... FAIL "
                         f"(columns {shown}; min {self.min_reference_density:.6g})")
        if not self.passed:
            lines.append("  hint: increase the bandwidth or enlarge the reference set "
                         "so every point relates to it")
        return "\n".join(lines)


def gaussian_affinity(X, Y, epsilon):
    """Gaussian affinity exp(-||x - y||^2 / epsilon) between X and Y.

    Parameters
    ----------
    X : PointSet
    Y : ReferenceSet
    epsilon : float
        Positive bandwidth, in squared-distance units.

    Returns
    -------
    AffinityMatrix
        Shape (m, n), provenance ("gaussian", epsilon).
    """
    epsilon = float(epsilon)
    if not epsilon > 0.0:
        raise ValueError(f"bandwidth must be positive, got {epsilon!r}")
    if X.dim != Y.dim:
        raise ValueError(f"dimension mismatch: points are {X.dim}-D, references are {Y.dim}-D")
    sq = cdist(X.points, Y.points, "sqeuclidean")
    return AffinityMatrix(np.exp(-sq / epsilon), Provenance("gaussian", epsilon=epsilon))


def median_bandwidth(X, Y):
    """Median of all pairwise squared distances between X and Y.

    The standard scale-free default bandwidth.  Raises
    DegenerateDataError when the median is zero (all points identical,
    or more than half of the pairs coincide), since a zero bandwidth is
    unusable.
    """
    sq = cdist(X.points, Y.points, "sqeuclidean")
    med = float(np.median(sq))
    if med <= 0.0:
        if not np.any(sq > 0.0):
            raise DegenerateDataError("all pairwise distances are zero; the data are degenerate")
        raise DegenerateDataError(
            "median squared distance is zero (too many duplicate pairs); "
            "supply an explicit bandwidth")
    return med


def _density_arrays(values, weights):
    # Row sums first; the per-reference density then integrates the
    # affinity against (row density x measure) down each column.
    data_density = values.sum(axis=1)
    column_mass = (values * (data_density * weights)[:, None]).sum(axis=0)
    reference_density = np.sqrt(column_mass)
    weighted = data_density**2 * weights
    return data_density, reference_density, weighted


def compute_densities(alpha, mu, tol=STRICT_POSITIVITY_TOL):
    """Derive both densities and the reweighted measure from an affinity.

    Parameters
    ----------
    alpha : AffinityMatrix
    mu : Measure
    tol : float
        Strict positivity floor.

    Returns
    -------
    (DensityPair, WeightedMeasure)

    Raises
    ------
    AssumptionViolationError
        If any density is <= tol or non-finite; the message and the
        ``rows``/``columns`` attributes identify the offenders.
    """
    values = alpha.values
    if values.shape[0] != len(mu):
        raise ValueError(f"affinity has {values.shape[0]} rows but the measure has {len(mu)} weights")
    data_density, reference_density, weighted = _density_arrays(values, mu.weights)

    bad_rows = np.nonzero(~(np.isfinite(data_density) & (data_density > tol)
                            & np.isfinite(weighted)))[0]
    if bad_rows.size:
        raise AssumptionViolationError(
            f"per-point density failed at row {bad_rows[0]} "
            f"(value {data_density[bad_rows[0]]!r}); {bad_rows.size} row(s) affected",
            rows=bad_rows)
    bad_cols = np.nonzero(~(np.isfinite(reference_density) & (reference_density > tol)))[0]
    if bad_cols.size:
        raise AssumptionViolationError(
            f"per-reference density failed at column {bad_cols[0]} "
            f"(value {reference_density[bad_cols[0]]!r}); {bad_cols.size} column(s) affected",
            columns=bad_cols)
    return (DensityPair(data_density, reference_density), WeightedMeasure(weighted))


def validate_assumptions(alpha, mu, tol=STRICT_POSITIVITY_TOL):
    """Check the affinity assumptions and report, without raising.

    Accepts an AffinityMatrix or a raw 2-D array (so files can be
    inspected before the strict constructor would reject them).
    """
    values = alpha.values if isinstance(alpha, AffinityMatrix) else np.asarray(alpha, dtype=np.float64)
    weights = mu.weights if isinstance(mu, Measure) else np.asarray(mu, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"affinity must be 2-D, got shape {values.shape}")
    if values.shape[0] != weights.shape[0]:
        raise ValueError(f"affinity has {values.shape[0]} rows but the measure has "
                         f"{weights.shape[0]} weights")

    finite_mask = np.isfinite(values)
    affinity_finite = bool(finite_mask.all())
    nonfinite = tuple(map(tuple, np.argwhere(~finite_mask)[:10])) if not affinity_finite else ()

    data_density, reference_density, _ = _density_arrays(values, weights)
    row_ok = np.isfinite(data_density) & (data_density > tol)
    col_ok = np.isfinite(reference_density) & (reference_density > tol)
    failed_rows = tuple(int(i) for i in np.nonzero(~row_ok)[0])
    failed_columns = tuple(int(j) for j in np.nonzero(~col_ok)[0])

    return ValidationReport(
        passed=affinity_finite and not failed_rows and not failed_columns,
        affinity_finite=affinity_finite,
        nonfinite_entries=nonfinite,
        data_density_positive=not failed_rows,
        failed_rows=failed_rows,
        min_data_density=float(np.min(data_density)),
        reference_density_positive=not failed_columns,
        failed_columns=failed_columns,
        min_reference_density=float(np.min(reference_density)),
        tol=tol,
    )


def normalize_affinity(alpha, densities):
    """Divide the affinity by both densities.

    The caller is expected to have validated the assumptions first (the
    densities must be strictly positive).
    """
    values = alpha.values
    dx = densities.data_density
    dy = densities.reference_density
    if values.shape != (dx.shape[0], dy.shape[0]):
        raise ValueError(f"affinity shape {values.shape} does not match densities "
                         f"({dx.shape[0]}, {dy.shape[0]})")
    # Kept in this exact form: the out-of-sample path rebuilds rows with
    # the same expression so re-extending training points is bit-identical.
    return NormalizedAffinity(values / (dx[:, None] * dy[None, :]))


def load_affinity_values(source, *, delimiter=",", skip_header=False):
    """Load a precomputed affinity grid leniently.

    Returns the raw (possibly invalid) array plus a content digest.
    Intended for validation tooling; use :func:`load_affinity` to get a
    checked AffinityMatrix.
    """
    text = _read_text(source)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    grid, _ = _parse_grid(text, delimiter=delimiter, skip_header=skip_header,
                          what="affinity", require_finite=False)
    return grid, digest


def load_affinity(source, *, delimiter=",", skip_header=False):
    """Load a precomputed affinity matrix (external provenance).

    Models fitted from such matrices cannot be extended to new points,
    since there is no way to evaluate the affinity there.
    """
    grid, digest = load_affinity_values(source, delimiter=delimiter, skip_header=skip_header)
    return AffinityMatrix(grid, Provenance("external", digest=digest))

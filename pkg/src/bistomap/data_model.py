"""Point clouds, point weights, and reference-set selection.

File conventions: UTF-8 text, one row per point, fields separated by a
single configurable delimiter (comma by default), plain decimal notation,
optionally one header line skipped via flag.  Weight files carry one
strictly positive number per line.  Floats are serialized with 17
significant digits so that a save/load round trip is bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IngestionError

__all__ = [
    "PointSet",
    "Measure",
    "ReferenceSet",
    "load_points",
    "save_points",
    "load_measure",
    "uniform_measure",
    "select_reference",
]

FLOAT_FORMAT = "%.17g"  # round-trips any IEEE 754 double exactly


def _freeze(values, dtype=np.float64):
    out = np.array(values, dtype=dtype, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class PointSet:
    """An ordered set of points in ``R^d``, stored as an (m, d) array.

    Coordinates must be finite; the array is copied and made read-only so
    instances can be shared freely across threads.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError(f"points must be a 2-D array, got shape {pts.shape}")
        m, d = pts.shape
        if m < 1 or d < 1:
            raise ValueError(f"need at least one point and one dimension, got shape ({m}, {d})")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite coordinates")
        object.__setattr__(self, "points", _freeze(pts))

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]


@dataclass(frozen=True, eq=False)
class Measure:
    """Strictly positive point masses for an m-point set.

    Weights are not required to sum to one; any positive measure is
    accepted and never rescaled.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError(f"weights must be a 1-D array, got shape {w.shape}")
        if w.size < 1:
            raise ValueError("need at least one weight")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights contain non-finite values")
        if np.any(w <= 0.0):
            bad = int(np.argmax(w <= 0.0))
            raise ValueError(f"weights must be strictly positive; weight {bad} is {w[bad]!r}")
        object.__setattr__(self, "weights", _freeze(w))

    def __len__(self):
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class ReferenceSet:
    """The reference points the affinity is computed against.

    ``source_indices`` records positions in the parent point set when the
    reference set was selected from it; it is ``None`` for externally
    supplied reference points.
    """

    points: np.ndarray
    source_indices: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError(f"reference points must be a 2-D array, got shape {pts.shape}")
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("reference set needs at least one point and one dimension")
        if not np.all(np.isfinite(pts)):
            raise ValueError("reference points contain non-finite coordinates")
        object.__setattr__(self, "points", _freeze(pts))
        if self.source_indices is not None:
            idx = np.asarray(self.source_indices, dtype=np.int64)
            if idx.shape != (pts.shape[0],):
                raise ValueError("source_indices must have one entry per reference point")
            object.__setattr__(self, "source_indices", _freeze(idx, dtype=np.int64))

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]


def _read_text(source):
    if isinstance(source, (str, Path)):
        try:
            return Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise IngestionError(f"cannot read {source}: {exc}") from exc
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data


def _parse_grid(text, *, delimiter=",", skip_header=False, what="data", require_finite=True):
    """Parse delimiter-separated numeric rows; returns (array, line numbers).

    Raises IngestionError (naming the 1-based physical line) on ragged
    rows, non-numeric fields, and on empty input; non-finite values are
    rejected too unless ``require_finite`` is off.  Blank lines carry no
    row.
    """
    rows = []
    linenos = []
    width = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if skip_header and lineno == 1:
            continue
        line = raw.strip()
        if not line:
            continue
        values = []
        for field in line.split(delimiter):
            field = field.strip()
            try:
                value = float(field)
            except ValueError:
                raise IngestionError(f"line {lineno}: non-numeric field {field!r}") from None
            if require_finite and not math.isfinite(value):
                raise IngestionError(f"line {lineno}: non-finite value {field!r}")
            values.append(value)
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise IngestionError(f"line {lineno}: expected {width} fields, got {len(values)}")
        rows.append(values)
        linenos.append(lineno)
    if not rows:
        raise IngestionError(f"empty input: no {what} rows found")
    return np.array(rows, dtype=np.float64), linenos


def load_points(source, *, delimiter=",", skip_header=False):
    """Load a point set from a delimiter-separated text file or stream.

    Parameters
    ----------
    source : path or file-like
        UTF-8 text with one point per row.
    delimiter : str
        Single field separator, comma by default.
    skip_header : bool
        Skip the first physical line.

    Returns
    -------
    PointSet

    Raises
    ------
    IngestionError
        On unreadable input, ragged rows, non-numeric or non-finite
        fields, or when no data rows remain; the message names the
        offending line.
    """
    grid, _ = _parse_grid(_read_text(source), delimiter=delimiter,
                          skip_header=skip_header, what="point")
    return PointSet(grid)


def save_points(points, destination, *, delimiter=","):
    """Write a PointSet as delimiter-separated text (17 significant digits)."""
    np.savetxt(destination, points.points, fmt=FLOAT_FORMAT, delimiter=delimiter)


def load_measure(source, *, skip_header=False):
    """Load point weights: one strictly positive number per line.

    Zero or negative weights are rejected here rather than repaired,
    since the downstream densities require strictly positive mass.
    """
    grid, linenos = _parse_grid(_read_text(source), delimiter=",",
                                skip_header=skip_header, what="weight")
    if grid.shape[1] != 1:
        raise IngestionError(f"line {linenos[0]}: expected one weight per line, got {grid.shape[1]} fields")
    weights = grid[:, 0]
    bad = np.nonzero(weights <= 0.0)[0]
    if bad.size:
        i = int(bad[0])
        raise IngestionError(f"line {linenos[i]}: weight must be strictly positive, got {weights[i]!r}")
    return Measure(weights)


def uniform_measure(m):
    """Uniform measure assigning mass 1/m to each of m points."""
    if m < 1:
        raise ValueError(f"need a positive point count, got {m}")
    return Measure(np.full(int(m), 1.0 / int(m)))


def _farthest_point_indices(points, size):
    # Greedy max-min selection seeded at index 0; squared distances give
    # the same ordering as Euclidean ones, and np.argmax breaks ties at
    # the lowest index.
    chosen = np.empty(size, dtype=np.int64)
    chosen[0] = 0
    min_sq = ((points - points[0]) ** 2).sum(axis=1)
    for k in range(1, size):
        j = int(np.argmax(min_sq))
        chosen[k] = j
        np.minimum(min_sq, ((points - points[j]) ** 2).sum(axis=1), out=min_sq)
    return chosen


def select_reference(points, strategy, size=None, seed=0):
    """Select the reference set from a point set.

    Parameters
    ----------
    points : PointSet
    strategy : {"all", "uniform", "fps"}
        "all" returns the full set in order.  "uniform" draws ``size``
        indices without replacement, deterministically in ``seed``.
        "fps" is farthest-point sampling: start at index 0, then greedily
        add the point maximizing the minimum distance to the chosen set,
        ties broken by lowest index.
    size : int, optional
        Required for "uniform" and "fps"; ignored for "all".
    seed : int
        Seed for the "uniform" draw.

    Returns
    -------
    ReferenceSet
        With ``source_indices`` into ``points``.
    """
    m = len(points)
    if strategy == "all":
        idx = np.arange(m, dtype=np.int64)
    elif strategy in ("uniform", "fps"):
        if size is None:
            raise ValueError(f"strategy {strategy!r} requires a reference size")
        size = int(size)
        if not 1 <= size <= m:
            raise ValueError(f"reference size must be between 1 and {m}, got {size}")
        if strategy == "uniform":
            rng = np.random.default_rng(seed)
            idx = np.sort(rng.choice(m, size=size, replace=False)).astype(np.int64)
        else:
            idx = _farthest_point_indices(points.points, size)
    else:
        raise ValueError(f"unknown reference strategy {strategy!r}; expected all, uniform or fps")
    return ReferenceSet(points.points[idx], source_indices=idx)

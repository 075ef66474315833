"""Text-based persistence for fitted spectral models.

A model directory holds a ``model.txt`` metadata file of key=value lines
plus delimiter-separated numeric files for the reference coordinates,
the reference density, the eigenvalues, and the eigenvector table.  All
floats use 17 significant digits, so a save/load round trip is exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .affinity import Provenance
from .data_model import FLOAT_FORMAT, ReferenceSet
from .errors import IngestionError
from .spectral import SpectralModel

__all__ = ["save_model", "load_model", "MODEL_FORMAT_VERSION"]

MODEL_FORMAT_VERSION = 1

_METADATA = "model.txt"
_REFERENCE_POINTS = "reference_points.csv"
_REFERENCE_DENSITY = "reference_density.csv"
_EIGENVALUES = "eigenvalues.csv"
_EIGENVECTORS = "eigenvectors.csv"

_CORE_KEYS = {"format_version", "m", "n", "d", "affinity", "epsilon", "digest", "cutoff"}


def save_model(model, directory, *, delimiter=",", extras=None):
    """Persist a spectral model into a directory.

    ``extras`` (a str-to-str mapping) is stored alongside the core
    metadata; the CLI records the embed-time coordinates settings there
    so ``extend`` can default to them.
    """
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)

    lines = [
        f"format_version={MODEL_FORMAT_VERSION}",
        f"m={model.n_samples}",
        f"n={model.n_references}",
    ]
    if model.n_features is not None:
        lines.append(f"d={model.n_features}")
    lines.append(f"affinity={model.provenance.builder}")
    if model.provenance.epsilon is not None:
        lines.append(f"epsilon={FLOAT_FORMAT % model.provenance.epsilon}")
    if model.provenance.digest is not None:
        lines.append(f"digest={model.provenance.digest}")
    lines.append(f"cutoff={FLOAT_FORMAT % model.cutoff}")
    for key, value in (extras or {}).items():
        if key in _CORE_KEYS:
            raise ValueError(f"extra metadata key {key!r} collides with a core key")
        lines.append(f"{key}={value}")
    (path / _METADATA).write_text("\n".join(lines) + "\n", encoding="utf-8")

    if model.reference is not None:
        np.savetxt(path / _REFERENCE_POINTS, model.reference.points,
                   fmt=FLOAT_FORMAT, delimiter=delimiter)
    np.savetxt(path / _REFERENCE_DENSITY, model.reference_density, fmt=FLOAT_FORMAT)
    np.savetxt(path / _EIGENVALUES, model.eigenvalues, fmt=FLOAT_FORMAT)
    np.savetxt(path / _EIGENVECTORS, model.eigenvectors,
               fmt=FLOAT_FORMAT, delimiter=delimiter)


def _load_array(path, *, delimiter=None, ndmin):
    if not path.exists():
        raise IngestionError(f"model directory is missing {path.name}")
    try:
        return np.loadtxt(path, delimiter=delimiter, ndmin=ndmin, dtype=np.float64)
    except ValueError as exc:
        raise IngestionError(f"cannot parse {path}: {exc}") from exc


def load_model(directory, *, delimiter=","):
    """Load a persisted spectral model.

    Returns
    -------
    (SpectralModel, dict)
        The model and any extra metadata entries (as strings).
    """
    path = Path(directory)
    meta_path = path / _METADATA
    if not meta_path.exists():
        raise IngestionError(f"{directory} is not a model directory ({_METADATA} missing)")

    meta = {}
    for lineno, raw in enumerate(meta_path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if "=" not in line:
            raise IngestionError(f"{meta_path}: line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()

    version = meta.get("format_version")
    if version != str(MODEL_FORMAT_VERSION):
        raise IngestionError(f"unsupported model format version {version!r} "
                             f"(this build reads version {MODEL_FORMAT_VERSION})")
    try:
        n_samples = int(meta["m"])
        n_references = int(meta["n"])
        builder = meta["affinity"]
        cutoff = float(meta["cutoff"])
    except KeyError as exc:
        raise IngestionError(f"model metadata is missing key {exc}") from exc
    except ValueError as exc:
        raise IngestionError(f"model metadata has a malformed value: {exc}") from exc

    epsilon = float(meta["epsilon"]) if "epsilon" in meta else None
    digest = meta.get("digest")
    provenance = Provenance(builder, epsilon=epsilon, digest=digest)

    density = _load_array(path / _REFERENCE_DENSITY, ndmin=1)
    eigenvalues = _load_array(path / _EIGENVALUES, ndmin=1)
    eigenvectors = _load_array(path / _EIGENVECTORS, delimiter=delimiter, ndmin=2)

    reference = None
    points_path = path / _REFERENCE_POINTS
    if points_path.exists():
        points = _load_array(points_path, delimiter=delimiter, ndmin=2)
        if points.shape[0] != n_references:
            raise IngestionError(f"{points_path} has {points.shape[0]} rows, expected "
                                 f"{n_references}")
        reference = ReferenceSet(points)

    if density.shape[0] != n_references or eigenvectors.shape != (n_references,
                                                                  eigenvalues.shape[0]):
        raise IngestionError("model files disagree with the metadata dimensions")

    try:
        model = SpectralModel(
            eigenvalues=eigenvalues,
            eigenvectors=eigenvectors,
            cutoff=cutoff,
            reference=reference,
            reference_density=density,
            provenance=provenance,
            n_samples=n_samples,
        )
    except ValueError as exc:
        raise IngestionError(f"persisted model is inconsistent: {exc}") from exc
    extras = {k: v for k, v in meta.items() if k not in _CORE_KEYS}
    return model, extras

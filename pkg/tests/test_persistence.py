import numpy as np
import pytest

import bistomap as bm
from bistomap.affinity import AffinityMatrix, Provenance
from bistomap.errors import IngestionError

from _cases import random_instance


class TestModelRoundTrip:
    def test_exact_roundtrip(self, tmp_path):
        inst = random_instance(101, m=60, n=9, d=3, uniform=False)
        bm.save_model(inst.model, tmp_path / "model",
                      extras={"embed_time": "1", "embed_components": "4"})
        loaded, extras = bm.load_model(tmp_path / "model")
        np.testing.assert_array_equal(loaded.eigenvalues, inst.model.eigenvalues)
        np.testing.assert_array_equal(loaded.eigenvectors, inst.model.eigenvectors)
        np.testing.assert_array_equal(loaded.reference_density,
                                      inst.model.reference_density)
        np.testing.assert_array_equal(loaded.reference.points,
                                      inst.model.reference.points)
        assert loaded.cutoff == inst.model.cutoff
        assert loaded.n_samples == inst.model.n_samples
        assert loaded.provenance.builder == "gaussian"
        assert loaded.provenance.epsilon == inst.model.provenance.epsilon
        assert extras == {"embed_time": "1", "embed_components": "4"}

    def test_extension_from_loaded_model_is_identical(self, tmp_path):
        inst = random_instance(102, m=50, n=8, d=3)
        bm.save_model(inst.model, tmp_path / "m")
        loaded, _ = bm.load_model(tmp_path / "m")
        rng = np.random.default_rng(5)
        new = bm.PointSet(rng.normal(size=(12, 3)))
        a = bm.extend_new_points(inst.model, new, time=2.0, n_components=3)
        b = bm.extend_new_points(loaded, new, time=2.0, n_components=3)
        np.testing.assert_array_equal(a.coordinates, b.coordinates)

    def test_rank_one_model_roundtrip(self, tmp_path):
        alpha = AffinityMatrix(np.ones((5, 3)), Provenance("external", digest="d0"))
        model, _ = bm.fit_from_affinity(alpha, bm.uniform_measure(5))
        assert model.n_retained == 1
        bm.save_model(model, tmp_path / "m")
        loaded, _ = bm.load_model(tmp_path / "m")
        np.testing.assert_array_equal(loaded.eigenvalues, model.eigenvalues)
        assert loaded.eigenvectors.shape == (3, 1)
        assert loaded.reference is None
        assert loaded.provenance.digest == "d0"

    def test_reference_file_listing(self, tmp_path):
        inst = random_instance(103, m=20, n=5, d=2)
        bm.save_model(inst.model, tmp_path / "m")
        names = sorted(p.name for p in (tmp_path / "m").iterdir())
        assert names == ["eigenvalues.csv", "eigenvectors.csv", "model.txt",
                         "reference_density.csv", "reference_points.csv"]


class TestLoadErrors:
    def test_missing_directory(self, tmp_path):
        with pytest.raises(IngestionError, match="model directory"):
            bm.load_model(tmp_path / "nope")

    def test_unknown_version(self, tmp_path):
        inst = random_instance(104, m=15, n=4, d=2)
        bm.save_model(inst.model, tmp_path / "m")
        meta = tmp_path / "m" / "model.txt"
        meta.write_text(meta.read_text().replace("format_version=1",
                                                 "format_version=99"))
        with pytest.raises(IngestionError, match="version"):
            bm.load_model(tmp_path / "m")

    def test_missing_component_file(self, tmp_path):
        inst = random_instance(105, m=15, n=4, d=2)
        bm.save_model(inst.model, tmp_path / "m")
        (tmp_path / "m" / "eigenvalues.csv").unlink()
        with pytest.raises(IngestionError, match="missing"):
            bm.load_model(tmp_path / "m")

    def test_inconsistent_dimensions(self, tmp_path):
        inst = random_instance(106, m=15, n=4, d=2)
        bm.save_model(inst.model, tmp_path / "m")
        np.savetxt(tmp_path / "m" / "reference_density.csv", np.ones(7), fmt="%.17g")
        with pytest.raises(IngestionError, match="disagree"):
            bm.load_model(tmp_path / "m")

    def test_extras_cannot_shadow_core_keys(self, tmp_path):
        inst = random_instance(107, m=15, n=4, d=2)
        with pytest.raises(ValueError, match="collides"):
            bm.save_model(inst.model, tmp_path / "m", extras={"cutoff": "zzz"})

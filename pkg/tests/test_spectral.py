import math

import numpy as np
import pytest

import bistomap as bm
from bistomap.affinity import AffinityMatrix, DensityPair, Provenance
from bistomap.errors import NumericalError

from _cases import random_instance, two_point_case
from _oracles import (
    assert_eigenvectors_match,
    dense_kernel_loop,
    dense_operator_eigensystem,
    dense_operator_matrix,
    gram_triple_sum,
    weighted_row_sums,
)


def _all_ones_pipeline(m, n):
    alpha = AffinityMatrix(np.ones((m, n)), Provenance("external", digest="x"))
    mu = bm.uniform_measure(m)
    densities, weighted = bm.compute_densities(alpha, mu)
    beta = bm.normalize_affinity(alpha, densities)
    return alpha, mu, densities, weighted, beta


def _two_point_pipeline():
    case = two_point_case()
    alpha = AffinityMatrix(case.affinity, Provenance("gaussian", epsilon=case.epsilon))
    mu = bm.Measure(case.weights)
    densities, weighted = bm.compute_densities(alpha, mu)
    beta = bm.normalize_affinity(alpha, densities)
    return case, alpha, densities, weighted, beta


class TestGram:
    def test_all_ones(self):
        m, n = 6, 4
        *_, weighted, beta = _all_ones_pipeline(m, n)
        A = bm.gram(beta, weighted)
        np.testing.assert_allclose(A.values, 1.0 / n, rtol=1e-15)
        lam = np.linalg.eigvalsh(A.values)
        np.testing.assert_allclose(lam[-1], 1.0, atol=1e-14)
        np.testing.assert_allclose(lam[:-1], 0.0, atol=1e-14)

    def test_two_point_closed_form(self):
        case, _, _, weighted, beta = _two_point_pipeline()
        A = bm.gram(beta, weighted)
        np.testing.assert_allclose(np.diag(A.values), case.gram_diag, rtol=0, atol=1e-12)
        np.testing.assert_allclose(A.values[0, 1], case.gram_off, rtol=0, atol=1e-12)
        lam = np.linalg.eigvalsh(A.values)[::-1]
        np.testing.assert_allclose(lam, [1.0, case.lambda2], rtol=0, atol=1e-12)

    def test_matches_triple_sum_oracle(self):
        inst = random_instance(13, m=50, n=8, d=3, uniform=False)
        expected = gram_triple_sum(inst.beta.values, inst.weighted.weights)
        expected = 0.5 * (expected + expected.T)
        np.testing.assert_allclose(inst.A.values, expected, rtol=0, atol=1e-13)

    def test_exactly_symmetric(self):
        inst = random_instance(3, m=40, n=7, d=2)
        assert np.array_equal(inst.A.values, inst.A.values.T)

    def test_dimension_mismatch(self):
        inst = random_instance(4, m=20, n=5, d=2)
        with pytest.raises(ValueError, match="rows"):
            bm.gram(inst.beta, bm.WeightedMeasure(np.ones(3)))


class TestEigendecompose:
    def test_all_ones_rank_one(self):
        m, n = 6, 4
        _, _, densities, weighted, beta = _all_ones_pipeline(m, n)
        A = bm.gram(beta, weighted)
        model = bm.eigendecompose(A, reference=None, densities=densities,
                                  provenance=Provenance("external", digest="x"),
                                  n_samples=m)
        assert model.n_retained == 1
        np.testing.assert_allclose(model.eigenvalues, [1.0], atol=1e-12)
        np.testing.assert_allclose(model.eigenvectors[:, 0], 1.0 / math.sqrt(n),
                                   rtol=1e-12)

    def test_two_point_eigenpairs(self):
        case, alpha, densities, weighted, beta = _two_point_pipeline()
        A = bm.gram(beta, weighted)
        model = bm.eigendecompose(A, reference=None, densities=densities,
                                  provenance=alpha.provenance, n_samples=2)
        np.testing.assert_allclose(model.eigenvalues, [1.0, case.lambda2],
                                   rtol=0, atol=1e-12)
        s = 1.0 / math.sqrt(2.0)
        np.testing.assert_allclose(model.eigenvectors[:, 0], [s, s], atol=1e-12)
        np.testing.assert_allclose(model.eigenvectors[:, 1], [s, -s], atol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_leading_eigenvector_parallel_to_reference_density(self, seed):
        inst = random_instance(seed, m=80, n=12, d=4, uniform=(seed % 2 == 0))
        unit = inst.densities.reference_density / np.linalg.norm(
            inst.densities.reference_density)
        v1 = inst.model.eigenvectors[:, 0]
        chord = np.linalg.norm(v1 - unit)
        angle = 2.0 * math.asin(min(1.0, 0.5 * chord))
        assert angle < 1e-8

    def test_not_psd_is_numerical_failure(self):
        A = bm.ReferenceGram(np.array([[0.0, 1.0], [1.0, 0.0]]))
        densities = DensityPair(np.ones(2), np.ones(2))
        with pytest.raises(NumericalError, match="not positive semidefinite"):
            bm.eigendecompose(A, reference=None, densities=densities,
                              provenance=Provenance("external", digest="x"),
                              n_samples=2)

    def test_lambda_max_warning(self):
        inst = random_instance(7, m=30, n=6, d=2)
        assert inst.model.lambda_max_warning is None
        scaled = bm.ReferenceGram(0.5 * inst.A.values)
        model = bm.eigendecompose(scaled, reference=inst.Y, densities=inst.densities,
                                  provenance=inst.alpha.provenance, n_samples=30)
        assert "deviates from 1" in model.lambda_max_warning

    def test_cutoff_controls_retention(self):
        inst = random_instance(8, m=60, n=10, d=3)
        lam = inst.model.eigenvalues
        cut = float(lam[3] / lam[0]) * 0.99
        model = bm.eigendecompose(inst.A, cutoff=cut, reference=inst.Y,
                                  densities=inst.densities,
                                  provenance=inst.alpha.provenance, n_samples=60)
        assert model.n_retained == 4
        with pytest.raises(ValueError, match="cutoff"):
            bm.eigendecompose(inst.A, cutoff=1.5, reference=inst.Y,
                              densities=inst.densities,
                              provenance=inst.alpha.provenance, n_samples=60)

    def test_sign_convention(self):
        inst = random_instance(9, m=40, n=8, d=3)
        V = inst.model.eigenvectors
        idx = np.argmax(np.abs(V), axis=0)
        assert np.all(V[idx, np.arange(V.shape[1])] > 0)


class TestEigenfunctionTransfer:
    def test_constant_eigenfunction_value(self):
        inst = random_instance(21, m=70, n=9, d=3, uniform=False)
        expected = 1.0 / np.linalg.norm(inst.densities.reference_density)
        np.testing.assert_allclose(inst.psi[:, 0], expected, rtol=1e-10)

    def test_all_ones_first_eigenfunction(self):
        m, n = 6, 4
        _, _, densities, weighted, beta = _all_ones_pipeline(m, n)
        A = bm.gram(beta, weighted)
        model = bm.eigendecompose(A, reference=None, densities=densities,
                                  provenance=Provenance("external", digest="x"),
                                  n_samples=m)
        psi = bm.extend_eigenfunctions(model, beta)
        np.testing.assert_allclose(psi[:, 0], 1.0 / n, rtol=1e-14)
        assert abs(float(psi[:, 0] ** 2 @ weighted.weights) - 1.0) <= 1e-14

    def test_matches_dense_operator_eigenfunctions(self):
        inst = random_instance(22, m=60, n=6, d=3)
        lam_dense, funcs = dense_operator_eigensystem(inst.beta.values,
                                                      inst.weighted.weights)
        r = inst.model.n_retained
        np.testing.assert_allclose(lam_dense[:r], inst.model.eigenvalues, rtol=1e-8)
        for k in range(3):  # well-separated leading eigenpairs
            f = funcs[:, k]
            sign = math.copysign(1.0, float(f @ (inst.weighted.weights * inst.psi[:, k])))
            np.testing.assert_allclose(inst.psi[:, k], sign * f, atol=1e-8)

    def test_restrict_extend_roundtrip(self):
        inst = random_instance(23, m=80, n=10, d=4, uniform=False)
        back = bm.restrict_eigenfunctions(inst.model, inst.psi, inst.beta, inst.weighted)
        np.testing.assert_allclose(back, inst.model.eigenvectors, rtol=0, atol=1e-8)

    def test_restrict_constant_gives_density(self):
        inst = random_instance(24, m=50, n=7, d=2)
        c = 0.37
        psi = np.full((50, inst.model.n_retained), c)
        restricted = bm.restrict_eigenfunctions(inst.model, psi, inst.beta,
                                                inst.weighted)
        # column 0 has eigenvalue 1, so the restriction integrates the
        # constant against the measure: c times the reference density.
        np.testing.assert_allclose(restricted[:, 0],
                                   c * inst.densities.reference_density, rtol=1e-12)

    def test_all_ones_restriction(self):
        m, n = 6, 4
        _, _, densities, weighted, beta = _all_ones_pipeline(m, n)
        A = bm.gram(beta, weighted)
        model = bm.eigendecompose(A, reference=None, densities=densities,
                                  provenance=Provenance("external", digest="x"),
                                  n_samples=m)
        psi = np.full((m, 1), 1.0 / n)
        restricted = bm.restrict_eigenfunctions(model, psi, beta, weighted)
        np.testing.assert_allclose(restricted[:, 0], 1.0 / math.sqrt(n), rtol=1e-14)

    def test_orthonormal_under_weighted_measure(self):
        inst = random_instance(25, m=90, n=12, d=3)
        G = inst.psi.T @ (inst.weighted.weights[:, None] * inst.psi)
        np.testing.assert_allclose(G, np.eye(inst.model.n_retained), rtol=0, atol=1e-8)


class TestApplyOperator:
    def test_constant_function_is_fixed(self):
        inst = random_instance(31, m=70, n=9, d=3, uniform=False)
        out = bm.apply_operator(inst.beta, inst.weighted, np.ones(70))
        assert np.max(np.abs(out - 1.0)) <= 1e-12

    def test_single_point_identity(self):
        alpha = AffinityMatrix([[2.0]], Provenance("external", digest="x"))
        densities, weighted = bm.compute_densities(alpha, bm.Measure([1.0]))
        beta = bm.normalize_affinity(alpha, densities)
        f = np.array([3.0])
        assert bm.apply_operator(beta, weighted, f)[0] == f[0]

    def test_matches_dense_kernel(self):
        inst = random_instance(32, m=60, n=10, d=3)
        rng = np.random.default_rng(0)
        f = rng.normal(size=60)
        dense = bm.materialize_kernel(inst.beta).values
        expected = dense @ (inst.weighted.weights * f)
        out = bm.apply_operator(inst.beta, inst.weighted, f)
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)

    def test_rejects_bad_input(self):
        inst = random_instance(33, m=20, n=5, d=2)
        with pytest.raises(ValueError, match="shape"):
            bm.apply_operator(inst.beta, inst.weighted, np.ones(7))
        with pytest.raises(ValueError, match="finite"):
            bm.apply_operator(inst.beta, inst.weighted, np.full(20, np.nan))


class TestMaterializeKernel:
    def test_all_ones(self):
        m, n = 6, 4
        *_, weighted, beta = _all_ones_pipeline(m, n)
        kernel = bm.materialize_kernel(beta)
        np.testing.assert_allclose(kernel.values, n ** (-2.0), rtol=1e-14)
        np.testing.assert_allclose(kernel.values @ weighted.weights, 1.0, rtol=1e-14)

    def test_single_point(self):
        alpha = AffinityMatrix([[2.0]], Provenance("external", digest="x"))
        densities, weighted = bm.compute_densities(alpha, bm.Measure([1.0]))
        beta = bm.normalize_affinity(alpha, densities)
        kernel = bm.materialize_kernel(beta)
        assert kernel.values[0, 0] * weighted.weights[0] == 1.0

    def test_two_point_closed_form(self):
        case, _, _, weighted, beta = _two_point_pipeline()
        kernel = bm.materialize_kernel(beta)
        np.testing.assert_allclose(np.diag(kernel.values), case.kernel_diag,
                                   rtol=0, atol=1e-15)
        np.testing.assert_allclose(kernel.values[0, 1], case.kernel_off,
                                   rtol=0, atol=1e-15)
        sums = weighted_row_sums(kernel.values, weighted.weights)
        np.testing.assert_allclose(sums, 1.0, rtol=0, atol=1e-15)

    def test_matches_loop_oracle(self):
        inst = random_instance(41, m=30, n=6, d=2)
        expected = dense_kernel_loop(inst.beta.values)
        np.testing.assert_allclose(bm.materialize_kernel(inst.beta).values,
                                   0.5 * (expected + expected.T), rtol=0, atol=1e-14)

    def test_size_guard(self):
        inst = random_instance(42, m=25, n=5, d=2)
        with pytest.raises(ValueError, match="refusing"):
            bm.materialize_kernel(inst.beta, max_m=10)
        kernel = bm.materialize_kernel(inst.beta, max_m=10, force=True)
        assert kernel.size == 25

    def test_symmetric_and_psd(self):
        inst = random_instance(43, m=40, n=8, d=3)
        p = bm.materialize_kernel(inst.beta).values
        assert np.array_equal(p, p.T)
        assert np.linalg.eigvalsh(p)[0] >= -1e-10
        assert np.all(p >= 0.0)


class TestBistochasticResidual:
    def test_pipeline_output_at_machine_precision(self):
        inst = random_instance(51, m=100, n=15, d=4, uniform=False)
        assert bm.bistochastic_residual(inst.beta, inst.weighted) <= 1e-12

    def test_all_ones_zero(self):
        *_, weighted, beta = _all_ones_pipeline(6, 4)
        assert bm.bistochastic_residual(beta, weighted) <= 1e-15

    def test_detector_fires_on_perturbation(self):
        inst = random_instance(52, m=40, n=8, d=3)
        values = inst.beta.values.copy()
        values[3, 2] += 1e-3
        perturbed = bm.NormalizedAffinity(values)
        # direct computation of the perturbed row sums
        direct = np.max(np.abs(values @ (values.T @ inst.weighted.weights) - 1.0))
        assert direct > 1e-4
        assert bm.bistochastic_residual(perturbed, inst.weighted) == pytest.approx(direct)

    def test_matches_dense_row_sums(self):
        inst = random_instance(53, m=30, n=6, d=2)
        p = bm.materialize_kernel(inst.beta).values
        dense_resid = np.max(np.abs(weighted_row_sums(p, inst.weighted.weights) - 1.0))
        factored = bm.bistochastic_residual(inst.beta, inst.weighted)
        assert abs(factored - dense_resid) <= 1e-13


class TestSpectralInvariants:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_spectrum_range_and_fixed_point(self, seed):
        inst = random_instance(seed, m=90, n=14, d=4, uniform=(seed % 2 == 0))
        raw = np.linalg.eigvalsh(inst.A.values)
        assert raw[0] >= -1e-10
        assert raw[-1] <= 1.0 + 1e-10
        assert abs(raw[-1] - 1.0) <= 1e-10
        dy = inst.densities.reference_density
        assert np.max(np.abs(inst.A.values @ dy - dy)) <= 1e-10
        assert np.all(inst.model.eigenvalues > 0.0)
        assert inst.model.eigenvalues[0] <= 1.0 + 1e-10

    @pytest.mark.parametrize("seed", [11, 12])
    def test_eigen_equivalence_with_dense_operator(self, seed):
        inst = random_instance(seed, m=80, n=8, d=3, uniform=False)
        M = dense_operator_matrix(inst.beta.values, inst.weighted.weights)
        lam_dense = np.linalg.eigvals(M)
        assert np.max(np.abs(lam_dense.imag)) < 1e-10
        lam_dense = np.sort(lam_dense.real)[::-1]
        lam_ref = np.sort(np.linalg.eigvalsh(inst.A.values))[::-1]
        threshold = 1e-8
        dense_sig = lam_dense[lam_dense > threshold]
        ref_sig = lam_ref[lam_ref > threshold]
        assert dense_sig.size == ref_sig.size  # multiplicities match
        np.testing.assert_allclose(dense_sig, ref_sig, rtol=1e-8)

    def test_scale_invariance_of_gram_and_spectrum(self):
        inst = random_instance(61, m=70, n=9, d=3)
        scaled_alpha = AffinityMatrix(3.0 * inst.alpha.values,
                                      Provenance("external", digest="x"))
        densities, weighted = bm.compute_densities(scaled_alpha, inst.mu)
        beta = bm.normalize_affinity(scaled_alpha, densities)
        A2 = bm.gram(beta, weighted)
        np.testing.assert_allclose(A2.values, inst.A.values, rtol=1e-12)
        model2 = bm.eigendecompose(A2, reference=inst.Y, densities=densities,
                                   provenance=scaled_alpha.provenance, n_samples=70)
        np.testing.assert_allclose(model2.eigenvalues, inst.model.eigenvalues,
                                   rtol=0, atol=1e-10)
        assert_eigenvectors_match(inst.model.eigenvalues,
                                  inst.model.eigenvectors, model2.eigenvectors,
                                  tol=1e-10, gap_tol=1e-8 * inst.model.eigenvalues[0])

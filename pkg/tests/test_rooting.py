import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridless_doa.errors import DomainError, EstimationError
from gridless_doa.geometry import (Scene, make_perturbed_nla, make_ula, noise_std_for_snr,
                                   noiseless_signal, steering_vector, synthesize_snapshot,
                                   wavelength_from_frequency)
from gridless_doa.manifold import accurate_truncation_order, sampling_matrix, vandermonde_matrix
from gridless_doa.rooting import (DoaEstimate, amplitudes_lsq, angles_from_roots,
                                  estimate_fnlanm, estimate_model_order, noise_subspace,
                                  root_polynomial, select_roots)
from gridless_doa.solvers import ApgConfig

LAM = wavelength_from_frequency(77.5e9)
APERTURE = 29.0e-3


def constructed_t(angles, powers, order):
    v = vandermonde_matrix(angles, order)
    return (v * np.asarray(powers)) @ v.conj().T


def f_on_circle(u, theta):
    order = (u.shape[0] - 1) // 2
    p = vandermonde_matrix(theta, order)
    return np.sum(np.abs(u.conj().T @ p) ** 2, axis=0)


class TestNoiseSubspace:
    def test_orthogonal_to_steering(self):
        th = [0.9, 2.1]
        t = constructed_t(th, [1.0, 0.4], 10)
        u = noise_subspace(t, 2)
        assert u.shape == (21, 19)
        assert np.abs(u.conj().T @ vandermonde_matrix(th, 10)).max() <= 1e-8
        np.testing.assert_allclose(u.conj().T @ u, np.eye(19), atol=1e-10)

    def test_single_noise_vector(self):
        t = constructed_t(np.linspace(0.3, 2.8, 6), np.ones(6), 3)
        assert noise_subspace(t, 6).shape == (7, 1)

    def test_domain(self):
        with pytest.raises(DomainError):
            noise_subspace(np.eye(5), 5)
        with pytest.raises(DomainError):
            noise_subspace(np.eye(5), 0)

    def test_degenerate_warning(self):
        with pytest.warns(UserWarning, match="degenerate"):
            noise_subspace(np.eye(5), 2)

    def test_eigenvalues_out(self):
        out = []
        noise_subspace(np.diag([1.0, 2.0, 3.0]), 1, out)
        assert out == [1.0, 2.0, 3.0]


class TestRootPolynomial:
    def test_single_target_root_on_circle(self):
        th = 1.1
        u = noise_subspace(constructed_t([th], [1.0], 8), 1)
        roots = root_polynomial(u)
        assert np.min(np.abs(roots - np.exp(1j * th))) <= 1e-8

    def test_degree(self):
        u = noise_subspace(constructed_t([0.7, 1.9], [1.0, 2.0], 6), 2)
        assert root_polynomial(u).size == 2 * (13 - 1)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_conjugate_reciprocal_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        th = np.sort(rng.uniform(0.2, 2.9, 2))
        t = constructed_t(th, [1.0, 0.5], 6)
        t += 0.01 * np.eye(13)
        roots = root_polynomial(noise_subspace(t, 2))
        roots = roots[np.abs(roots) > 1e-8]
        mirrored = 1 / np.conj(roots)
        for r in mirrored:
            assert np.min(np.abs(roots - r) / max(1.0, abs(r))) <= 1e-8

    def test_real_path_matches_companion(self):
        # real T takes the Chebyshev path; the oracle roots the full Laurent
        # polynomial sum_k conv(u_k, conj(u_k[::-1])) with np.roots
        t = constructed_t([1.0, 2.2], [1.0, 0.5], 5)
        t = (t + t.conj()) / 2
        u = noise_subspace(t, 2)
        w = sum(np.convolve(u[:, k], np.conj(u[::-1, k])) for k in range(u.shape[1]))
        oracle = np.roots(w)
        ours = root_polynomial(u)
        assert ours.size == oracle.size
        for r in ours[np.abs(ours) < 1e3]:
            assert np.min(np.abs(oracle - r)) <= 1e-6 * max(1.0, abs(r))

    def test_empty_subspace(self):
        with pytest.raises(EstimationError):
            root_polynomial(np.zeros((5, 2)))


class TestSelectRoots:
    def test_prefers_circle(self):
        roots = np.array([0.5 * np.exp(0.3j), np.exp(1.2j), 0.9 * np.exp(2.0j), np.exp(2.5j)])
        np.testing.assert_allclose(np.sort(np.angle(select_roots(roots, 2))), [1.2, 2.5])

    def test_with_reflections(self):
        th, ph = 1.0, 2.0
        base = np.array([0.99 * np.exp(1j * th), 0.5 * np.exp(1j * ph)])
        roots = np.concatenate([base, 1 / base.conj()])
        out = select_roots(roots, 1)
        assert out[0] == pytest.approx(0.99 * np.exp(1j * th))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        roots = rng.uniform(0.5, 1.0, 12) * np.exp(1j * rng.uniform(-np.pi, np.pi, 12))
        a = select_roots(roots, 3)
        b = select_roots(rng.permutation(roots), 3)
        np.testing.assert_array_equal(a, b)

    def test_deficit(self):
        with pytest.raises(EstimationError, match="1 of 2"):
            select_roots(np.array([np.exp(1j), np.exp(-1j), 2.0]), 2)


class TestAngles:
    def test_abs_mapping(self):
        np.testing.assert_allclose(angles_from_roots([np.exp(1j)]), [1.0])
        np.testing.assert_allclose(angles_from_roots([np.exp(-1j)]), [1.0])
        np.testing.assert_allclose(angles_from_roots([np.exp(2j), np.exp(-0.5j)]), [0.5, 2.0])

    def test_boundary_warning(self):
        notes = []
        with pytest.warns(UserWarning, match="boundary"):
            angles_from_roots([1.0, np.exp(1j)], notes)
        assert notes

    def test_ula_parameterizations_agree(self):
        # half-wavelength ULA: root-MUSIC on the physical array gives
        # cos(theta) = angle(z) / pi; manifold separation gives theta = |angle(z)|
        g = make_ula(8, LAM / 2, LAM)
        th = 1.234
        a = steering_vector(g, th)
        u = noise_subspace(np.outer(a, a.conj()), 1)
        z = select_roots(root_polynomial(u), 1)[0]
        physical = math.acos(np.angle(z) / math.pi)
        virtual = estimate_fnlanm(a, g, 1).angles[0]
        assert physical == pytest.approx(th, abs=1e-8)
        assert virtual == pytest.approx(physical, abs=1e-6)


class TestAmplitudes:
    def setup_method(self):
        self.g = make_perturbed_nla(16, APERTURE, 0.3, LAM, seed=51)
        self.s = sampling_matrix(self.g, accurate_truncation_order(self.g))

    def test_single_exact(self):
        x = synthesize_snapshot(self.g, Scene.from_arrays([1.1], [2 + 1j]))
        c, res, _ = amplitudes_lsq(x, self.s, [1.1])
        assert c[0] == pytest.approx(2 + 1j, abs=1e-8)
        assert res <= 1e-7

    def test_two_exact(self):
        x = synthesize_snapshot(self.g, Scene.from_arrays([0.7, 2.0], [1j, -0.5]))
        c, _, _ = amplitudes_lsq(x, self.s, [0.7, 2.0])
        np.testing.assert_allclose(c, [1j, -0.5], atol=1e-8)

    def test_residual_orthogonal(self):
        x = synthesize_snapshot(self.g, Scene.from_arrays([0.7, 2.0], snr_db=5), seed=2)
        c, _, _ = amplitudes_lsq(x, self.s, [0.72, 1.98])
        b = self.s.response([0.72, 1.98])
        assert np.abs(b.conj().T @ (x - b @ c)).max() <= 1e-8

    def test_monte_carlo_matches_lsq_covariance(self):
        th, c0 = [1.1], np.array([1.0 + 0.5j])
        scene = Scene.from_arrays(th, c0, snr_db=20)
        sigma = noise_std_for_snr(noiseless_signal(self.g, scene), 20)
        b = self.s.response(th)
        var = sigma ** 2 / np.real(b.conj().T @ b)[0, 0]
        # |c_hat - c| is Rayleigh with E = sqrt(pi var / 4), Var = (4 - pi) var / 4
        mean_pred = math.sqrt(math.pi * var / 4)
        se = math.sqrt((4 - math.pi) * var / 4 / 500)
        errs = [abs(amplitudes_lsq(synthesize_snapshot(self.g, scene, seed=i), self.s, th)[0][0] - c0[0])
                for i in range(500)]
        assert abs(np.mean(errs) - mean_pred) <= 3 * se

    def test_ill_conditioned_warning(self):
        x = synthesize_snapshot(self.g, Scene.from_arrays([1.1]))
        with pytest.warns(UserWarning, match="ill-conditioned"):
            amplitudes_lsq(x, self.s, [1.1, 1.1 + 1e-9])


class TestRoundTrip:
    @pytest.mark.parametrize("angles", [[1.3], [0.6, 2.2], [0.5, 1.4, 2.6]])
    def test_exact_recovery_with_scan_oracle(self, angles):
        order = 12
        t = constructed_t(angles, np.linspace(1.0, 0.5, len(angles)), order)
        u = noise_subspace(t, len(angles))
        est = angles_from_roots(select_roots(root_polynomial(u), len(angles)))
        np.testing.assert_allclose(est, angles, atol=1e-8)
        grid = np.linspace(0, math.pi, 1_000_001)
        f = f_on_circle(u, grid)
        minima = np.nonzero((f[1:-1] < f[:-2]) & (f[1:-1] < f[2:]))[0] + 1
        best = np.sort(grid[minima[np.argsort(f[minima])[:len(angles)]]])
        np.testing.assert_allclose(best, est, atol=grid[1])


@pytest.fixture(scope="module")
def table2_nla():
    return make_perturbed_nla(16, APERTURE, 0.3, LAM, seed=61)


class TestEstimateFnlanm:
    def test_noiseless_single(self, table2_nla):
        th = 1.4
        est = estimate_fnlanm(synthesize_snapshot(table2_nla, Scene.from_arrays([th])), table2_nla, 1)
        assert abs(est.angles[0] - th) <= 1e-4
        assert est.amplitudes[0] == pytest.approx(1.0, abs=1e-4)

    def test_noiseless_two(self, table2_nla):
        th = np.array([1.0, 1.9])
        x = synthesize_snapshot(table2_nla, Scene.from_arrays(th, [1.0, 0.6j]))
        est = estimate_fnlanm(x, table2_nla, 2)
        np.testing.assert_allclose(est.angles, th, atol=1e-4)
        np.testing.assert_allclose(est.amplitudes, [1.0, 0.6j], atol=1e-3)

    def test_diagnostics_and_record(self, table2_nla):
        x = synthesize_snapshot(table2_nla, Scene.from_arrays([1.4], snr_db=20), seed=1)
        est = estimate_fnlanm(x, table2_nla, 1)
        d = est.diagnostics
        assert d["truncation_order"] == accurate_truncation_order(table2_nla)
        assert d["apg_converged"] and d["apg_iterations"] >= 1
        rec = json.loads(json.dumps(est.to_record(), allow_nan=False))
        assert rec["k"] == 1 and len(rec["angles_deg"]) == 1

    def test_homogeneous(self, table2_nla):
        x = synthesize_snapshot(table2_nla, Scene.from_arrays([1.0, 1.8], snr_db=20), seed=3)
        sigma = 0.1
        a = estimate_fnlanm(x, table2_nla, 2, ApgConfig(noise_std=sigma))
        for s in (0.01, 7.0):
            b = estimate_fnlanm(s * x, table2_nla, 2, ApgConfig(noise_std=s * sigma))
            np.testing.assert_allclose(b.angles, a.angles, atol=1e-8)
            np.testing.assert_allclose(b.amplitudes, s * a.amplitudes, rtol=1e-6, atol=1e-8 * s)

    def test_target_order_invariant(self, table2_nla):
        a = Scene.from_arrays([1.0, 1.8], [1.0, 0.5j], snr_db=20)
        b = Scene.from_arrays([1.8, 1.0], [0.5j, 1.0], snr_db=20)
        xa = synthesize_snapshot(table2_nla, a, seed=9)
        xb = synthesize_snapshot(table2_nla, b, seed=9)
        np.testing.assert_allclose(xa, xb, atol=1e-14)
        np.testing.assert_allclose(estimate_fnlanm(xa, table2_nla, 2).angles,
                                   estimate_fnlanm(xb, table2_nla, 2).angles, atol=1e-9)

    def test_ula_self_consistent(self):
        g = make_ula(16, LAM / 2, LAM)
        x = synthesize_snapshot(g, Scene.from_arrays([1.2, 1.6], snr_db=25), seed=1)
        s = sampling_matrix(g, accurate_truncation_order(g))
        np.testing.assert_allclose(estimate_fnlanm(x, g, 2).angles,
                                   estimate_fnlanm(x, None, 2, sampling=s).angles, atol=1e-6)

    def test_off_grid_unbiased(self, table2_nla):
        th = 1.3 + 0.01
        errs = [estimate_fnlanm(synthesize_snapshot(table2_nla, Scene.from_arrays([th], snr_db=20),
                                                    seed=i), table2_nla, 1).angles[0] - th
                for i in range(40)]
        assert abs(np.mean(errs)) <= 3 * np.std(errs) / math.sqrt(40)

    def test_errors(self, table2_nla):
        with pytest.raises(DomainError):
            estimate_fnlanm(np.ones(16), table2_nla, 0)
        with pytest.raises(DomainError):
            estimate_fnlanm(np.ones(5), table2_nla, 1)
        with pytest.raises(DomainError):
            estimate_fnlanm(np.ones(16), None, 1)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_stage_tag(self, table2_nla):
        x = synthesize_snapshot(table2_nla, Scene.from_arrays([1.4]))
        with pytest.raises(EstimationError) as info:
            estimate_fnlanm(x, table2_nla, 1, ApgConfig(max_iterations=1, step_size=1e300))
        assert info.value.stage in ("apg", "rooting", "select_roots", "refine")

    def test_model_order_guess(self, table2_nla):
        x = synthesize_snapshot(table2_nla, Scene.from_arrays([0.8, 2.0], snr_db=30), seed=0)
        est = estimate_fnlanm(x, table2_nla, 2)
        t = constructed_t(est.angles, np.abs(est.amplitudes), 10)
        assert estimate_model_order(t, 4, mirror=False) == 2

    def test_record_type(self):
        est = DoaEstimate(np.array([1.0]), np.array([1j]), float("nan"), {"x": np.float64(2)})
        rec = est.to_record()
        assert rec["residual"] is None and rec["diagnostics"]["x"] == 2.0
        assert rec["amplitudes"] == [[0.0, 1.0]]

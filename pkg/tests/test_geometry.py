import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridless_doa.errors import ConstructionError, DomainError, ParseError
from gridless_doa.geometry import (ArrayGeometry, Scene, Target, combine_channels, equivalent_ula,
                                   load_geometry, make_perturbed_nla, make_ula, mimo_virtual_array,
                                   mimo_virtual_positions, noiseless_signal, save_geometry,
                                   steering_matrix, steering_vector, synthesize_snapshot,
                                   wavelength_from_frequency)
from gridless_doa.io import read_complex_column, read_complex_matrix, write_complex_column, \
    write_complex_matrix
from gridless_doa.metrics import location_deviation

LAM = wavelength_from_frequency(77.5e9)
APERTURE = 29.0e-3


def test_wavelength_at_77_5_ghz():
    assert LAM == pytest.approx(299792458.0 / 77.5e9, rel=1e-15)
    assert LAM == pytest.approx(3.868e-3, abs=1e-6)


class TestArrayGeometry:
    def test_valid(self):
        g = ArrayGeometry([0.0, 1e-3, 3e-3], LAM)
        assert g.n_elements == 3
        assert g.aperture == 3e-3
        np.testing.assert_allclose(g.electrical_positions, 2 * np.pi * g.positions / LAM)

    @pytest.mark.parametrize("positions", [[1e-3, 2e-3], [0.0, 2e-3, 1e-3], [0.0, 0.0, 1e-3],
                                           [0.0, np.inf], [0.0, np.nan]])
    def test_rejects_bad_positions(self, positions):
        with pytest.raises(DomainError):
            ArrayGeometry(positions, LAM)

    @pytest.mark.parametrize("wavelength", [0.0, -1.0, np.inf])
    def test_rejects_bad_wavelength(self, wavelength):
        with pytest.raises(DomainError):
            ArrayGeometry([0.0, 1e-3], wavelength)

    def test_equality_and_hash(self):
        a = ArrayGeometry([0.0, 1e-3], LAM)
        b = ArrayGeometry(np.array([0.0, 1e-3]), LAM)
        assert a == b and hash(a) == hash(b)
        assert a != ArrayGeometry([0.0, 2e-3], LAM)

    def test_positions_are_read_only(self):
        g = ArrayGeometry([0.0, 1e-3], LAM)
        with pytest.raises(ValueError):
            g.positions[1] = 5.0


class TestScene:
    def test_from_arrays(self):
        s = Scene.from_arrays([1.0, 2.0], [1 + 1j, 2.0], snr_db=10)
        assert s.k == 2
        np.testing.assert_array_equal(s.angles, [1.0, 2.0])
        np.testing.assert_array_equal(s.reflectivities, [1 + 1j, 2.0])

    def test_default_reflectivities(self):
        np.testing.assert_array_equal(Scene.from_arrays([1.0]).reflectivities, [1.0])

    @pytest.mark.parametrize("angles", [[0.0], [math.pi], [1.0, 1.0], []])
    def test_invalid(self, angles):
        with pytest.raises(DomainError):
            Scene.from_arrays(angles)

    def test_targets(self):
        s = Scene((Target(2j, 0.5),))
        assert s.reflectivities[0] == 2j


class TestSteering:
    def test_broadside_all_ones(self):
        g = make_perturbed_nla(16, APERTURE, 0.3, LAM, seed=1)
        np.testing.assert_allclose(steering_vector(g, math.pi / 2), np.ones(16), atol=1e-15)

    def test_two_element_half_wavelength(self):
        g = ArrayGeometry([0.0, LAM / 2], LAM)
        np.testing.assert_allclose(steering_vector(g, math.pi / 3), [1, 1j], atol=1e-15)

    def test_matches_elementwise_oracle(self):
        g = make_perturbed_nla(16, APERTURE, 0.3, LAM, seed=7)
        th = np.random.default_rng(7).uniform(0.1, 3.0)
        oracle = [complex(math.cos(2 * math.pi * r / LAM * math.cos(th)),
                          math.sin(2 * math.pi * r / LAM * math.cos(th))) for r in g.positions]
        np.testing.assert_allclose(steering_vector(g, th), oracle, atol=1e-12, rtol=0)

    @pytest.mark.parametrize("angle", [0.0, math.pi, -0.1, 4.0, np.nan])
    def test_domain(self, angle):
        g = make_ula(4, LAM / 2, LAM)
        with pytest.raises(DomainError):
            steering_vector(g, angle)

    def test_matrix_accepts_closed_interval(self):
        g = make_ula(4, LAM / 2, LAM)
        a = steering_matrix(g, [0.0, math.pi])
        np.testing.assert_allclose(a[:, 0], np.exp(1j * np.pi * np.arange(4)))
        with pytest.raises(DomainError):
            steering_matrix(g, [3.5])

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.01, math.pi - 0.01), st.integers(0, 10_000))
    def test_unit_modulus(self, th, seed):
        g = make_perturbed_nla(8, APERTURE, 0.2, LAM, seed=seed)
        a = steering_vector(g, th)
        assert np.vdot(a, a).real == pytest.approx(8.0, rel=1e-12)
        assert a[0] == 1.0

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.05, math.pi - 0.05), st.floats(1e-9, 1e-6))
    def test_lipschitz(self, th, eps):
        g = make_perturbed_nla(16, APERTURE, 0.3, LAM, seed=0)
        diff = np.abs(steering_vector(g, th) - steering_vector(g, th + eps)).max()
        assert diff <= 2 * np.pi * g.aperture / LAM * eps * (1 + 1e-6)


class TestSnapshot:
    def setup_method(self):
        self.g = make_perturbed_nla(16, APERTURE, 0.3, LAM, seed=3)

    def test_noiseless_single(self):
        x = synthesize_snapshot(self.g, Scene.from_arrays([1.1]), seed=0)
        np.testing.assert_array_equal(x, steering_vector(self.g, 1.1))

    def test_noiseless_linearity(self):
        x = synthesize_snapshot(self.g, Scene.from_arrays([1.1, 2.0], [2 - 1j, 0.5j]))
        ref = (2 - 1j) * steering_vector(self.g, 1.1) + 0.5j * steering_vector(self.g, 2.0)
        np.testing.assert_allclose(x, ref, atol=1e-14)

    def test_empirical_snr(self):
        scene = Scene.from_arrays([1.3], snr_db=30.0)
        s = noiseless_signal(self.g, scene)
        noise = np.array([synthesize_snapshot(self.g, scene, seed=i) - s for i in range(1000)])
        snr = 10 * np.log10(np.vdot(s, s).real / np.mean(np.sum(np.abs(noise) ** 2, axis=1)))
        assert abs(snr - 30.0) <= 0.5

    def test_reproducible(self):
        scene = Scene.from_arrays([1.3, 1.7], snr_db=5.0)
        a = synthesize_snapshot(self.g, scene, seed=42)
        b = synthesize_snapshot(self.g, scene, seed=42)
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, synthesize_snapshot(self.g, scene, seed=43))


class TestArrays:
    def test_ula(self):
        g = make_ula(16, LAM / 2, LAM)
        assert g.aperture == pytest.approx(7.5 * LAM, rel=1e-15)
        np.testing.assert_array_equal(make_ula(2, 1e-3, LAM).positions, [0.0, 1e-3])
        assert location_deviation(g, g) == 0.0

    @pytest.mark.parametrize("n,d", [(1, 1e-3), (4, 0.0), (4, -1e-3)])
    def test_ula_domain(self, n, d):
        with pytest.raises(DomainError):
            make_ula(n, d, LAM)

    def test_zero_ld_is_ula(self):
        g = make_perturbed_nla(16, APERTURE, 0.0, LAM, seed=1)
        assert g == make_ula(16, APERTURE / 15, LAM)

    def test_target_ld_reached(self):
        g = make_perturbed_nla(16, APERTURE, 0.3, LAM, seed=11)
        assert g.positions[0] == 0.0 and g.positions[-1] == pytest.approx(APERTURE, abs=1e-18)
        assert location_deviation(g, equivalent_ula(g)) == pytest.approx(0.3, abs=1e-6)

    def test_many_seeds_monotone(self):
        for seed in range(1000):
            g = make_perturbed_nla(16, APERTURE, 0.3, LAM, seed=seed)
            assert np.all(np.diff(g.positions) > 0)

    def test_deterministic(self):
        assert make_perturbed_nla(16, APERTURE, 0.3, LAM, seed=5) == \
            make_perturbed_nla(16, APERTURE, 0.3, LAM, seed=5)

    def test_infeasible(self):
        with pytest.raises(ConstructionError):
            make_perturbed_nla(16, APERTURE, 5.0, LAM, seed=0, max_resamples=50)
        with pytest.raises(ConstructionError):
            make_perturbed_nla(2, APERTURE, 0.3, LAM, seed=0)


class TestMimo:
    def test_radar1_virtual_positions(self):
        tx = np.array([0.0, 5.7, 11.4]) * 1e-3
        rx = np.array([0.0, 3.8, 7.6, 11.4]) * 1e-3
        pos, cmap = mimo_virtual_positions(tx, rx)
        # 12 channels, one coincidence: 0 + 11.4 == 11.4 + 0
        assert cmap.size == 12 and pos.size == 11
        assert pos[-1] == pytest.approx(22.8e-3)
        assert cmap[3] == cmap[8]

    def test_combine_channels_averages_duplicates(self):
        out = combine_channels([1, 2, 3, 5], [0, 1, 1, 2])
        np.testing.assert_allclose(out, [1, 2.5, 5])

    def test_virtual_array_responds_like_mimo(self):
        tx = np.array([0.0, 5.7, 11.4]) * 1e-3
        rx = np.array([0.0, 3.8, 7.6, 11.4]) * 1e-3
        g = mimo_virtual_array(tx, rx, LAM)
        th = 1.2
        chan = np.exp(1j * 2 * np.pi / LAM * np.cos(th) * (tx[:, None] + rx[None, :])).ravel()
        _, cmap = mimo_virtual_positions(tx, rx)
        np.testing.assert_allclose(combine_channels(chan, cmap), steering_vector(g, th), atol=1e-12)


class TestFiles:
    def test_geometry_roundtrip(self, tmp_path):
        g = make_perturbed_nla(16, APERTURE, 0.3, LAM, seed=2)
        save_geometry(tmp_path / "g.txt", g)
        assert load_geometry(tmp_path / "g.txt", LAM) == g

    def test_complex_roundtrip(self, tmp_path):
        x = np.random.default_rng(0).standard_normal(7) + 1j
        write_complex_column(tmp_path / "x.txt", x, header="snapshot")
        np.testing.assert_array_equal(read_complex_column(tmp_path / "x.txt"), x)
        m = x.reshape(7, 1) * x.reshape(1, 7)
        write_complex_matrix(tmp_path / "m.txt", m[:, :5])
        np.testing.assert_array_equal(read_complex_matrix(tmp_path / "m.txt"), m[:, :5])

    def test_parse_error_has_line_number(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("# header\n1.0 2.0\n\n3.0 oops\n")
        with pytest.raises(ParseError, match=":4"):
            read_complex_column(p)

    def test_parse_error_on_field_count(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("1.0 2.0 3.0\n")
        with pytest.raises(ParseError, match=":1"):
            read_complex_column(p)

    def test_matrix_size_mismatch(self, tmp_path):
        p = tmp_path / "m.txt"
        p.write_text("2 3\n1 0 1 0 1 0\n")
        with pytest.raises(ParseError):
            read_complex_matrix(p)

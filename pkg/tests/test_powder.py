import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulsedesr.constants import MU_B_OVER_H
from pulsedesr.fitting import fit_gaussian_line
from pulsedesr.powder import (
    OrientationGrid,
    Spectrum,
    echo_detected_spectrum,
    eigvalsh_batched,
    make_grid,
    resonance_fields,
)
from pulsedesr.spin import Orientation, SpinSystem

SIGMA = 0.01 / 2.355


@pytest.fixture(scope="module")
def cr7mn_small():
    axis = np.linspace(0.0, 1.2, 601)
    return echo_detected_spectrum(SpinSystem(1, g=2.0, D=21.0, E=1.9), make_grid(30, "spiral"),
                                  9.7, axis, SIGMA)


class TestGrids:
    def test_smallest_product_grid(self):
        g = make_grid(2, "product")
        assert len(g) == 4
        assert g.weights.sum() == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("scheme", ["product", "spiral"])
    @pytest.mark.parametrize("n", [2, 7, 50, 100])
    def test_normalization(self, scheme, n):
        g = make_grid(n, scheme)
        assert len(g) == n * n
        assert abs(g.integrate(lambda t, p: np.ones_like(t)) - 1.0) < 1e-12
        assert np.all(g.weights > 0)

    def test_second_legendre_moment_product(self):
        g = make_grid(50, "product")
        assert abs(g.integrate(lambda t, p: (3 * np.cos(t) ** 2 - 1) / 2)) < 1e-6

    def test_second_legendre_moment_spiral(self):
        g = make_grid(50, "spiral")
        assert abs(g.integrate(lambda t, p: (3 * np.cos(t) ** 2 - 1) / 2)) < 1e-6

    @pytest.mark.parametrize("scheme", ["product", "spiral"])
    def test_first_moment_vanishes(self, scheme):
        g = make_grid(20, scheme)
        assert abs(g.integrate(lambda t, p: np.cos(t))) < 1e-12
        assert np.abs(g.weights @ g.vectors).max() < 1e-3

    def test_deterministic(self):
        a, b = make_grid(40, "spiral"), make_grid(40, "spiral")
        assert np.array_equal(a.theta, b.theta) and np.array_equal(a.phi, b.phi)

    def test_errors(self):
        with pytest.raises(ValueError):
            make_grid(1)
        with pytest.raises(ValueError):
            make_grid(10, "zcw")
        with pytest.raises(ValueError):
            OrientationGrid(np.zeros(2), np.zeros(2), np.array([0.5, 0.6]))


class TestBatchedEigenvalues:
    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_matches_lapack(self, d):
        rng = np.random.default_rng(d)
        A = rng.normal(size=(200, d, d)) + 1j * rng.normal(size=(200, d, d))
        H = A + np.conj(np.swapaxes(A, -1, -2))
        np.testing.assert_allclose(eigvalsh_batched(H), np.linalg.eigvalsh(H), atol=1e-10)

    def test_degenerate_three_level(self):
        H = np.diag([21.0, 21.0, 0.0])[None].astype(complex)
        np.testing.assert_allclose(eigvalsh_batched(H)[0], [0, 21, 21], atol=1e-12)


class TestResonanceFields:
    def test_spin_half(self):
        (r,) = resonance_fields(SpinSystem(0.5, g=2.0), Orientation(0.4, 0.1), 9.7, (0.0, 0.6))
        assert r.field == pytest.approx(9.7 / (2 * MU_B_OVER_H), abs=2e-7)
        assert r.field == pytest.approx(0.34652, abs=1e-5)

    def test_axial_level_crossing(self):
        sys = SpinSystem(1, g=1.9, D=21.0, E=0.0)
        res = resonance_fields(sys, Orientation(0.0), 9.7, (0.0, 1.0))
        allowed = [r for r in res if r.intensity > 1e-6]
        assert len(allowed) == 1
        assert allowed[0].field == pytest.approx(11.3 / (1.9 * MU_B_OVER_H), abs=2e-7)
        assert allowed[0].field == pytest.approx(0.4249, abs=1e-4)

    def test_root_count_axial(self):
        # gap D - gB and the double-quantum gap 2gB each cross 9.7 GHz once below 1 T
        sys = SpinSystem(1, g=1.9, D=21.0, E=0.0)
        res = resonance_fields(sys, Orientation(0.0), 9.7, (0.0, 1.0))
        fields = sorted(r.field for r in res)
        gb = 1.9 * MU_B_OVER_H
        np.testing.assert_allclose(fields, [9.7 / (2 * gb), 11.3 / gb], atol=2e-7)

    def test_empty(self):
        sys = SpinSystem(1, D=21.0)
        assert resonance_fields(sys, Orientation(0.0), 30.0, (0.0, 0.01)) == []

    @given(st.floats(0, np.pi), st.floats(0, 2 * np.pi, exclude_max=True))
    @settings(max_examples=30, deadline=None)
    def test_spin_half_always_one_root(self, th, ph):
        res = resonance_fields(SpinSystem(0.5, g=2.0), Orientation(th, ph), 9.7, (0.0, 1.0))
        assert len(res) == 1

    def test_cr7mn_principal_axes(self):
        sys = SpinSystem(1, g=2.0, D=21.0, E=1.9)
        z = [r.field for r in resonance_fields(sys, Orientation(0.0), 9.7, (0.0, 1.2)) if r.intensity > 1e-6]
        np.testing.assert_allclose(z, [0.3979, 1.0946], atol=1e-4)

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            resonance_fields(SpinSystem(0.5), Orientation(0.0), 9.7, (-0.1, 1.0))
        with pytest.raises(ValueError):
            resonance_fields(SpinSystem(0.5), Orientation(0.0), 0.0, (0.0, 1.0))


class TestEchoDetectedSpectrum:
    def test_cr7ni_gaussian_line(self):
        axis = np.linspace(0.30, 0.40, 1001)
        spec = echo_detected_spectrum(SpinSystem(0.5, g=2.0), make_grid(10, "spiral"), 9.7, axis, SIGMA)
        res = fit_gaussian_line(spec)
        assert res.params["fwhm"] == pytest.approx(0.01, rel=2e-3)
        assert res.params["center"] == pytest.approx(9.7 / (2 * MU_B_OVER_H), abs=1e-6)

    def test_normalized_peak(self, cr7mn_small):
        assert cr7mn_small.amplitude.max() == 1.0
        assert np.all(cr7mn_small.amplitude >= 0)

    def test_cr7mn_broad_and_structured(self, cr7mn_small):
        B, A = cr7mn_small.field_axis, cr7mn_small.amplitude
        support = B[A > 0.05]
        assert support.max() - support.min() > 0.3
        from scipy.signal import find_peaks

        peaks, _ = find_peaks(A, prominence=0.05)
        assert len(peaks) >= 2

    def test_isotropic_limit(self):
        sys = SpinSystem(1, g=2.0)
        axis = np.linspace(0.2, 0.5, 301)
        powder = echo_detected_spectrum(sys, make_grid(12, "spiral"), 9.7, axis, SIGMA)
        single = OrientationGrid(np.array([0.7]), np.array([1.3]), np.array([1.0]))
        one = echo_detected_spectrum(sys, single, 9.7, axis, SIGMA)
        np.testing.assert_allclose(powder.amplitude, one.amplitude, atol=1e-9)

    def test_thread_count_does_not_change_result(self):
        sys = SpinSystem(1, g=2.0, D=21.0, E=1.9)
        axis = np.linspace(0.0, 1.2, 301)
        grid = make_grid(40, "spiral")
        a = echo_detected_spectrum(sys, grid, 9.7, axis, SIGMA, n_jobs=1).amplitude
        b = echo_detected_spectrum(sys, grid, 9.7, axis, SIGMA, n_jobs=4).amplitude
        assert a.tobytes() == b.tobytes()

    def test_high_temperature_weighting_keeps_shape(self):
        sys = SpinSystem(0.5, g=2.0)
        axis = np.linspace(0.30, 0.40, 201)
        grid = make_grid(4, "spiral")
        plain = echo_detected_spectrum(sys, grid, 9.7, axis, SIGMA)
        hot = echo_detected_spectrum(sys, grid, 9.7, axis, SIGMA, temperature=300.0)
        np.testing.assert_allclose(plain.amplitude, hot.amplitude, atol=1e-12)

    def test_population_weighting_changes_cr7mn_shape(self):
        sys = SpinSystem(1, g=2.0, D=21.0, E=1.9)
        axis = np.linspace(0.0, 1.2, 241)
        grid = make_grid(12, "spiral")
        plain = echo_detected_spectrum(sys, grid, 9.7, axis, SIGMA).amplitude
        cold = echo_detected_spectrum(sys, grid, 9.7, axis, SIGMA, temperature=1.8).amplitude
        hot = echo_detected_spectrum(sys, grid, 9.7, axis, SIGMA, temperature=1e4).amplitude
        assert np.abs(cold - plain).max() > 0.05
        assert np.abs(hot - plain).max() < 0.02

    def test_lorentzian_option(self):
        axis = np.linspace(0.30, 0.40, 501)
        spec = echo_detected_spectrum(SpinSystem(0.5, g=2.0), make_grid(3, "spiral"), 9.7, axis,
                                      0.002, lineshape="lorentzian")
        assert spec.field_axis[np.argmax(spec.amplitude)] == pytest.approx(0.3465, abs=2e-4)
        assert spec.meta["lineshape"] == "lorentzian"

    def test_metadata(self, cr7mn_small):
        assert cr7mn_small.meta["mw_GHz"] == 9.7
        assert cr7mn_small.meta["grid_points"] == 900
        assert cr7mn_small.meta["sigma_T"] == SIGMA

    def test_input_validation(self):
        sys, grid = SpinSystem(0.5), make_grid(3)
        with pytest.raises(ValueError):
            echo_detected_spectrum(sys, grid, 9.7, np.array([0.1, 0.2, 0.4]), SIGMA)
        with pytest.raises(ValueError):
            echo_detected_spectrum(sys, grid, 9.7, np.linspace(0.1, 0.4, 10), 0.0)
        with pytest.raises(ValueError):
            Spectrum(np.array([0.2, 0.1]), np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            Spectrum(np.array([0.1, 0.2]), np.array([1.0, np.nan]))

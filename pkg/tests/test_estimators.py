import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from pulsedesr.estimators import (
    EchoDecayRegressor,
    GaussianLineRegressor,
    InversionRecoveryRegressor,
    ZFSSpectrumRegressor,
)
from pulsedesr.noise import add_noise
from pulsedesr.powder import echo_detected_spectrum, make_grid
from pulsedesr.spin import SpinSystem

TAU = np.linspace(50, 1500, 100)
Y = np.exp(-2 * TAU / 379.0)


class TestParams:
    @pytest.mark.parametrize("cls", [EchoDecayRegressor, InversionRecoveryRegressor,
                                     GaussianLineRegressor, ZFSSpectrumRegressor])
    def test_clone_round_trip(self, cls):
        est = cls()
        params = est.get_params()
        twin = clone(est)
        assert twin.get_params() == params
        assert twin is not est

    def test_set_params(self):
        est = EchoDecayRegressor().set_params(model="modulated_decay", second_harmonic=True)
        assert est.get_params()["model"] == "modulated_decay"
        with pytest.raises(ValueError):
            EchoDecayRegressor().set_params(bogus=1)


class TestEchoDecay:
    def test_fit_predict(self):
        est = EchoDecayRegressor().fit(TAU.reshape(-1, 1), Y)
        assert est.converged_
        assert est.params_["T2"] == pytest.approx(379.0, rel=1e-6)
        np.testing.assert_allclose(est.predict(TAU[:5, None]), Y[:5], rtol=1e-6)
        assert est.score(TAU[:, None], Y) == pytest.approx(1.0, abs=1e-9)

    def test_accepts_flat_and_unsorted_input(self):
        order = np.random.default_rng(0).permutation(len(TAU))
        a = EchoDecayRegressor().fit(TAU, Y)
        b = EchoDecayRegressor().fit(TAU[order], Y[order])
        assert a.params_ == b.params_

    def test_sample_weight(self):
        y = add_noise(Y, 0.01, 3)
        a = EchoDecayRegressor().fit(TAU, y)
        b = EchoDecayRegressor().fit(TAU, y, sample_weight=np.ones_like(y))
        assert a.params_ == b.params_
        with pytest.raises(ValueError):
            EchoDecayRegressor().fit(TAU, y, sample_weight=-np.ones_like(y))

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            EchoDecayRegressor().predict(TAU[:, None])

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            EchoDecayRegressor().fit(np.c_[TAU, TAU], Y)
        with pytest.raises(ValueError):
            EchoDecayRegressor().fit(TAU, Y[:-1])
        with pytest.raises(ValueError):
            EchoDecayRegressor(model="stretched").fit(TAU, Y)

    def test_modulated(self):
        tau = np.linspace(0, 3000, 400)
        y = np.exp(-2 * tau / 2210) * (1 - 0.15 * (1 - np.cos(2 * np.pi * 2.556e-3 * tau)))
        est = EchoDecayRegressor(model="modulated_decay").fit(tau, y)
        assert est.params_["nu"] == pytest.approx(2.556, rel=1e-6)
        assert est.params_["k"] == pytest.approx(0.3, rel=1e-6)


class TestOtherRegressors:
    def test_inversion_recovery(self):
        T = np.linspace(0, 60_000, 120)
        y = 0.9 * (1 - 2 * np.exp(-T / 1e4))
        est = InversionRecoveryRegressor(tau_fixed=200.0).fit(T, y)
        assert est.params_["T1"] == pytest.approx(1e4, rel=1e-6)
        assert est.result_.meta["tau_fixed_ns"] == 200.0

    def test_gaussian_line(self):
        x = np.linspace(0.3, 0.4, 501)
        y = 2.0 * np.exp(-4 * np.log(2) * ((x - 0.3465) / 0.01) ** 2)
        est = GaussianLineRegressor().fit(x, y)
        assert est.params_["fwhm"] == pytest.approx(0.01, rel=1e-8)
        assert est.params_["amplitude"] == pytest.approx(2.0, rel=1e-8)

    def test_zfs_truth_start(self):
        x = np.linspace(0.0, 1.2, 601)
        sigma = 0.01 / 2.355
        truth = SpinSystem(1, g=2.0, D=21.0, E=1.9)
        y = 3.0 * echo_detected_spectrum(truth, make_grid(24, "spiral"), 9.7, x, sigma,
                                         normalize=False, mesh_points=800, tol=1e-10).amplitude
        est = ZFSSpectrumRegressor(S=1, g=2.0, D=21.0, E=1.9, sigma=sigma).fit(x, y)
        assert est.params_["D"] == pytest.approx(21.0, rel=1e-6)
        assert est.scale_ == pytest.approx(3.0, rel=1e-3)
        assert est.score(x, y) > 0.999

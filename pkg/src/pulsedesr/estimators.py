"""scikit-learn style wrappers around the fitting routines.

Each regressor takes the abscissa (delays, recovery times or fields) as a
single-feature ``X`` and the measured amplitudes as ``y``. After ``fit`` the
estimates live in ``params_`` and ``sigmas_``; the full
:class:`~pulsedesr.fitting.FitResult` is kept in ``result_``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted, column_or_1d

from . import fitting

__all__ = [
    "EchoDecayRegressor",
    "GaussianLineRegressor",
    "InversionRecoveryRegressor",
    "ZFSSpectrumRegressor",
]


def _abscissa(X, min_samples: int = 2) -> np.ndarray:
    """Validate a single-feature design matrix (or 1-d array) and return it flat."""
    X = np.asarray(X)
    if X.ndim <= 1:
        X = X.reshape(-1, 1)
    X = check_array(X, ensure_min_samples=min_samples)
    if X.shape[1] != 1:
        raise ValueError(f"expected a single abscissa column, got {X.shape[1]} features")
    return X[:, 0]


def _xy(X, y, sample_weight=None):
    x = _abscissa(X)
    y = check_array(column_or_1d(y, warn=True), ensure_2d=False, ensure_min_samples=2)
    check_consistent_length(x, y)
    w = None
    if sample_weight is not None:
        sw = column_or_1d(np.asarray(sample_weight, dtype=float))
        check_consistent_length(x, sw)
        if np.any(sw < 0):
            raise ValueError("sample weights must be non-negative")
        # fitting weights multiply residuals
        w = np.sqrt(sw)
    order = np.argsort(x, kind="stable")
    return x[order], y[order], None if w is None else w[order]


class _FitModelRegressor(RegressorMixin, BaseEstimator):
    def _model(self) -> fitting.FitModel:
        raise NotImplementedError

    def _run(self, model, x, y, w):
        return fitting.fit(model, (x, y), weights=w, max_iter=self.max_iter)

    def fit(self, X, y, sample_weight=None):
        x, y, w = _xy(X, y, sample_weight)
        model = self._model()
        result = self._run(model, x, y, w)
        self.result_ = result
        self.params_ = dict(result.params)
        self.sigmas_ = dict(result.sigmas)
        self.converged_ = result.converged
        self.n_features_in_ = 1
        self.model_ = model
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.model_(_abscissa(X, min_samples=1), self.params_)


class EchoDecayRegressor(_FitModelRegressor):
    """Hahn-echo decay, optionally with one ESEEM frequency.

    Parameters
    ----------
    model : {"mono_exponential", "modulated_decay"}
    second_harmonic : bool
        Fit a free second-harmonic depth ``h2`` (modulated model only).
    max_iter : int
    """

    def __init__(self, model: str = "mono_exponential", second_harmonic: bool = False,
                 max_iter: int = 200):
        self.model = model
        self.second_harmonic = second_harmonic
        self.max_iter = max_iter

    def _model(self):
        if self.model == "mono_exponential":
            return fitting.get_model(self.model)
        if self.model == "modulated_decay":
            return fitting.get_model(self.model, second_harmonic=self.second_harmonic)
        raise ValueError(f"unsupported decay model {self.model!r}")


class InversionRecoveryRegressor(_FitModelRegressor):
    """``M_inf (1 - 2 f exp(-T/T1))`` with the echo read out at ``tau_fixed`` ns."""

    def __init__(self, tau_fixed: float = 0.0, max_iter: int = 200):
        self.tau_fixed = tau_fixed
        self.max_iter = max_iter

    def _model(self):
        return fitting.get_model("inversion_recovery")

    def _run(self, model, x, y, w):
        return fitting.fit_inversion_recovery((x, y), self.tau_fixed, weights=w, max_iter=self.max_iter)


class GaussianLineRegressor(_FitModelRegressor):
    """Single Gaussian line: ``center``, ``fwhm`` and ``amplitude``."""

    def __init__(self, max_iter: int = 200):
        self.max_iter = max_iter

    def _model(self):
        return fitting.get_model("gaussian_line")


class ZFSSpectrumRegressor(RegressorMixin, BaseEstimator):
    """Fit ``g``, ``D``, ``E`` and the line width of a powder spectrum.

    The initial guess is given by ``S``, ``g``, ``D`` and ``E`` (GHz). The
    field axis passed as ``X`` must be uniform.
    """

    def __init__(self, S: float = 1.0, g: float = 2.0, D: float = 0.0, E: float = 0.0,
                 mw_GHz: float = 9.7, sigma: float | None = None, grid_n: int = 24,
                 grid_scheme: str = "spiral", fit_sigma: bool = True, n_starts: int = 1,
                 max_iter: int = 30, random_state: int = 0):
        self.S = S
        self.g = g
        self.D = D
        self.E = E
        self.mw_GHz = mw_GHz
        self.sigma = sigma
        self.grid_n = grid_n
        self.grid_scheme = grid_scheme
        self.fit_sigma = fit_sigma
        self.n_starts = n_starts
        self.max_iter = max_iter
        self.random_state = random_state

    def _grid(self):
        from .powder import make_grid

        return make_grid(self.grid_n, self.grid_scheme)

    def fit(self, X, y):
        from .powder import Spectrum
        from .spin import SpinSystem

        x, y, _ = _xy(X, y)
        init = SpinSystem(self.S, self.g, self.D, self.E)
        sigma = self.sigma if self.sigma is not None else 0.01 / 2.355
        result = fitting.fit_zfs_spectrum(Spectrum(x, y, {}), init, self.mw_GHz, sigma=sigma,
                                          grid=self._grid(), fit_sigma=self.fit_sigma,
                                          max_iter=self.max_iter, n_starts=self.n_starts,
                                          seed=self.random_state)
        self.result_ = result
        self.params_ = dict(result.params)
        self.sigmas_ = dict(result.sigmas)
        self.converged_ = result.converged
        self.n_features_in_ = 1
        self.system_ = init.replace(g=self.params_["g"], D=self.params_["D"], E=self.params_["E"])
        self.sigma_ = self.params_.get("sigma", sigma)
        model = self._simulate(x)
        self.scale_ = float(model @ y / (model @ model)) if model @ model > 0 else 0.0
        return self

    def _simulate(self, x):
        from .powder import echo_detected_spectrum

        return echo_detected_spectrum(self.system_, self._grid(), self.mw_GHz, x, self.sigma_,
                                      normalize=False).amplitude

    def predict(self, X):
        check_is_fitted(self, "params_")
        x = _abscissa(X)
        return self.scale_ * self._simulate(x)

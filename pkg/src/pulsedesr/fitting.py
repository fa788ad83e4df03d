"""Nonlinear least-squares fitting of relaxation traces and spectra.

The optimizer is a Levenberg-Marquardt loop with Marquardt (diagonal) scaling:
a trial step is accepted only if it lowers the residual sum of squares,
otherwise the damping grows tenfold. Parameter uncertainties come from the
linearized covariance ``s^2 (J^T J)^-1`` with ``s^2`` the residual variance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.signal import find_peaks

__all__ = [
    "FitModel",
    "FitResult",
    "MODELS",
    "fit",
    "fit_gaussian_line",
    "fit_inversion_recovery",
    "fit_zfs_spectrum",
    "get_model",
    "levenberg_marquardt",
]

FWHM_PER_SIGMA = 2 * math.sqrt(2 * math.log(2))
_TWO_PI_GHZ = 2e-3 * math.pi  # rad per (MHz * ns)


# stationarity below which a terminated fit counts as converged
STATIONARITY_TOL = 1e-6
# relative accuracy assumed for a forward-difference Jacobian
FD_JAC_RTOL = 2e-3


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    initial_cost: float
    jac: np.ndarray
    iterations: int
    nfev: int
    converged: bool
    message: str
    gradient: float
    gradient_tol: float = STATIONARITY_TOL


def _free_mask(J, r, x, lower, upper):
    g = J.T @ r
    return ~(((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0)))


def _scaled_gradient(J, r, free):
    rn = np.linalg.norm(r)
    cn = np.linalg.norm(J, axis=0)
    g = J.T @ r
    ok = free & (cn > 0)
    if rn == 0 or not ok.any():
        return 0.0
    return float(np.max(np.abs(g[ok]) / (cn[ok] * rn)))


def _stationarity(J, r, free, fscale):
    """Norm of the residual's projection onto the free Jacobian columns, over ``fscale``.

    This is the residual the local linear model could still remove. It
    vanishes with the projected gradient but, unlike the gradient cosine,
    stays meaningful when the residual is pure round-off or solver noise.
    """
    Jf = J[:, free]
    if Jf.shape[1] == 0 or not np.any(r):
        return 0.0
    coef, *_ = np.linalg.lstsq(Jf, r, rcond=None)
    return float(np.linalg.norm(Jf @ coef) / fscale)


def levenberg_marquardt(residual: Callable, jacobian: Callable, x0, lower=None, upper=None,
                        project: Callable | None = None, max_iter: int = 200,
                        gtol: float = 1e-10, xtol: float = 1e-12, ftol: float = 1e-15,
                        lam0: float = 1e-3, fscale: float | None = None,
                        jac_rtol: float = 0.0) -> LMResult:
    """Minimize ``sum(residual(x)**2)`` subject to box bounds.

    ``project`` may further map a clipped trial point onto the feasible set.
    ``fscale`` is the data norm used to judge stationarity; it defaults to the
    initial residual norm. Termination on a small step or small cost
    reduction counts as convergence only if the stationarity measure is
    below :data:`STATIONARITY_TOL` plus ``jac_rtol`` times the relative
    residual; ``jac_rtol`` is the relative accuracy of an approximate
    (finite-difference) Jacobian and is zero for analytic ones.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = len(x)
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)

    def feasible(v):
        v = np.clip(v, lower, upper)
        return project(v) if project is not None else v

    x = feasible(x)
    r = residual(x)
    cost = float(r @ r)
    initial_cost = cost
    if fscale is None or not fscale > 0:
        fscale = math.sqrt(cost) if cost > 0 else 1.0
    J = jacobian(x)
    nfev = 1
    lam = lam0

    def tolerance():
        return STATIONARITY_TOL + jac_rtol * math.sqrt(cost) / fscale

    message = "maximum iterations reached"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = J.T @ r
        free = _free_mask(J, r, x, lower, upper)
        if cost == 0.0 or math.sqrt(cost) <= 1e-14 * fscale:
            converged, message = True, "exact fit"
            it -= 1
            break
        if _scaled_gradient(J, r, free) <= gtol:
            converged, message = True, "gradient below tolerance"
            it -= 1
            break
        # variables held at an active bound stay put; the step is solved over the rest
        Jf = J[:, free]
        A = Jf.T @ Jf
        d = np.diag(A).copy()
        d[d <= 0] = 1.0
        accepted = False
        while lam < 1e16:
            M = A + lam * np.diag(d)
            try:
                step = np.zeros(n)
                step[free] = np.linalg.solve(M, -g[free])
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            xn = feasible(x + step)
            rn = residual(xn)
            nfev += 1
            cn = float(rn @ rn)
            if np.isfinite(cn) and cn < cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            message = "no further reduction possible"
            converged = _stationarity(J, r, free, fscale) <= tolerance()
            break
        dx = xn - x
        reduction = (cost - cn) / max(cost, np.finfo(float).tiny)
        x, r, cost = xn, rn, cn
        J = jacobian(x)
        lam = max(lam / 10, 1e-12)
        small_step = np.linalg.norm(dx) <= xtol * (np.linalg.norm(x) + xtol)
        if small_step or reduction <= ftol:
            message = "step below tolerance" if small_step else "cost reduction below tolerance"
            free = _free_mask(J, r, x, lower, upper)
            converged = _stationarity(J, r, free, fscale) <= tolerance()
            break
    free = _free_mask(J, r, x, lower, upper)
    return LMResult(x, cost, initial_cost, J, it, nfev, converged, message,
                    _stationarity(J, r, free, fscale), tolerance())


@dataclass
class FitModel:
    """Parametric model ``f(x, *params)`` with analytic Jacobian and defaults."""

    name: str
    param_names: tuple[str, ...]
    func: Callable
    jac: Callable
    guess: Callable
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    initial: dict[str, float] = field(default_factory=dict)

    def __call__(self, x, params):
        p = [params[k] for k in self.param_names] if isinstance(params, dict) else params
        return self.func(np.asarray(x, dtype=float), *p)

    def bounds_arrays(self):
        lo = np.array([self.bounds.get(k, (-np.inf, np.inf))[0] for k in self.param_names])
        hi = np.array([self.bounds.get(k, (-np.inf, np.inf))[1] for k in self.param_names])
        return lo, hi

    def check_initial(self, p0: dict):
        lo, hi = self.bounds_arrays()
        for k, a, b in zip(self.param_names, lo, hi):
            if not a <= p0[k] <= b:
                raise ValueError(f"initial {k}={p0[k]} outside bounds [{a}, {b}]")


@dataclass
class FitResult:
    model: str
    params: dict[str, float]
    sigmas: dict[str, float]
    residual_norm: float
    converged: bool
    iterations: int = 0
    message: str = ""
    flags: list[str] = field(default_factory=list)
    initial_residual_norm: float = float("nan")
    covariance: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)
    gradient_norm: float = float("nan")
    gradient_tol: float = STATIONARITY_TOL

    def to_dict(self) -> dict:
        def clean(v):
            return None if not np.isfinite(v) else float(v)

        return {
            "model": self.model,
            "params": {k: clean(v) for k, v in self.params.items()},
            "sigmas": {k: clean(v) for k, v in self.sigmas.items()},
            "residual_norm": clean(self.residual_norm),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "gradient_norm": clean(self.gradient_norm),
            "gradient_tol": clean(self.gradient_tol),
            "message": self.message,
            "flags": list(self.flags),
            "meta": self.meta,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> FitResult:
        nan = float("nan")
        return cls(d["model"], {k: nan if v is None else v for k, v in d["params"].items()},
                   {k: nan if v is None else v for k, v in d["sigmas"].items()},
                   nan if d["residual_norm"] is None else d["residual_norm"], d["converged"],
                   d.get("iterations", 0), d.get("message", ""), d.get("flags", []),
                   meta=d.get("meta", {}),
                   gradient_norm=nan if d.get("gradient_norm") is None else d["gradient_norm"],
                   gradient_tol=d.get("gradient_tol") or STATIONARITY_TOL)


# ---------------------------------------------------------------- models


def _mono(x, A, T2):
    return A * np.exp(-2 * x / T2)


def _mono_jac(x, A, T2):
    e = np.exp(-2 * x / T2)
    return np.column_stack([e, A * e * 2 * x / T2 ** 2])


def _first_e_crossing(x, y):
    y0 = np.mean(y[: min(3, len(y))])
    below = np.nonzero(y < y0 / math.e)[0]
    if y0 > 0 and len(below):
        return y0, x[below[0]] - x[0]
    return y0, None


def _loglinear_T2(x, y):
    pos = y > 0
    if pos.sum() >= 2:
        slope = np.polyfit(x[pos], np.log(y[pos]), 1)[0]
        if slope < 0:
            return -2 / slope
    return 2 * (x[-1] - x[0]) if x[-1] > x[0] else 1.0


def _mono_guess(x, y):
    y0, dt = _first_e_crossing(x, y)
    T2 = 2 * dt if dt else _loglinear_T2(x, y)
    T2 = max(T2, 1e-3 * max(abs(x).max(), 1.0))
    A = y0 * math.exp(2 * x[0] / T2) if y0 > 0 else max(abs(y).max(), 1e-12)
    return {"A": A, "T2": T2}


def _harmonics(x, nu, k, h2):
    wt = _TWO_PI_GHZ * nu * x
    c1, s1 = np.cos(wt), np.sin(wt)
    c2, s2 = np.cos(2 * wt), np.sin(2 * wt)
    V = 1 - k / 2 * (1 - c1) - h2 * (1 - c2)
    dV_dk = -(1 - c1) / 2
    dV_dnu = -(k / 2) * s1 * _TWO_PI_GHZ * x - h2 * s2 * 2 * _TWO_PI_GHZ * x
    dV_dh2 = -(1 - c2)
    return V, dV_dk, dV_dnu, dV_dh2


def _moddecay(x, A, T2, k, nu, h2=0.0):
    V = _harmonics(x, nu, k, h2)[0]
    return A * np.exp(-2 * x / T2) * V


def _moddecay_jac(x, A, T2, k, nu, h2=None):
    use_h2 = h2 is not None
    V, dk, dnu, dh2 = _harmonics(x, nu, k, h2 if use_h2 else 0.0)
    e = np.exp(-2 * x / T2)
    cols = [e * V, A * e * V * 2 * x / T2 ** 2, A * e * dk, A * e * dnu]
    if use_h2:
        cols.append(A * e * dh2)
    return np.column_stack(cols)


def dominant_frequency(x, y, pad: int = 16, support: float = 0.5):
    """Dominant nonzero frequency (MHz) of a trace sampled in ns.

    Non-uniform samples are interpolated onto a uniform grid. If half the
    peak frequency also carries spectral weight above ``support`` times the
    peak, the peak is taken to be a second harmonic and the half is returned.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    xu = np.linspace(x[0], x[-1], n)
    yu = np.interp(xu, x, y)
    yu = yu - yu.mean()
    yu = yu * np.hanning(n)
    dt = xu[1] - xu[0]
    spec = np.abs(np.fft.rfft(yu, n * pad))
    freqs = np.fft.rfftfreq(n * pad, dt) * 1e3  # MHz
    spec[freqs < 1.5e3 / (x[-1] - x[0])] = 0.0  # below ~1.5 cycles per window
    i = int(np.argmax(spec))
    if 0 < i < len(spec) - 1:
        a, b, c = spec[i - 1], spec[i], spec[i + 1]
        denom = a - 2 * b + c
        off = 0.5 * (a - c) / denom if denom != 0 else 0.0
    else:
        off = 0.0
    df = freqs[1] - freqs[0]
    f = (i + off) * df
    # a half-frequency line must be a genuine peak, not leakage from the envelope
    peaks, props = find_peaks(spec, prominence=support * spec[i])
    near = peaks[np.abs(freqs[peaks] - f / 2) <= pad * df] if len(peaks) else peaks
    if len(near):
        sub = near[np.argmax(spec[near])]
        return float(freqs[sub]), float(spec[i])
    return float(f), float(spec[i])


def _moddecay_guess_factory(second_harmonic):
    def guess(x, y):
        mono = fit(get_model("mono_exponential"), (x, y))
        A, T2 = mono.params["A"], mono.params["T2"]
        env = _mono(x, A, T2)
        detr = y - env
        nu, _ = dominant_frequency(x, detr)
        # amplitude of the fundamental in the detrended ratio
        wt = _TWO_PI_GHZ * nu * x
        ratio = y / np.maximum(env, 1e-12 * abs(A))
        basis = np.column_stack([np.ones_like(x), np.cos(wt), np.sin(wt)])
        coef, *_ = np.linalg.lstsq(basis * env[:, None], ratio * env, rcond=None)
        k = float(np.clip(2 * math.hypot(coef[1], coef[2]) / max(coef[0], 1e-12), 0.02, 0.95))
        A0 = A / max(1 - k / 2, 0.05)
        g = {"A": A0, "T2": T2, "k": k, "nu": nu}
        if second_harmonic:
            g["h2"] = k * k / 8
        return g

    return guess


def _ir(x, M_inf, f, T1):
    return M_inf * (1 - 2 * f * np.exp(-x / T1))


def _ir_jac(x, M_inf, f, T1):
    e = np.exp(-x / T1)
    return np.column_stack([1 - 2 * f * e, -2 * M_inf * e, -2 * M_inf * f * e * x / T1 ** 2])


def _ir_guess(x, y):
    if y[-1] > 0:
        M = y[-1]
        f = float(np.clip((1 - y[0] / M) / 2, 0.05, 1.0))
    else:
        # recovery barely started: assume full inversion
        M, f = max(abs(y[0]), 1e-12), 1.0
    sign = np.nonzero(np.diff(np.signbit(y)))[0]
    if len(sign) and 2 * f > 1 and x[sign[0]] > 0:
        T1 = x[sign[0]] / math.log(2 * f)
    else:
        slope = np.polyfit(x, y, 1)[0] if len(x) > 1 else 0.0
        T1 = 2 * M * f / slope if slope > 0 else x[-1]
    return {"M_inf": M, "f": f, "T1": max(T1, 1e-9)}


def _gauss(x, center, fwhm, amplitude):
    return amplitude * np.exp(-4 * math.log(2) * (x - center) ** 2 / fwhm ** 2)


def _gauss_jac(x, center, fwhm, amplitude):
    c = 4 * math.log(2)
    e = np.exp(-c * (x - center) ** 2 / fwhm ** 2)
    return np.column_stack([
        amplitude * e * 2 * c * (x - center) / fwhm ** 2,
        amplitude * e * 2 * c * (x - center) ** 2 / fwhm ** 3,
        e,
    ])


def _gauss_guess(x, y):
    i = int(np.argmax(y))
    half = y[i] / 2
    above = np.nonzero(y >= half)[0]
    width = x[above[-1]] - x[above[0]] if len(above) > 1 else (x[-1] - x[0]) / 10
    return {"center": float(x[i]), "fwhm": float(max(width, abs(x[1] - x[0]))),
            "amplitude": float(y[i])}


def get_model(name: str, **options) -> FitModel:
    """Build a named model; ``modulated_decay`` takes ``second_harmonic=``."""
    inf = np.inf
    if name == "mono_exponential":
        return FitModel(name, ("A", "T2"), _mono, _mono_jac, _mono_guess,
                        {"A": (-inf, inf), "T2": (1e-12, inf)})
    if name == "modulated_decay":
        sh = options.get("second_harmonic", False)
        names = ("A", "T2", "k", "nu") + (("h2",) if sh else ())
        bounds = {"T2": (1e-12, inf), "k": (0.0, 1.0), "nu": (0.0, inf), "h2": (0.0, 1.0)}
        if sh:
            return FitModel(name, names, _moddecay, _moddecay_jac, _moddecay_guess_factory(True), bounds)
        return FitModel(name, names, _moddecay, lambda x, A, T2, k, nu: _moddecay_jac(x, A, T2, k, nu),
                        _moddecay_guess_factory(False), bounds)
    if name == "inversion_recovery":
        return FitModel(name, ("M_inf", "f", "T1"), _ir, _ir_jac, _ir_guess,
                        {"M_inf": (0.0, inf), "f": (1e-9, 1.0), "T1": (1e-12, inf)})
    if name == "gaussian_line":
        return FitModel(name, ("center", "fwhm", "amplitude"), _gauss, _gauss_jac, _gauss_guess,
                        {"fwhm": (1e-15, inf)})
    raise ValueError(f"unknown model {name!r}")


MODELS = ("mono_exponential", "modulated_decay", "inversion_recovery", "gaussian_line")


def _xy(trace):
    if isinstance(trace, tuple):
        x, y = trace
    elif hasattr(trace, "field_axis"):
        x, y = trace.field_axis, trace.amplitude
    else:
        x, y = trace.axis, trace.amplitude
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def _finish(name, names, lm: LMResult, n_points, extra_flags=()):
    params = dict(zip(names, map(float, lm.x)))
    J = lm.jac
    p = len(names)
    dof = n_points - p
    flags = list(extra_flags)
    converged = lm.converged
    message = lm.message
    A = J.T @ J
    cn = np.linalg.norm(J, axis=0)
    degenerate = np.any(cn == 0) or np.linalg.cond(A) > 1e15
    if degenerate:
        flags.append("degenerate_jacobian")
        converged = False
        message = message + "; degenerate Jacobian"
        cov = np.full((p, p), np.inf)
    else:
        s2 = lm.cost / dof if dof > 0 else np.inf
        cov = np.linalg.inv(A) * s2
    sig = np.sqrt(np.abs(np.diag(cov)))
    sigmas = dict(zip(names, map(float, sig)))
    for k in names:
        v = params[k]
        if v != 0 and np.isfinite(sigmas[k]) and sigmas[k] / abs(v) > 0.5:
            flags.append(f"poorly_constrained:{k}")
        elif not np.isfinite(sigmas[k]):
            flags.append(f"poorly_constrained:{k}")
    if not converged and "not_converged" not in flags:
        flags.append("not_converged")
    return FitResult(name, params, sigmas, math.sqrt(lm.cost), bool(converged), lm.iterations,
                     message, flags, math.sqrt(lm.initial_cost), cov, gradient_norm=lm.gradient,
                     gradient_tol=lm.gradient_tol)


def fit(model, trace, weights=None, init: dict | None = None, max_iter: int = 200,
        large_residual: float = 0.1) -> FitResult:
    """Least-squares fit of ``model`` (a :class:`FitModel` or name) to a trace.

    ``trace`` is a :class:`~pulsedesr.pulses.Trace`, a
    :class:`~pulsedesr.powder.Spectrum` or an ``(x, y)`` tuple. ``weights``
    multiply the residuals. A fit whose residual norm exceeds
    ``large_residual`` times the norm of the centred data is flagged.
    """
    if isinstance(model, str):
        model = get_model(model)
    x, y = _xy(trace)
    p = len(model.param_names)
    if len(x) < p + 1:
        raise ValueError(f"need at least {p + 1} points to fit {p} parameters")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    p0 = dict(model.guess(x, y))
    p0.update(model.initial)
    if init:
        p0.update(init)
    lo, hi = model.bounds_arrays()
    x0 = np.clip([p0[k] for k in model.param_names], lo, hi)
    if init:
        model.check_initial({k: p0[k] for k in model.param_names})

    def residual(v):
        return w * (model.func(x, *v) - y)

    def jacobian(v):
        return w[:, None] * model.jac(x, *v)

    lm = levenberg_marquardt(residual, jacobian, x0, lo, hi, max_iter=max_iter,
                             fscale=float(np.linalg.norm(w * y)))
    flags = []
    spread = np.linalg.norm(w * (y - y.mean()))
    if spread > 0 and math.sqrt(lm.cost) > large_residual * spread:
        flags.append("large_residual")
    return _finish(model.name, model.param_names, lm, len(x), flags)


def fit_inversion_recovery(trace, tau_fixed: float, T2: float | None = None, **kw) -> FitResult:
    """Fit ``M_inf (1 - 2 f exp(-T/T1))``; ``M_inf`` includes the fixed-tau echo factor."""
    res = fit(get_model("inversion_recovery"), trace, **kw)
    res.meta["tau_fixed_ns"] = tau_fixed
    if T2 is not None:
        res.meta["M_inf_unscaled"] = res.params["M_inf"] / math.exp(-2 * tau_fixed / T2)
    f = res.params["f"]
    res.meta["zero_crossing_ns"] = res.params["T1"] * math.log(2 * f) if 2 * f > 1 else None
    return res


def fit_gaussian_line(spectrum, **kw) -> FitResult:
    """Gaussian ``(center, fwhm, amplitude)`` fit to a single-peaked spectrum."""
    return fit(get_model("gaussian_line"), spectrum, **kw)


def _fd_jacobian(res_fn, project, lo, hi, fd_step):
    def jac(v):
        r0 = res_fn(v)
        cols = []
        for i in range(len(v)):
            h = fd_step * max(abs(v[i]), 1e-3)
            vp = v.copy()
            vp[i] += h
            vp = project(np.clip(vp, lo, hi))
            hh = vp[i] - v[i]
            if hh == 0:
                vp[i] = v[i] - h
                hh = -h
            cols.append((res_fn(vp) - r0) / hh)
        return np.column_stack(cols)

    return jac


def fit_zfs_spectrum(spectrum, init, mw_GHz: float | None = None, *, sigma: float | None = None,
                     grid=None, fit_sigma: bool = True, max_iter: int = 30, n_starts: int = 1,
                     seed: int = 0, coarse_to_fine: bool = True, mesh_points: int = 800,
                     fd_step: float = 1e-4) -> FitResult:
    """Fit ``(g, D, E, sigma)`` of an S >= 1 spin to an echo-detected spectrum.

    The forward model is :func:`~pulsedesr.powder.echo_detected_spectrum`
    scaled by its least-squares amplitude; the Jacobian is by forward
    differences. With ``coarse_to_fine``, a start whose relative misfit
    exceeds 5% first gets a pass over ``(g, D, E)`` at three times the
    broadening, so that displaced features still overlap the target.
    ``n_starts > 1`` adds starts perturbed by up to 10%.
    """
    from .powder import echo_detected_spectrum, make_grid
    from .spin import SpinSystem

    sys0 = init if isinstance(init, SpinSystem) else SpinSystem(**init)
    mw = mw_GHz if mw_GHz is not None else spectrum.meta.get("mw_GHz", 9.7)
    sigma0 = sigma if sigma is not None else spectrum.meta.get("sigma_T", 0.005)
    grid = grid if grid is not None else make_grid(24, "spiral")
    axis = np.asarray(spectrum.field_axis, dtype=float)
    target = np.asarray(spectrum.amplitude, dtype=float)
    names = ("g", "D", "E", "sigma") if fit_sigma else ("g", "D", "E")
    tnorm = float(np.linalg.norm(target))
    if not 1 <= n_starts <= 5:
        raise ValueError("n_starts must lie between 1 and 5")
    if abs(sys0.E) > abs(sys0.D) / 3:
        raise ValueError("initial E exceeds |D|/3")

    def residual(g, D, E, s):
        sysv = sys0.replace(g=g, D=D, E=float(np.clip(E, -abs(D) / 3, abs(D) / 3)))
        m = echo_detected_spectrum(sysv, grid, mw, axis, s, normalize=False,
                                   mesh_points=mesh_points, tol=1e-10).amplitude
        mm = m @ m
        c = (m @ target) / mm if mm > 0 else 0.0
        return c * m - target

    def project(v):
        v = v.copy()
        v[2] = np.clip(v[2], -abs(v[1]) / 3, abs(v[1]) / 3)
        return v

    lo = np.array([0.1, -np.inf, -np.inf, 1e-5])
    hi = np.array([10.0, np.inf, np.inf, 1.0])

    def solve(x0, sig, iters, tols):
        if sig is None:
            fn = lambda v: residual(*v)  # noqa: E731
            l, h = lo, hi
        else:
            fn = lambda v: residual(*v, sig)  # noqa: E731
            l, h = lo[:3], hi[:3]
        jac = _fd_jacobian(fn, project, l, h, fd_step)
        return levenberg_marquardt(fn, jac, x0, l, h, project=project, max_iter=iters,
                                   gtol=tols[0], xtol=tols[1], ftol=tols[2], fscale=tnorm,
                                   jac_rtol=FD_JAC_RTOL)

    x_init = np.array([sys0.g, sys0.D, sys0.E, sigma0], dtype=float)
    starts = [x_init]
    rng = np.random.default_rng(seed)
    for _ in range(max(n_starts, 1) - 1):
        starts.append(project(x_init * (1 + rng.uniform(-0.1, 0.1, size=4))))
    fine_tols = (1e-8, 1e-8, 1e-10)
    best = None
    total_iters = 0
    for x0 in starts:
        if coarse_to_fine and np.linalg.norm(residual(*x0)) > 0.05 * tnorm:
            coarse = solve(x0[:3], 3 * max(x0[3], sigma0), max_iter, (1e-5, 1e-6, 1e-6))
            total_iters += coarse.iterations
            x0 = np.concatenate([coarse.x, x0[3:]])
        lm = solve(x0 if fit_sigma else x0[:3], None if fit_sigma else sigma0, max_iter, fine_tols)
        total_iters += lm.iterations
        if best is None or lm.cost < best.cost:
            best = lm
    result = _finish("zfs_spectrum", names, best, len(axis))
    result.meta.update({"mw_GHz": mw, "grid_points": len(grid), "starts": len(starts),
                        "total_iterations": total_iters, "S": sys0.S})
    if not fit_sigma:
        result.meta["sigma_T"] = sigma0
    return result

"""Orientation grids, resonance-field search and echo-detected powder spectra."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .constants import DEFAULT_MW_GHZ, MU_B_OVER_H
from .spin import Orientation, SpinSystem, spin_operators, zfs_matrix

__all__ = [
    "OrientationGrid",
    "Resonance",
    "Spectrum",
    "echo_detected_spectrum",
    "eigvalsh_batched",
    "make_grid",
    "resonance_fields",
]

# h / k_B in K per GHz
_H_OVER_K = 0.0479924307

_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
_CHUNK = 256


@dataclass(frozen=True)
class OrientationGrid:
    """Unit-sphere directions ``(theta, phi)`` with normalized quadrature weights."""

    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    scheme: str = ""
    n: int = 0

    def __post_init__(self):
        if not (len(self.theta) == len(self.phi) == len(self.weights)):
            raise ValueError("theta, phi and weights must have equal length")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    def __len__(self):
        return len(self.weights)

    @property
    def points(self) -> list[tuple[Orientation, float]]:
        return [(Orientation(t, p), w) for t, p, w in zip(self.theta, self.phi, self.weights)]

    @property
    def vectors(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.column_stack([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])

    def integrate(self, f) -> float:
        """Weighted sum of ``f(theta, phi)`` (i.e. the sphere average)."""
        return float(np.sum(self.weights * f(self.theta, self.phi)))


def make_grid(n: int, scheme: str = "product") -> OrientationGrid:
    """Deterministic ``n * n`` point orientation grid.

    ``product``: Gauss-Legendre nodes in cos(theta) times ``n`` uniform
    azimuths. ``spiral``: golden-angle spiral with equal weights.
    """
    n = int(n)
    if n < 2:
        raise ValueError("grid resolution must be at least 2")
    if scheme == "product":
        x, w = np.polynomial.legendre.leggauss(n)
        phi1 = 2 * np.pi * np.arange(n) / n
        ct = np.repeat(x, n)
        phi = np.tile(phi1, n)
        weights = np.repeat(w / 2, n) / n
    elif scheme == "spiral":
        N = n * n
        i = np.arange(N)
        ct = 1.0 - (2 * i + 1) / N
        phi = np.mod(i * _GOLDEN_ANGLE, 2 * np.pi)
        weights = np.full(N, 1.0 / N)
    else:
        raise ValueError(f"unknown grid scheme {scheme!r}")
    weights = weights / weights.sum()
    return OrientationGrid(np.arccos(np.clip(ct, -1.0, 1.0)), phi, weights, scheme, n)


@dataclass(frozen=True)
class Spectrum:
    field_axis: np.ndarray
    amplitude: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.field_axis) != len(self.amplitude):
            raise ValueError("field axis and amplitude lengths differ")
        if np.any(np.diff(self.field_axis) <= 0):
            raise ValueError("field axis must be strictly ascending")
        if not np.all(np.isfinite(self.amplitude)):
            raise ValueError("amplitudes must be finite")


class Resonance(NamedTuple):
    field: float
    intensity: float
    i: int
    j: int


def _eig3(a, b, c, h01, h02, h12):
    q = (a + b + c) / 3
    a, b, c = a - q, b - q, c - q
    n01, n02, n12 = h01.real ** 2 + h01.imag ** 2, h02.real ** 2 + h02.imag ** 2, h12.real ** 2 + h12.imag ** 2
    p = np.sqrt((a * a + b * b + c * c + 2 * (n01 + n02 + n12)) / 6)
    det = a * b * c + 2 * (h01 * h12 * np.conj(h02)).real - a * n12 - b * n02 - c * n01
    safe = np.where(p > 0, p, 1.0)
    ang = np.arccos(np.clip(det / (2 * safe ** 3), -1.0, 1.0)) / 3
    hi = q + 2 * p * np.cos(ang)
    lo = q + 2 * p * np.cos(ang + 2 * np.pi / 3)
    return np.stack([lo, 3 * q - hi - lo, hi], axis=-1)


def eigvalsh_batched(H: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a stack of Hermitian matrices.

    Closed forms are used for 2x2 and 3x3 (trigonometric solution of the
    characteristic cubic); larger matrices go to LAPACK.
    """
    dim = H.shape[-1]
    if dim == 2:
        a = H[..., 0, 0].real
        d = H[..., 1, 1].real
        m = (a + d) / 2
        r = np.sqrt(((a - d) / 2) ** 2 + np.abs(H[..., 0, 1]) ** 2)
        return np.stack([m - r, m + r], axis=-1)
    if dim == 3:
        return _eig3(H[..., 0, 0].real, H[..., 1, 1].real, H[..., 2, 2].real,
                     H[..., 0, 1], H[..., 0, 2], H[..., 1, 2])
    return np.linalg.eigvalsh(H)


def _affine_eigvals(H0, Z, B):
    """Eigenvalues of ``H0 + B * Z`` for ``Z`` of shape (n, d, d) and ``B`` of shape (n, m).

    For d <= 3 only the independent entries are formed.
    """
    dim = H0.shape[-1]
    if dim > 3:
        return np.linalg.eigvalsh(H0 + B[..., None, None] * Z[:, None])

    def entry(i, j, real=False):
        z = Z[:, i, j]
        if real:
            return H0[i, j].real + B * z.real[:, None]
        return H0[i, j] + B * z[:, None]

    if dim == 2:
        a, d, off = entry(0, 0, True), entry(1, 1, True), entry(0, 1)
        m = (a + d) / 2
        r = np.sqrt(((a - d) / 2) ** 2 + off.real ** 2 + off.imag ** 2)
        return np.stack([m - r, m + r], axis=-1)
    return _eig3(entry(0, 0, True), entry(1, 1, True), entry(2, 2, True),
                 entry(0, 1), entry(0, 2), entry(1, 2))


def _pairs(dim):
    return np.array([(i, j) for i in range(dim) for j in range(i + 1, dim)], dtype=int).reshape(-1, 2)


def _orientation_ops(sys: SpinSystem, theta, phi):
    """Stacked ``H0``, ``Z`` (per unit field) and lab-x operators for many directions."""
    H0 = zfs_matrix(sys)
    Sx, Sy, Sz = spin_operators(sys.S)
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    n = np.stack([st * cp, st * sp, ct], axis=-1)
    perp = np.stack([ct * cp, ct * sp, -st], axis=-1)
    S = np.stack([Sx, Sy, Sz])
    Z = sys.g * MU_B_OVER_H * np.einsum("oc,cij->oij", n, S)
    P = np.einsum("oc,cij->oij", perp, S)
    return H0, Z, P


def _find_roots(sys, theta, phi, mw, b_lo, b_hi, mesh_points, tol):
    """Resonances for a block of orientations.

    Returns arrays (orientation index, field, intensity, i, j, gap-derivative sign).
    """
    H0, Z, P = _orientation_ops(sys, theta, phi)
    dim = sys.dim
    pairs = _pairs(dim)
    mesh = np.linspace(b_lo, b_hi, mesh_points)
    E = _affine_eigvals(H0, Z, np.broadcast_to(mesh, (len(Z), mesh_points)))
    G = E[..., pairs[:, 1]] - E[..., pairs[:, 0]] - mw  # (o, k, pair)
    pos = G >= 0
    cross = pos[:, :-1, :] != pos[:, 1:, :]
    o_idx, k_idx, p_idx = np.nonzero(cross)
    lo = mesh[k_idx].copy()
    hi = mesh[k_idx + 1].copy()
    lo_pos = pos[o_idx, k_idx, p_idx]
    pi_, pj_ = pairs[p_idx, 0], pairs[p_idx, 1]
    Zs = Z[o_idx]
    rows = np.arange(len(o_idx))
    while len(o_idx) and np.max(hi - lo) > tol:
        mid = (lo + hi) / 2
        Em = _affine_eigvals(H0, Zs, mid[:, None])[:, 0]
        gm = Em[rows, pj_] - Em[rows, pi_] - mw
        same = (gm >= 0) == lo_pos
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    Bres = (lo + hi) / 2
    if len(o_idx):
        _, V = np.linalg.eigh(H0[None] + Bres[:, None, None] * Zs)
        M = np.einsum("rai,rab,rbj->rij", V.conj(), P[o_idx], V)
        inten = np.abs(M[rows, pi_, pj_]) ** 2
    else:
        inten = np.zeros(0)
    return o_idx, Bres, inten, pi_, pj_


def resonance_fields(sys: SpinSystem, direction: Orientation, mw_GHz: float,
                     B_range=(0.0, 1.0), mesh_points: int = 2000,
                     tol: float = 1e-7) -> list[Resonance]:
    """Fields in ``B_range`` where a level gap equals the microwave frequency.

    Each transition branch is sampled on a uniform mesh and every sign change of
    ``gap - mw`` is bisected down to ``tol`` tesla.
    """
    b_lo, b_hi = B_range
    if b_lo < 0 or b_hi <= b_lo:
        raise ValueError("invalid field range")
    if mw_GHz <= 0:
        raise ValueError("microwave frequency must be positive")
    o, B, I, i, j = _find_roots(sys, np.array([direction.theta]), np.array([direction.phi]),
                                mw_GHz, b_lo, b_hi, mesh_points, tol)
    order = np.argsort(B, kind="stable")
    return [Resonance(float(B[r]), float(I[r]), int(i[r]), int(j[r])) for r in order]


def _lineshape(x, width, kind):
    if kind == "gaussian":
        return np.exp(-0.5 * (x / width) ** 2)
    if kind == "lorentzian":
        return 1.0 / (1.0 + (x / width) ** 2)
    raise ValueError(f"unknown lineshape {kind!r}")


def _populations(sys, Bres, o_idx, theta, phi, i, j, temperature):
    H0, Z, _ = _orientation_ops(sys, theta[o_idx], phi[o_idx])
    E = eigvalsh_batched(H0[None] + Bres[:, None, None] * Z)
    E = E - E[:, :1]
    boltz = np.exp(-E * _H_OVER_K / temperature)
    boltz /= boltz.sum(axis=1, keepdims=True)
    rows = np.arange(len(Bres))
    return boltz[rows, i] - boltz[rows, j]


def _chunk_spectrum(args):
    (sys, theta, phi, weights, mw, axis, width, lineshape, mesh_points, tol,
     temperature) = args
    margin = (8 if lineshape == "gaussian" else 50) * width
    b_lo = max(0.0, axis[0] - margin)
    b_hi = axis[-1] + margin
    o, B, I, i, j = _find_roots(sys, theta, phi, mw, b_lo, b_hi, mesh_points, tol)
    amp = weights[o] * I
    if temperature is not None and len(o):
        amp = amp * _populations(sys, B, o, theta, phi, i, j, temperature)
    out = np.zeros(len(axis))
    for start in range(0, len(B), 4096):
        sl = slice(start, start + 4096)
        out += amp[sl] @ _lineshape(axis[None, :] - B[sl, None], width, lineshape)
    return out


def echo_detected_spectrum(sys: SpinSystem, grid: OrientationGrid, mw_GHz: float = DEFAULT_MW_GHZ,
                           axis=None, sigma: float = 0.01 / 2.355, *,
                           lineshape: str = "gaussian", mesh_points: int = 2000,
                           tol: float = 1e-7, temperature: float | None = None,
                           normalize: bool = True, n_jobs: int = 1) -> Spectrum:
    """Powder-averaged echo-detected field-swept spectrum.

    ``amplitude(B) = sum_o w_o sum_r I_r L(B - B_r)`` with ``L`` a Gaussian of
    standard deviation ``sigma`` (T) or a Lorentzian of half width ``sigma``.
    Passing ``temperature`` (K) weights each transition by its Boltzmann
    population difference. Orientations are processed in fixed chunks and
    reduced in index order, so the result does not depend on ``n_jobs``.
    """
    axis = np.asarray(axis if axis is not None else np.linspace(0.0, 1.0, 1001), dtype=float)
    if axis.ndim != 1 or len(axis) < 2 or np.any(np.diff(axis) <= 0):
        raise ValueError("field axis must be a 1-d strictly ascending array")
    step = np.diff(axis)
    if np.ptp(step) > 1e-9 * max(abs(axis).max(), 1.0):
        raise ValueError("field axis must be uniform")
    if not sigma > 0:
        raise ValueError("broadening must be positive")
    jobs = [(sys, grid.theta[s:s + _CHUNK], grid.phi[s:s + _CHUNK], grid.weights[s:s + _CHUNK],
             mw_GHz, axis, sigma, lineshape, mesh_points, tol, temperature)
            for s in range(0, len(grid), _CHUNK)]
    if n_jobs == 1:
        partials = list(map(_chunk_spectrum, jobs))
    else:
        with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as ex:
            partials = list(ex.map(_chunk_spectrum, jobs))
    amp = np.zeros(len(axis))
    for part in partials:
        amp += part
    amp = np.maximum(amp, 0.0)
    if normalize and amp.max() > 0:
        amp = amp / amp.max()
    meta = {"mw_GHz": mw_GHz, "grid_scheme": grid.scheme, "grid_n": grid.n,
            "grid_points": len(grid), "sigma_T": sigma, "lineshape": lineshape}
    return Spectrum(axis, amp, meta)

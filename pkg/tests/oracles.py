"""Independent reference implementations used only by the tests.

Nothing here imports the package, so agreement with the package is a real
cross-check rather than a tautology.
"""

from __future__ import annotations

import numpy as np
from scipy import constants

MU_B_OVER_H_GHZ = constants.physical_constants["Bohr magneton in Hz/T"][0] * 1e-9


def spin_matrices(S):
    """Sx, Sy, Sz built from the standard matrix elements (m descending)."""
    m = np.arange(S, -S - 1, -1)
    d = len(m)
    Sz = np.diag(m).astype(complex)
    Sp = np.zeros((d, d), complex)
    for k in range(1, d):
        Sp[k - 1, k] = np.sqrt(S * (S + 1) - m[k] * (m[k] + 1))
    Sx = (Sp + Sp.conj().T) / 2
    Sy = (Sp - Sp.conj().T) / (2j)
    return Sx, Sy, Sz


def histogram_powder_spectrum(S, g, D, E, mw_GHz, axis, sigma, n_theta=40, n_phi=40,
                              mesh_step=0.25e-3, chunk=40):
    """Brute-force field-swept powder spectrum.

    One octant of the sphere is sampled at the midpoints of a grid uniform in
    theta and phi, each point weighted by sin(theta); the zero-field-split
    Hamiltonian makes the other octants equivalent. For each orientation the
    levels are computed with LAPACK on a fixed field mesh, every crossing of
    a level gap with the microwave quantum is located by linear
    interpolation, its transition probability is deposited into a fine
    histogram, and the histogram is finally convolved with a sampled
    Gaussian.
    """
    Sx, Sy, Sz = spin_matrices(S)
    zfs = D * Sz @ Sz + E * (Sx @ Sx - Sy @ Sy)
    lo = max(axis[0] - 8 * sigma, 0.0)
    hi = axis[-1] + 8 * sigma
    mesh = np.arange(lo, hi + mesh_step, mesh_step)
    edges = np.arange(lo - mesh_step / 2, hi + mesh_step, mesh_step)
    centers = (edges[:-1] + edges[1:]) / 2
    hist = np.zeros(len(centers))

    th = (np.arange(n_theta) + 0.5) * (np.pi / 2) / n_theta
    ph = (np.arange(n_phi) + 0.5) * (np.pi / 2) / n_phi
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    TH, PH = TH.ravel(), PH.ravel()
    CT, ST = np.cos(TH), np.sin(TH)
    dirs = np.column_stack([ST * np.cos(PH), ST * np.sin(PH), CT])
    perps = np.column_stack([CT * np.cos(PH), CT * np.sin(PH), -ST])
    d = Sz.shape[0]
    iu, ju = np.triu_indices(d, 1)

    for start in range(0, len(dirs), chunk):
        n = dirs[start:start + chunk]
        Zop = g * MU_B_OVER_H_GHZ * np.einsum("oa,aij->oij", n, np.array([Sx, Sy, Sz]))
        H = zfs[None, None] + mesh[None, :, None, None] * Zop[:, None]
        ev = np.linalg.eigvalsh(H)  # (o, mesh, d)
        gaps = ev[..., ju] - ev[..., iu] - mw_GHz  # (o, mesh, pairs)
        cross = np.nonzero(np.signbit(gaps[:, :-1]) != np.signbit(gaps[:, 1:]))
        if not len(cross[0]):
            continue
        o, k, p = cross
        g0, g1 = gaps[o, k, p], gaps[o, k + 1, p]
        Bres = mesh[k] + mesh_step * g0 / (g0 - g1)
        Hres = zfs[None] + Bres[:, None, None] * Zop[o]
        _, vecs = np.linalg.eigh(Hres)
        P = np.einsum("ra,aij->rij", perps[start:start + chunk][o], np.array([Sx, Sy, Sz]))
        vi = vecs[np.arange(len(o)), :, iu[p]]
        vj = vecs[np.arange(len(o)), :, ju[p]]
        amp = np.abs(np.einsum("ri,rij,rj->r", vi.conj(), P, vj)) ** 2
        idx = np.searchsorted(edges, Bres) - 1
        ok = (idx >= 0) & (idx < len(hist))
        np.add.at(hist, idx[ok], (amp * ST[start:start + chunk][o])[ok])

    half = int(np.ceil(8 * sigma / mesh_step))
    u = np.arange(-half, half + 1) * mesh_step
    kernel = np.exp(-0.5 * (u / sigma) ** 2)
    smooth = np.convolve(hist, kernel, mode="same")
    out = np.interp(axis, centers, smooth)
    return out / np.abs(out).max()

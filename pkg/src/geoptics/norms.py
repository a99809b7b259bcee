"""Discrete norms for singular-type fields U(t, y, x_d, theta_0).

Fields are stored as rfft coefficients in theta_0: shape (nt, ny, nxd, K+1, N)
with row n the coefficient of e^{i n theta_0} of a real field.  The discrete
H^s(x', theta_0) norm uses finite differences in t, spectral derivatives in
the periodic y and theta_0 directions, and sums all mixed derivatives up to
total order s.  The E^s norm combines a sup over x_d of the H^s norm with an
L^2-in-x_d accumulation of the H^(s+1) norm, mirroring the continuous space
C(x_d, H^s) cap L^2(x_d, H^(s+1)).
"""

from __future__ import annotations

import numpy as np

__all__ = ["hs_sq_per_xd", "es_norm", "boundary_norm", "sup_phys", "EsReport"]


def _dt_pow(U: np.ndarray, dt: float, order: int) -> np.ndarray:
    out = U
    for _ in range(order):
        out = np.gradient(out, dt, axis=0)
    return out


def _mixed_weight(ky: np.ndarray, nmodes: int, rem: int) -> np.ndarray:
    """W[ky, n] = sum over by + bth <= rem of ky^(2 by) n^(2 bth)."""
    n = np.arange(nmodes, dtype=float)
    W = np.zeros((ky.size, nmodes))
    for by in range(rem + 1):
        for bth in range(rem + 1 - by):
            W += ((ky**2) ** by)[:, None] * (n ** (2 * bth))[None, :]
    return W


def hs_sq_per_xd(U: np.ndarray, dt: float, dy: float, s: int) -> np.ndarray:
    """Squared discrete H^s(t, y, theta_0) norm per x_d node.

    U has shape (nt, ny, nxd, K+1, N) holding rfft-in-theta coefficients of a
    real field; the returned array has shape (nxd,).
    """
    nt, ny, nxd, K1, N = U.shape
    ky = 2 * np.pi * np.fft.fftfreq(ny, d=dy)
    wmode = np.full(K1, 2.0)
    wmode[0] = 1.0
    meas = dt * dy * 2 * np.pi / ny
    out = np.zeros(nxd)
    for bt in range(s + 1):
        D = _dt_pow(U, dt, bt)
        G = np.fft.fft(D, axis=1)
        W = _mixed_weight(ky, K1, s - bt)  # (ny, K1)
        mag = np.abs(G) ** 2  # (nt, ny, nxd, K1, N)
        out += meas * np.einsum("tyxkc,yk,k->x", mag, W, wmode)
    return out


class EsReport(dict):
    """Norm pieces: sup part, L2 part, and their sum under key 'total'."""


def es_norm(U: np.ndarray, dt: float, dy: float, dxd: float, s: int = 2) -> EsReport:
    """Discrete E^s norm: sup_xd |.|_{H^s} + ( sum_xd dxd |.|^2_{H^{s+1}} )^(1/2)."""
    hs = hs_sq_per_xd(U, dt, dy, s)
    hs1 = hs_sq_per_xd(U, dt, dy, s + 1)
    sup_part = float(np.sqrt(hs.max())) if hs.size else 0.0
    l2_part = float(np.sqrt(np.sum(hs1) * dxd))
    return EsReport(sup=sup_part, l2=l2_part, total=sup_part + l2_part)


def boundary_norm(U: np.ndarray, dt: float, dy: float, s: int = 2) -> float:
    """Discrete H^(s+1)(t, y, theta_0) norm of the trace at x_d = 0.

    Proxy for the boundary norm of the linear estimate; labeled as such in
    reports.
    """
    tr = U[:, :, :1]
    return float(np.sqrt(hs_sq_per_xd(tr, dt, dy, s + 1)[0]))


def sup_phys(U: np.ndarray, n_theta: int | None = None) -> float:
    """L^inf over the grid and theta_0 collocation points of the real field."""
    K1 = U.shape[-2]
    nth = n_theta or max(2 * (K1 - 1), 4)
    buf = np.zeros(U.shape[:-2] + (nth // 2 + 1,) + U.shape[-1:], dtype=complex)
    buf[..., :K1, :] = U
    phys = np.fft.irfft(buf, n=nth, axis=-2) * nth
    return float(np.abs(phys).max())

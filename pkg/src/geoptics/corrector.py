"""Solving L(d_theta) V1 = H on finite trigonometric polynomials.

The operator acts per multi-index as i (n S0 + (alpha . omega) I) with
S0 = A_d(0)^{-1}(tau I + sum eta_j A_j(0)) and n = sum alpha_m, so it is
invertible exactly off the characteristic set.  On a characteristic index
(alpha . phi = n_alpha phi_m) solvability requires the polarization
P_m H_alpha = 0, after which a minimum-norm solve of i Ltilde(dphi_m) W =
H_alpha and V_alpha = W / n_alpha does the job.  No small-divisor assumption
is made: nearly characteristic indices are solved as they come and the
amplification is recorded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NearSingular, NotSolvable
from .grids import Grid
from .modes import ModeTable
from .spectral import TrigPolynomial, project_E, unit_alpha

__all__ = ["solve_corrector", "apply_Ltheta", "truncate_to_polynomial",
           "Ltilde_dx", "CorrectorReport"]


@dataclass
class CorrectorReport:
    max_amplification: float
    n_characteristic: int
    n_direct: int
    residual: float


def _symbol_parts(mt: ModeTable):
    sys = mt.sys
    S0 = sys.Ad0_inv() @ (mt.beta.tau * np.eye(sys.N)
                          + sum(mt.beta.eta[j - 1] * sys.A0(j)
                                for j in range(1, sys.d)))
    omegas = np.asarray(mt.omegas)
    return S0.astype(complex), omegas


def apply_Ltheta(v: TrigPolynomial, mt: ModeTable) -> TrigPolynomial:
    """L(d_theta) V = sum_m Ltilde(dphi_m) d_theta_m V, exactly per index."""
    S0, om = _symbol_parts(mt)
    out = TrigPolynomial(v.M)
    for a, V in sorted(v.terms.items()):
        n = sum(a)
        M = 1j * (n * S0 + complex(np.dot(a, om)) * np.eye(mt.sys.N))
        out.add_term(a, V @ M.T)
    return out.prune()


def solve_corrector(H: TrigPolynomial, mt: ModeTable, tol: float = 1e-10,
                    cond_cap: float | None = None, validate: bool = True):
    """Minimum-norm V1 with L(d_theta) V1 = H for flat-projector-free H.

    Raises NotSolvable when the compatibility E-flat H = 0 fails (mean term
    present, or a characteristic coefficient not annihilated by P_m).  With
    ``cond_cap`` set, a nearly characteristic direct solve raises
    NearSingular instead of being recorded silently.
    """
    S0, om = _symbol_parts(mt)
    N = mt.sys.N
    eye = np.eye(N, dtype=complex)
    pinvs = {m: np.linalg.pinv(1j * (S0 + om[m] * eye)) for m in range(mt.M)}
    out = TrigPolynomial(H.M)
    max_amp, n_char, n_direct = 0.0, 0, 0
    scale = max(np.abs(om).max(), 1.0)
    for a, Ha in sorted(H.terms.items()):
        if np.max(np.abs(Ha)) == 0:
            continue
        n = sum(a)
        val = complex(np.dot(a, om))
        hit = None
        for m in range(mt.M):
            if n != 0 and abs(val - n * om[m]) <= 1e-10 * scale * max(abs(n), 1):
                hit = m
                break
        if not any(a) or (hit is None and n == 0 and abs(val) <= 1e-10 * scale):
            raise NotSolvable(f"mean/null index {a} with nonzero coefficient")
        if hit is not None:
            if validate:
                pol = np.abs(Ha @ mt.P[hit].T).max()
                if pol > tol * max(np.abs(Ha).max(), 1.0):
                    raise NotSolvable(
                        f"characteristic index {a}: P_m H != 0 ({pol:.2e})")
            W = Ha @ pinvs[hit].T
            out.add_term(a, W / n)
            n_char += 1
        else:
            M = 1j * (n * S0 + val * eye)
            cond = np.linalg.cond(M)
            if cond_cap is not None and cond > cond_cap:
                raise NearSingular(f"index {a}: cond {cond:.2e} > {cond_cap:.2e}")
            max_amp = max(max_amp, float(cond))
            out.add_term(a, np.linalg.solve(M, Ha[..., None])[..., 0])
            n_direct += 1
    res = (apply_Ltheta(out, mt) - H).max_abs()
    return out, CorrectorReport(max_amplification=max_amp, n_characteristic=n_char,
                                n_direct=n_direct, residual=float(res))


def truncate_to_polynomial(v: TrigPolynomial, delta: float, s: float = 2.0,
                           weights: float = 1.0) -> TrigPolynomial:
    """Keep the largest-weighted terms until the weighted-l2 tail is < delta.

    The weight of a term is (1 + |alpha|)^s ||V_alpha||; truncation keeps
    single-phase terms intact, so an E-invariant input stays E-invariant.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    items = []
    for a, V in v.terms.items():
        w = (1.0 + np.linalg.norm(a)) ** s * float(np.sqrt(np.sum(np.abs(V) ** 2) * weights))
        items.append((w, a))
    items.sort(key=lambda t: (t[0], t[1]))
    out = v.copy()
    tail2 = 0.0
    for w, a in items:
        if tail2 + w * w < delta * delta:
            tail2 += w * w
            del out.terms[a]
        else:
            break
    return out


def Ltilde_dx(v: TrigPolynomial, mt: ModeTable, grid: Grid) -> TrigPolynomial:
    """Ltilde(d_x) V = Atilde_0 d_t V + Atilde_1 d_y V + d_xd V on grid fields.

    Coefficient fields must have shape (nt, ny, nxd, N); t and x_d use
    second-order finite differences, y is spectral (periodic).
    """
    sys = mt.sys
    Adi = sys.Ad0_inv()
    At0 = Adi.copy()
    At1 = Adi @ sys.A0(1)
    ky = 1j * 2 * np.pi * np.fft.fftfreq(grid.ny, d=grid.dy)

    def op(V):
        dt_V = np.gradient(V, grid.dt, axis=0)
        dy_V = np.fft.ifft(ky[None, :, None, None] * np.fft.fft(V, axis=1), axis=1)
        dx_V = np.gradient(V, grid.dxd, axis=2)
        return dt_V @ At0.T + dy_V @ At1.T + dx_V

    return v.map_fields(op)

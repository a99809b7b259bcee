"""Quasilinear hyperbolic systems at a constant state and their structure checks.

A :class:`SystemSpec` packages the coefficient matrices of a first-order system

    A_0(u) d_t u + sum_j A_j(u) d_{x_j} u = f(u),   A_0 = I,

linearized about a constant base state, together with the boundary operator.
All evaluators act on the *perturbation* v, i.e. ``A[j](v)`` returns the
coefficient matrix at the physical state ``u0 + v``; hence ``A[j](0)`` is the
matrix frozen at the base state.  Evaluators are batched: ``v`` may carry
leading grid axes, shape ``(..., N) -> (..., N, N)``.

The module also hosts the structural checks used before any expansion is
attempted: constant multiplicity / semisimplicity of the spatial symbol,
noncharacteristic boundary, and a sampled uniform (Kreiss-type) stability
margin via the stable subspace of the boundary-symbol matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    CharacteristicBoundary,
    GlancingOrSingular,
    MultiplicityDrift,
    NotSemisimple,
    StabilityFail,
)

__all__ = [
    "FrequencyPoint",
    "SystemSpec",
    "euler2d",
    "euler3d",
    "advection2d",
    "constant_system",
    "check_constant_multiplicity",
    "check_noncharacteristic",
    "stable_subspace",
    "check_uniform_stability",
    "cluster_values",
]

_FD_STEP = 1e-6


@dataclass(frozen=True)
class FrequencyPoint:
    """A dual frequency zeta = (tau - i gamma, eta) with gamma >= 0."""

    tau: float
    gamma: float
    eta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eta", np.atleast_1d(np.asarray(self.eta, float)))
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.tau == 0 and self.gamma == 0 and not np.any(self.eta):
            raise ValueError("zeta = 0 is excluded")

    @property
    def tau_c(self) -> complex:
        return self.tau - 1j * self.gamma

    def norm(self) -> float:
        return float(np.sqrt(self.tau**2 + self.gamma**2 + self.eta @ self.eta))


@dataclass
class SystemSpec:
    """A quasilinear system linearized about a constant state.

    Attributes
    ----------
    N, d : int
        State dimension and number of space dimensions.
    A : list of callables, length d+1
        ``A[j](v)`` is the coefficient of ``d_{x_j}`` at state ``u0 + v``
        (j = 0 is time, j = d is the normal direction).  ``A[0]`` must be
        the identity.
    dA : list of callables, length d+1
        ``dA[j](v, w)`` is the directional derivative of ``A[j]`` at ``u0+v``
        in direction ``w``.  ``None`` entries fall back to central finite
        differences with step 1e-6.
    Fsrc : callable
        ``Fsrc(v)`` is the N x N matrix with ``Fsrc(v) (u0+v) = f(u0+v)``
        (physical source factorization); identically zero for Euler.
    Bbnd : callable
        ``Bbnd(v)`` is the p x N boundary matrix at state ``u0 + v``.
    p : int
        Number of scalar boundary conditions.
    u0 : ndarray
        Base state, kept for reference (evaluators already absorb it).
    """

    N: int
    d: int
    A: list
    dA: list
    Fsrc: Callable[[np.ndarray], np.ndarray]
    Bbnd: Callable[[np.ndarray], np.ndarray]
    p: int
    u0: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        self.u0 = np.asarray(self.u0, float)
        zero = np.zeros(self.N)
        A0 = self.A[0](zero)
        if not np.allclose(A0, np.eye(self.N), atol=1e-12):
            raise ValueError("A_0 must be the identity")
        for j in range(self.d + 1):
            if self.dA[j] is None:
                self.dA[j] = _fd_derivative(self.A[j])

    # -- frozen-coefficient conveniences -------------------------------------------------

    def A0(self, j: int) -> np.ndarray:
        """A_j at the base state."""
        return np.asarray(self.A[j](np.zeros(self.N)), float)

    def Ad0(self) -> np.ndarray:
        return self.A0(self.d)

    def Ad0_inv(self) -> np.ndarray:
        return np.linalg.inv(self.Ad0())

    def B0(self) -> np.ndarray:
        return np.asarray(self.Bbnd(np.zeros(self.N)), float).reshape(self.p, self.N)

    def F0(self) -> np.ndarray:
        """Linearized source in the normal-form scaling A_d(0)^{-1} f'(u0)."""
        return self.Ad0_inv() @ self.Fsrc(np.zeros(self.N))

    def dA0(self, j: int, w: np.ndarray) -> np.ndarray:
        """Directional derivative of A_j at the base state."""
        return np.asarray(self.dA[j](np.zeros(self.N), np.asarray(w)), complex)

    def dAtilde0(self, j: int, w: np.ndarray) -> np.ndarray:
        """Directional derivative of A_d^{-1} A_j at the base state.

        d(A_d^{-1} A_j)[w] = A_d^{-1} dA_j[w] - A_d^{-1} dA_d[w] A_d^{-1} A_j.
        """
        Adi = self.Ad0_inv()
        out = Adi @ self.dA0(j, w)
        out -= Adi @ self.dA0(self.d, w) @ Adi @ self.A0(j)
        return out

    def dAtilde0_tensor(self, j: int) -> np.ndarray:
        """3-tensor D with D[:, :, c] = d(A_d^{-1} A_j)(0)[e_c].

        Lets batched directional derivatives be taken as a single einsum:
        dAtilde0[w] = einsum('abc,...c->...ab', D, w).
        """
        D = np.empty((self.N, self.N, self.N), dtype=complex)
        for c in range(self.N):
            e = np.zeros(self.N)
            e[c] = 1.0
            D[:, :, c] = self.dAtilde0(j, e)
        if np.abs(D.imag).max() == 0:
            D = D.real
        return D

    def spatial_symbol(self, v: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """sum_j xi_j A_j(u0 + v) over the d space directions (batched in v)."""
        xi = np.asarray(xi)
        out = xi[0] * np.asarray(self.A[1](v))
        for j in range(2, self.d + 1):
            out = out + xi[j - 1] * np.asarray(self.A[j](v))
        return out

    def boundary_symbol(self, zeta: FrequencyPoint) -> np.ndarray:
        """A(zeta) = -i A_d(0)^{-1} (tau_c I + sum_j eta_j A_j(0))."""
        M = self.tangential_symbol(zeta.tau_c, zeta.eta)
        return -1j * (self.Ad0_inv() @ M)

    def tangential_symbol(self, tau_c: complex, eta: np.ndarray) -> np.ndarray:
        M = tau_c * np.eye(self.N, dtype=complex)
        for j in range(1, self.d):
            M = M + eta[j - 1] * self.A0(j)
        return M


def _fd_derivative(Aj):
    def deriv(v, w, _Aj=Aj):
        v = np.asarray(v, float)
        w = np.asarray(w)
        h = _FD_STEP
        if np.iscomplexobj(w):
            re = (np.asarray(_Aj(v + h * w.real)) - np.asarray(_Aj(v - h * w.real))) / (2 * h)
            im = (np.asarray(_Aj(v + h * w.imag)) - np.asarray(_Aj(v - h * w.imag))) / (2 * h)
            return re + 1j * im
        return (np.asarray(_Aj(v + h * w)) - np.asarray(_Aj(v - h * w))) / (2 * h)

    return deriv


# ---------------------------------------------------------------------------
# Built-in systems
# ---------------------------------------------------------------------------


def _euler_matrices(d: int, K: float, gamma_exp: float, base: np.ndarray):
    """Batched coefficient evaluators for isentropic Euler in primitive variables.

    State w = (rho, u_1, ..., u_d); sound speed c^2 = p'(rho) = K g rho^(g-1).
    """
    N = d + 1
    base = np.asarray(base, float)

    def c2(rho):
        return K * gamma_exp * rho ** (gamma_exp - 1.0)

    def make_A(j):
        def A(v, _j=j):
            v = np.asarray(v)
            w = base + v
            rho = w[..., 0]
            uj = w[..., _j]
            out = np.zeros(w.shape[:-1] + (N, N), dtype=w.dtype)
            idx = np.arange(N)
            out[..., idx, idx] = uj[..., None]
            out[..., 0, _j] = rho
            out[..., _j, 0] = c2(rho) / rho
            return out

        return A

    def make_dA(j):
        def dA(v, wdir, _j=j):
            v = np.asarray(v)
            wdir = np.asarray(wdir)
            w = base + v
            rho = w[..., 0]
            drho = wdir[..., 0]
            duj = wdir[..., _j]
            dt = np.result_type(w.dtype, wdir.dtype)
            out = np.zeros(np.broadcast(rho, drho).shape + (N, N), dtype=dt)
            idx = np.arange(N)
            out[..., idx, idx] = duj[..., None]
            out[..., 0, _j] = drho
            # d/drho (c^2/rho) = K g (g-2) rho^(g-3)
            out[..., _j, 0] = K * gamma_exp * (gamma_exp - 2.0) * rho ** (gamma_exp - 3.0) * drho
            return out

        return dA

    def A0(v):
        v = np.asarray(v)
        out = np.zeros(v.shape[:-1] + (N, N), dtype=v.dtype)
        idx = np.arange(N)
        out[..., idx, idx] = 1.0
        return out

    A = [A0] + [make_A(j) for j in range(1, d + 1)]
    dA = [lambda v, w: np.zeros(np.asarray(w).shape[:-1] + (N, N),
                                dtype=np.asarray(w).dtype)] + [make_dA(j) for j in range(1, d + 1)]
    return A, dA, c2


def _euler_boundary(d: int, base: np.ndarray, c0: float):
    """Boundary operator B(v) for the four Euler inflow/outflow regimes.

    Returns (p, Bbnd).  B(v) is defined by B(v) v = b(u0+v) - b(u0) for the
    regime's boundary function b; for our b choices B is constant except in
    the subsonic-inflow case where b_1 = rho u_d is quadratic.
    """
    N = d + 1
    ud = base[d]
    if ud < 0 and abs(ud) < c0:  # subsonic outflow: b = u_d
        p = 1
        row = np.zeros(N)
        row[d] = 1.0

        def B(v, _row=row):
            v = np.asarray(v)
            return np.broadcast_to(_row, v.shape[:-1] + (1, N)).copy()

    elif 0 < ud < c0:  # subsonic inflow: b = (rho u_d, u_1, .., u_{d-1})
        p = d
        rho0 = base[0]

        def B(v):
            v = np.asarray(v)
            out = np.zeros(v.shape[:-1] + (p, N), dtype=v.dtype)
            # (rho0+vr)(ud+vd) - rho0 ud = ud vr + rho0 vd + vr vd
            out[..., 0, 0] = ud + v[..., d]
            out[..., 0, d] = rho0
            for j in range(1, d):
                out[..., j, j] = 1.0
            return out

    elif ud > c0:  # supersonic inflow: all components prescribed
        p = N

        def B(v):
            v = np.asarray(v)
            out = np.zeros(v.shape[:-1] + (N, N), dtype=v.dtype)
            idx = np.arange(N)
            out[..., idx, idx] = 1.0
            return out

    else:  # supersonic outflow: no boundary condition
        p = 0

        def B(v):
            v = np.asarray(v)
            return np.zeros(v.shape[:-1] + (0, N), dtype=v.dtype)

    return p, B


def _euler(d, K, gamma_exp, base, label):
    base = np.asarray(base, float)
    if base.shape != (d + 1,):
        raise ValueError(f"base state must have length {d + 1}")
    rho0 = base[0]
    if rho0 <= 0 or K * gamma_exp <= 0:
        raise ValueError("need rho > 0 and p'(rho) > 0")
    c0 = float(np.sqrt(K * gamma_exp * rho0 ** (gamma_exp - 1.0)))
    if base[d] in (0.0, c0, -c0):
        raise ValueError("boundary must be noncharacteristic: u_d not in {0, +-c}")
    A, dA, _ = _euler_matrices(d, K, gamma_exp, base)
    p, B = _euler_boundary(d, base, c0)
    N = d + 1

    def Fsrc(v):
        v = np.asarray(v)
        return np.zeros(v.shape[:-1] + (N, N), dtype=v.dtype)

    return SystemSpec(N=N, d=d, A=A, dA=dA, Fsrc=Fsrc, Bbnd=B, p=p, u0=base, label=label)


def euler2d(K=0.5, gamma_exp=2.0, base=(1.0, 0.5, -0.4)) -> SystemSpec:
    """2D isentropic Euler in primitive variables (rho, u1, u2).

    Defaults give c = 1 at rho = 1 with a subsonic-outflow base state.
    """
    return _euler(2, K, gamma_exp, np.asarray(base, float), "euler2d")


def euler3d(K=0.5, gamma_exp=2.0, base=(1.0, 0.1, 0.2, -0.3)) -> SystemSpec:
    """3D isentropic Euler in primitive variables (rho, u1, u2, u3)."""
    return _euler(3, K, gamma_exp, np.asarray(base, float), "euler3d")


def advection2d(a=1.0, b=0.7) -> SystemSpec:
    """Scalar advection d_t u + a d_x1 u + b d_x2 u = 0 (N = 1)."""
    if b == 0:
        raise ValueError("normal speed must be nonzero")

    def mat(c):
        def f(v, _c=c):
            v = np.asarray(v)
            return np.full(v.shape[:-1] + (1, 1), _c, dtype=v.dtype)

        return f

    def dz(v, w):
        w = np.asarray(w)
        return np.zeros(w.shape[:-1] + (1, 1), dtype=w.dtype)

    p = 1 if b > 0 else 0

    def B(v):
        v = np.asarray(v)
        return np.ones(v.shape[:-1] + (p, 1), dtype=v.dtype)

    return SystemSpec(N=1, d=2, A=[mat(1.0), mat(a), mat(b)], dA=[dz, dz, dz],
                      Fsrc=lambda v: np.zeros(np.asarray(v).shape[:-1] + (1, 1)),
                      Bbnd=B, p=p, u0=np.zeros(1), label="advection2d")


def constant_system(mats: Sequence[np.ndarray], B0: np.ndarray,
                    F0_phys: np.ndarray | None = None, label="custom") -> SystemSpec:
    """A linear constant-coefficient system from explicit matrices A_1..A_d."""
    mats = [np.asarray(M, float) for M in mats]
    N = mats[0].shape[0]
    d = len(mats)
    B0 = np.asarray(B0, float).reshape(-1, N)
    p = B0.shape[0]
    F0_phys = np.zeros((N, N)) if F0_phys is None else np.asarray(F0_phys, float)

    def const(M):
        def f(v, _M=M):
            v = np.asarray(v)
            return np.broadcast_to(_M, v.shape[:-1] + (N, N)).copy()

        return f

    def dz(v, w):
        w = np.asarray(w)
        return np.zeros(w.shape[:-1] + (N, N), dtype=w.dtype)

    return SystemSpec(N=N, d=d, A=[const(np.eye(N))] + [const(M) for M in mats],
                      dA=[dz] * (d + 1), Fsrc=const(F0_phys), Bbnd=const(B0),
                      p=p, u0=np.zeros(N), label=label)


# ---------------------------------------------------------------------------
# Structure checks
# ---------------------------------------------------------------------------


def cluster_values(vals: np.ndarray, rtol: float = 1e-8):
    """Group nearby complex values; returns (centers, multiplicities, groups).

    Tolerance is relative to the largest modulus in ``vals``.  Output is
    ordered by (Re, Im) of the cluster centers for determinism.
    """
    vals = np.asarray(vals)
    scale = max(np.abs(vals).max(), 1.0)
    tol = rtol * scale
    order = np.lexsort((vals.imag, vals.real))
    groups: list[list[int]] = []
    for i in order:
        for g in groups:
            if abs(vals[i] - vals[g[0]]) <= 10 * tol and abs(vals[i] - np.mean(vals[g])) <= 10 * tol:
                g.append(i)
                break
        else:
            groups.append([i])
    centers = np.array([np.mean(vals[g]) for g in groups])
    mults = np.array([len(g) for g in groups])
    return centers, mults, groups


def _numeric_rank(M: np.ndarray, rtol: float = 1e-8) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def check_constant_multiplicity(sys: SystemSpec, samples, rtol: float = 1e-8,
                                raise_on_fail: bool = True) -> dict:
    """Verify the spatial symbol has a constant, semisimple multiplicity pattern.

    ``samples`` is an iterable of (u, xi) pairs with u a perturbation near 0
    and xi a nonzero direction.  Returns a report dict with the pattern
    (nu_1, ..., nu_q) sorted by eigenvalue and a pass flag.
    """
    pattern = None
    records = []
    ok = True
    for u, xi in samples:
        u = np.asarray(u, float)
        xi = np.asarray(xi, float)
        if not np.any(xi):
            raise ValueError("xi must be nonzero")
        M = sys.spatial_symbol(u, xi)
        vals = np.linalg.eigvals(M)
        if np.abs(vals.imag).max() > rtol * max(np.abs(vals).max(), 1.0):
            ok = False
            if raise_on_fail:
                raise NotSemisimple("complex eigenvalues: symbol not hyperbolic-diagonalizable")
        centers, mults, _ = cluster_values(vals.real.astype(complex), rtol)
        this = tuple(int(m) for m in mults)
        semis = []
        for lam, mu in zip(centers, mults):
            r = _numeric_rank(M - lam.real * np.eye(sys.N), rtol)
            semis.append(r == sys.N - mu)
            if r != sys.N - mu:
                ok = False
                if raise_on_fail:
                    raise NotSemisimple(
                        f"eigenvalue {lam.real:.6g} at xi={xi} has geometric mult "
                        f"{sys.N - r} < algebraic {mu}")
        records.append({"xi": xi.tolist(), "eigs": np.sort(vals.real).tolist(),
                        "mults": list(this), "semisimple": all(semis)})
        if pattern is None:
            pattern = this
        elif this != pattern:
            ok = False
            if raise_on_fail:
                raise MultiplicityDrift(f"pattern {this} != {pattern} at xi={xi}")
    return {"q": len(pattern) if pattern else 0, "multiplicities": list(pattern or ()),
            "samples": records, "pass": ok}


def check_noncharacteristic(sys: SystemSpec, det_rtol: float = 1e-10,
                            raise_on_fail: bool = True) -> dict:
    """Assumption: A_d(0) invertible and rank B(0) = p = #positive eigenvalues."""
    Ad = sys.Ad0()
    vals = np.linalg.eigvals(Ad)
    scale = max(np.abs(vals).max(), 1.0)
    invertible = np.abs(vals).min() > det_rtol * scale
    if not invertible and raise_on_fail:
        raise CharacteristicBoundary("A_d(0) is singular within tolerance")
    npos = int(np.sum(vals.real > 0))
    B0 = sys.B0()
    rank = _numeric_rank(B0) if sys.p else 0
    ok = invertible and rank == sys.p and sys.p == npos
    return {"eigenvalues": np.sort(vals.real).tolist(), "positive_count": npos,
            "p": sys.p, "rank_B0": rank, "pass": bool(ok)}


def stable_subspace(sys: SystemSpec, zeta: FrequencyPoint, axis_tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis (N x p) of the stable subspace E^s(zeta) of A(zeta).

    For gamma > 0 this is the invariant subspace for eigenvalues with negative
    real part, computed from an ordered Schur decomposition.  For gamma = 0 it
    is the continuous extension: the span of Ker L(dphi_m) over incoming and
    positive-imaginary modes, which requires the frequency to be regular.
    """
    if zeta.gamma > 0:
        M = sys.boundary_symbol(zeta)
        scale = max(np.abs(np.linalg.eigvals(M)).max(), 1.0)
        T, Z, sdim = scipy.linalg.schur(
            M, output="complex", sort=lambda lam: lam.real < 0)
        diag = np.diag(T)
        if np.any(np.abs(diag.real) <= axis_tol * scale):
            raise GlancingOrSingular(
                f"eigenvalue within {axis_tol} of the imaginary axis at zeta={zeta}")
        if sdim != sys.p:
            raise GlancingOrSingular(
                f"stable dimension {sdim} != p = {sys.p} at zeta={zeta}")
        return Z[:, :sdim]
    # gamma = 0: continuous extension via the mode decomposition
    from .modes import BoundaryFrequency, compute_modes

    beta = np.concatenate(([zeta.tau], zeta.eta))
    mt = compute_modes(sys, BoundaryFrequency(beta))
    cols = []
    for m in mt.incoming + mt.plus:
        for k in range(mt.mults[m]):
            cols.append(mt.r[m][:, k])
    if not cols:
        return np.zeros((sys.N, 0), dtype=complex)
    Q, _ = np.linalg.qr(np.column_stack(cols))
    return Q


def _hemisphere_samples(dim: int, n: int, gamma_floor: float = 0.0):
    """Deterministic quasi-uniform points on the unit hemisphere {gamma >= 0}.

    dim is the total number of coordinates (tau, gamma, eta...).  For dim = 3
    a Fibonacci spiral is used; higher dims fall back to a Halton sequence
    pushed through the inverse normal CDF and normalized.
    """
    if dim == 3:
        golden = (1 + np.sqrt(5.0)) / 2
        i = np.arange(n)
        gamma = (i + 0.5) / n  # z-coordinate in [0,1): hemisphere
        r = np.sqrt(1 - gamma**2)
        phi = 2 * np.pi * np.mod(i / golden, 1.0)
        return np.column_stack([r * np.cos(phi), gamma, r * np.sin(phi)])
    from scipy.stats import norm, qmc

    eng = qmc.Halton(d=dim, scramble=False)
    pts = eng.random(n + 1)[1:]  # drop the origin point
    g = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    g[:, 1] = np.abs(g[:, 1])
    return g


def check_uniform_stability(sys: SystemSpec, n_samples: int = 200,
                            margin: float = 1e-3, glancing_zone: float = 1e-2,
                            raise_on_fail: bool = True) -> dict:
    """Sampled uniform-stability margin min sigma_min(B(0)|_{E^s(zeta)}) over Sigma.

    Samples a quasi-uniform grid on the unit hemisphere of frequencies,
    skipping a neighborhood of glancing points near gamma = 0, and evaluates
    the smallest singular value of B(0) restricted to an orthonormal basis of
    the stable subspace.  Vacuous pass when p = 0.
    """
    if sys.p == 0:
        return {"p": 0, "min_sigma": None, "n_used": 0, "pass": True, "vacuous": True}
    B0 = sys.B0()
    pts = _hemisphere_samples(sys.d + 1, n_samples)
    worst = np.inf
    worst_pt = None
    used = 0
    for row in pts:
        tau, gamma, eta = float(row[0]), float(row[1]), row[2:]
        if gamma < glancing_zone:
            # too close to the real boundary of Sigma: only keep the sample if
            # the nearby real frequency is safely non-glancing
            try:
                if _near_glancing(sys, tau, eta, glancing_zone):
                    continue
            except Exception:
                continue
            gamma = max(gamma, 1e-6)
        zeta = FrequencyPoint(tau, gamma, eta)
        try:
            Q = stable_subspace(sys, zeta)
        except GlancingOrSingular:
            continue
        s = np.linalg.svd(B0 @ Q, compute_uv=False)
        used += 1
        smin = s.min() if s.size else 0.0
        if smin < worst:
            worst, worst_pt = smin, (tau, gamma, eta.tolist())
    ok = used > 0 and worst > margin
    if not ok and raise_on_fail:
        raise StabilityFail(f"margin {worst:.3e} <= {margin} at zeta={worst_pt}")
    return {"p": sys.p, "min_sigma": float(worst), "n_used": used,
            "worst_zeta": worst_pt, "pass": bool(ok), "vacuous": False}


def _near_glancing(sys: SystemSpec, tau: float, eta: np.ndarray, zone: float) -> bool:
    """True if some real normal mode at (tau, eta) has |d_xi_d lambda| < zone."""
    from .modes import BoundaryFrequency, compute_modes

    beta = np.concatenate(([tau], eta))
    if np.linalg.norm(beta) < 1e-12:
        return True
    try:
        mt = compute_modes(sys, BoundaryFrequency(beta), check_regularity=False)
    except Exception:
        return True
    for m in mt.incoming + mt.outgoing:
        if abs(mt.dlam_dxid[m]) < zone:
            return True
    return False

"""Mode decomposition of the boundary symbol at a fixed boundary frequency.

For a frequency ``beta = (tau, eta)`` the matrix ``(1/i) A(beta) =
-A_d(0)^{-1} (tau I + sum_j eta_j A_j(0))`` has eigenvalues ``omega_m`` that
define the planar phases ``phi_m = beta . x' + omega_m x_d``.  This module
clusters those eigenvalues, verifies they are semisimple with locally
constant multiplicity (the frequency is then *regular*), classifies each
phase as incoming / outgoing (real, by the sign of the normal group
velocity) or as an exponentially decaying / growing elliptic mode (by the
sign of Im omega), and assembles the right/left bases and projectors of the
direct-sum decomposition of C^N into the kernels Ker L(dphi_m).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateBasis,
    GlancingMode,
    IrregularFrequency,
    NotHyperbolicMode,
    NotSemisimple,
)
from .systems import SystemSpec, cluster_values

__all__ = ["BoundaryFrequency", "ModeTable", "compute_modes", "group_velocity",
           "boundary_basis_check"]

CLASS_INCOMING = "I"
CLASS_OUTGOING = "O"
CLASS_PLUS = "P"
CLASS_MINUS = "N"


@dataclass(frozen=True)
class BoundaryFrequency:
    """A nonzero real boundary frequency beta = (tau, eta) in R^d."""

    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, float)))
        if not np.any(self.beta):
            raise ValueError("beta must be nonzero")

    @property
    def tau(self) -> float:
        return float(self.beta[0])

    @property
    def eta(self) -> np.ndarray:
        return self.beta[1:]


@dataclass
class ModeTable:
    """Eigenstructure of (1/i) A(beta): one entry per distinct omega_m.

    r[m] is an N x mu_m matrix of right basis vectors of Ker L(dphi_m)
    (real for hyperbolic modes), l[m] the mu_m x N matrix of left vectors
    biorthogonal across the whole table without conjugation, P[m] the
    associated projector, and xcoeff[m] the length-d vector of tangential
    coefficients of the characteristic field X_phi ( = -d_zeta omega_m ),
    so X_phi = d_{x_d} + sum_j xcoeff[m][j] d_{x_j}.
    """

    sys: SystemSpec
    beta: BoundaryFrequency
    omegas: list
    mults: list
    classes: list
    r: list
    l: list
    P: list
    xcoeff: list
    kmap: dict
    dlam_dxid: dict
    v: dict
    conj_pair: dict

    @property
    def M(self) -> int:
        return len(self.omegas)

    def _by_class(self, *labels):
        return [m for m, c in enumerate(self.classes) if c in labels]

    @property
    def incoming(self):
        return self._by_class(CLASS_INCOMING)

    @property
    def outgoing(self):
        return self._by_class(CLASS_OUTGOING)

    @property
    def plus(self):
        return self._by_class(CLASS_PLUS)

    @property
    def minus(self):
        return self._by_class(CLASS_MINUS)

    @property
    def hyperbolic(self):
        return self._by_class(CLASS_INCOMING, CLASS_OUTGOING)

    @property
    def elliptic(self):
        return self._by_class(CLASS_PLUS, CLASS_MINUS)

    def zsign(self, m: int) -> int:
        """Sign constraint of the spectrum lattice Z_m: 0 / +1 / -1."""
        c = self.classes[m]
        return 0 if c in (CLASS_INCOMING, CLASS_OUTGOING) else (1 if c == CLASS_PLUS else -1)

    def is_hyperbolic(self, m: int) -> bool:
        return self.zsign(m) == 0

    def symbol_L(self, m: int) -> np.ndarray:
        """L(dphi_m) = tau I + sum_j eta_j A_j(0) + omega_m A_d(0)."""
        sys = self.sys
        M = self.beta.tau * np.eye(sys.N, dtype=complex)
        for j in range(1, sys.d):
            M = M + self.beta.eta[j - 1] * sys.A0(j)
        return M + self.omegas[m] * sys.Ad0()

    def to_report(self) -> dict:
        """JSON-serializable summary."""
        def c2l(z):
            return [float(np.real(z)), float(np.imag(z))]

        return {
            "beta": self.beta.beta.tolist(),
            "M": self.M,
            "omegas": [c2l(w) for w in self.omegas],
            "multiplicities": [int(mu) for mu in self.mults],
            "classes": list(self.classes),
            "kmap": {str(m): int(k) for m, k in self.kmap.items()},
            "normal_group_speed": {str(m): float(g) for m, g in self.dlam_dxid.items()},
            "group_velocity": {str(m): np.asarray(v).tolist() for m, v in self.v.items()},
            "conjugate_pairs": {str(m): int(mm) for m, mm in self.conj_pair.items()},
        }


def _spectral_projectors(M: np.ndarray, rtol: float = 1e-8):
    """Cluster eig of M; return (centers, mults, projectors P_m with sum = I)."""
    vals, vecs = np.linalg.eig(M)
    centers, mults, groups = cluster_values(vals, rtol)
    vinv = np.linalg.inv(vecs)
    projs = [vecs[:, g] @ vinv[g, :] for g in groups]
    return centers, mults, projs


def _nullspace(M: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    u, s, vh = np.linalg.svd(M)
    tol = rtol * (s[0] if s.size and s[0] > 0 else 1.0)
    null_mask = s <= tol
    k = int(np.sum(null_mask)) + (M.shape[1] - s.size)
    return vh[vh.shape[0] - k:].conj().T if k else np.zeros((M.shape[1], 0))


def _fix_basis(V: np.ndarray, make_real: bool) -> np.ndarray:
    """Deterministic phase and ordering for basis columns.

    Each column is rotated so its largest-modulus entry is real positive;
    columns are then sorted by descending |leading entries| lexicographically.
    """
    if V.shape[1] == 0:
        return V
    if make_real:
        V = np.real_if_close(V, tol=1e6)
        if np.iscomplexobj(V):
            # realify: real/imag parts re-orthogonalized
            W = np.hstack([V.real, V.imag])
            q, r = np.linalg.qr(W)
            keep = np.abs(np.diag(r)) > 1e-10 * max(np.abs(np.diag(r)).max(), 1.0)
            V = q[:, : V.shape[1]] if keep.sum() < V.shape[1] else q[:, keep][:, : V.shape[1]]
    cols = []
    for k in range(V.shape[1]):
        v = V[:, k] / np.linalg.norm(V[:, k])
        piv = int(np.argmax(np.abs(v)))
        phase = v[piv] / abs(v[piv])
        cols.append(np.real(v / phase) if make_real else v / phase)
    key = sorted(range(len(cols)),
                 key=lambda k: tuple(-np.round(np.abs(cols[k]), 12)))
    out = np.column_stack([cols[k] for k in key])
    return out.astype(float) if make_real else out


def _branch_index(sys: SystemSpec, xi: np.ndarray, target: float, rtol: float = 1e-8):
    """Index (ascending) of the eigenvalue branch with lambda_k(xi) = target."""
    M = sys.spatial_symbol(np.zeros(sys.N), xi)
    centers, mults, projs = _spectral_projectors(M, rtol)
    lams = centers.real
    order = np.argsort(lams)
    scale = max(np.abs(lams).max(), 1.0)
    for rank, idx in enumerate(order):
        if abs(lams[idx] - target) <= 1e-8 * scale + rtol * scale:
            return rank, lams[order], mults[order], projs[idx], int(mults[idx])
    raise NotSemisimple(f"no eigenvalue branch matches {target} at xi={xi}")


def compute_modes(sys: SystemSpec, beta: BoundaryFrequency, rtol: float = 1e-8,
                  glancing_tol: float = 1e-6, check_regularity: bool = True,
                  n_perturb: int = 4) -> ModeTable:
    """Cluster and classify the modes omega_m of (1/i) A(beta).

    Raises GlancingMode if a real mode has |d_{xi_d} lambda| below tolerance,
    NotSemisimple on rank-deficient clusters, and IrregularFrequency when the
    multiplicity pattern is not stable under small sampled perturbations of
    beta (including a small complexification of tau).
    """
    S = _one_over_i_A(sys, beta.tau + 0j, beta.eta)
    centers, mults, projs = _spectral_projectors(S, rtol)
    scale = max(np.abs(centers).max(), 1.0)

    # semisimplicity of every cluster
    for w, mu in zip(centers, mults):
        s = np.linalg.svd(S - w * np.eye(sys.N), compute_uv=False)
        if int(np.sum(s > rtol * s[0])) != sys.N - mu:
            raise NotSemisimple(f"omega = {w:.6g} is defective")

    if check_regularity:
        _check_locally_constant(sys, beta, sorted(int(m) for m in mults), rtol)

    Adi = sys.Ad0_inv()
    omegas, classes, rs, kmap, dlam, gvel, xcoeffs = [], [], [], {}, {}, {}, []
    real_mask = np.abs(centers.imag) <= 1e3 * rtol * scale
    for i, (w, mu, P) in enumerate(zip(centers, mults, projs)):
        if real_mask[i]:
            w = complex(w.real)
            xi = np.concatenate([beta.eta, [w.real]])
            k_m, lams, branch_mults, Pk, nu = _branch_index(sys, xi, -beta.tau, rtol)
            if nu != mu:
                raise IrregularFrequency(
                    f"mode multiplicity {mu} != branch multiplicity {nu}")
            grad = np.array([np.trace(Pk @ sys.A0(j)).real / nu
                             for j in range(1, sys.d + 1)])
            if abs(grad[-1]) < glancing_tol:
                raise GlancingMode(f"|d_xi_d lambda| = {abs(grad[-1]):.2e} at omega={w.real:.6g}")
            cls = CLASS_INCOMING if grad[-1] > 0 else CLASS_OUTGOING
            kmap[len(omegas)] = k_m
            dlam[len(omegas)] = float(grad[-1])
            gvel[len(omegas)] = grad
        else:
            cls = CLASS_PLUS if w.imag > 0 else CLASS_MINUS
        # tangential coefficients of X_phi: -d_zeta omega = tr(P Ad^-1 A_j)/mu
        cj = [np.trace(P @ Adi) / mu]
        for j in range(1, sys.d):
            cj.append(np.trace(P @ Adi @ sys.A0(j)) / mu)
        xc = np.array(cj)
        if real_mask[i]:
            xc = xc.real
        omegas.append(w)
        classes.append(cls)
        xcoeffs.append(xc)
        rs.append(None)  # filled below

    # right bases from the kernels of L(dphi_m)
    mt = ModeTable(sys=sys, beta=beta, omegas=omegas, mults=[int(m) for m in mults],
                   classes=classes, r=rs, l=[None] * len(omegas), P=[None] * len(omegas),
                   xcoeff=xcoeffs, kmap=kmap, dlam_dxid=dlam, v=gvel, conj_pair={})
    for m in range(mt.M):
        V = _nullspace(mt.symbol_L(m))
        if V.shape[1] != mt.mults[m]:
            raise NotSemisimple(
                f"Ker L(dphi_{m}) has dimension {V.shape[1]}, expected {mt.mults[m]}")
        mt.r[m] = _fix_basis(V, make_real=mt.is_hyperbolic(m))

    # left bases: rows of the inverse of the stacked right basis, so that
    # l_{m,k} . r_{m',k'} = delta delta without conjugation
    R = np.column_stack([mt.r[m] for m in range(mt.M)]).astype(complex)
    L = np.linalg.inv(R)
    pos = 0
    for m in range(mt.M):
        mu = mt.mults[m]
        mt.l[m] = L[pos:pos + mu, :]
        mt.P[m] = mt.r[m].astype(complex) @ mt.l[m]
        pos += mu

    # conjugate pairing P <-> N
    for m in mt.plus:
        match = [mm for mm in mt.minus
                 if abs(np.conj(mt.omegas[m]) - mt.omegas[mm]) <= 1e3 * rtol * scale]
        if len(match) != 1:
            raise IrregularFrequency("conjugate partner of an elliptic mode not found")
        mt.conj_pair[m] = match[0]
        mt.conj_pair[match[0]] = m
    return mt


def _one_over_i_A(sys: SystemSpec, tau_c: complex, eta: np.ndarray) -> np.ndarray:
    return -(sys.Ad0_inv() @ sys.tangential_symbol(tau_c, eta))


def _check_locally_constant(sys, beta, pattern, rtol):
    rng = np.random.default_rng(20240 + len(pattern))
    scale = np.linalg.norm(beta.beta)
    for _ in range(4):
        db = rng.standard_normal(sys.d)
        db *= 1e-4 * scale / np.linalg.norm(db)
        gamma = 1e-4 * scale * abs(rng.standard_normal())
        S = _one_over_i_A(sys, beta.tau + db[0] - 1j * gamma,
                          beta.eta + db[1:])
        _, mults, _ = cluster_values(np.linalg.eigvals(S), rtol)
        if sorted(int(m) for m in mults) != pattern:
            raise IrregularFrequency(
                f"multiplicity pattern drifts under perturbation: "
                f"{sorted(int(m) for m in mults)} != {pattern}")


def group_velocity(mt: ModeTable, m: int) -> np.ndarray:
    """Real group velocity grad lambda_{k_m}(eta, omega_m) of a hyperbolic mode."""
    if not mt.is_hyperbolic(m):
        raise NotHyperbolicMode(f"mode {m} is elliptic ({mt.classes[m]})")
    return mt.v[m]


def boundary_basis_check(mt: ModeTable, sys: SystemSpec, margin: float = 1e-8) -> dict:
    """Verify {B(0) r_{m,k}} over I u P and over I u N are bases of C^p."""
    B0 = sys.B0()
    report = {"p": sys.p}
    for tag, members in (("plus", mt.incoming + mt.plus), ("minus", mt.incoming + mt.minus)):
        cols = [B0 @ mt.r[m][:, k] for m in members for k in range(mt.mults[m])]
        V = np.column_stack(cols) if cols else np.zeros((sys.p, 0))
        if V.shape[1] != sys.p:
            raise DegenerateBasis(
                f"{tag} family has {V.shape[1]} vectors, expected p = {sys.p}")
        if sys.p == 0:
            report[tag] = {"cond": 0.0, "sigma_min": np.inf, "count": 0}
            continue
        s = np.linalg.svd(V, compute_uv=False)
        if s.min() <= margin * s.max():
            raise DegenerateBasis(f"{tag} family nearly singular: s_min={s.min():.3e}")
        report[tag] = {"cond": float(s.max() / s.min()),
                       "sigma_min": float(s.min()), "count": V.shape[1]}
    report["pass"] = True
    return report

"""Hyperbolic profile subsystem: transport equations solved by Picard iteration.

The leading-order ansatz splits into a mean field vbar(x) and scalar periodic
amplitudes sigma_{m,k}(x, theta_m) carried by the kernel bases.  The
hyperbolic part (mean plus incoming/outgoing modes) closes on itself: each
Picard sweep solves, by explicit upwind marching in t over the (y, x_d) grid,

    X_phi sigma^n + a(vbar^{n-1}) d_th sigma^n + b sigma^{n-1} d_th sigma^n
        + J(sigma^{n-1}, sigma^n) = e sigma^{n-1},

Fourier row by Fourier row in theta, together with the mean equation whose
quadratic source couples the same-mode products, and the boundary coupling
that determines incoming traces from the boundary data and outgoing traces.

Storage conventions (d = 2 grids): the mean is a real array (nt, ny, nxd, N);
a mode-m profile is a complex array (nt, mu_m, jmax, ny, nxd) holding the
Fourier rows j = 1..jmax for hyperbolic and positive-type elliptic modes and
j = -1..-jmax for negative-type ones; hyperbolic rows imply the conjugate
negative half (real profiles).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CFLViolation, MissingTrace, NoConvergence
from .grids import BoundaryData, Grid
from .modes import ModeTable
from .resonance import ResonanceSet, Triple
from .systems import SystemSpec

__all__ = ["InteriorCoefficients", "BoundaryCoupler", "HypIterate",
           "HyperbolicSolution", "picard_solve_hyperbolic", "rows_to_phys",
           "phys_to_rows", "get_row", "solve_boundary_traces", "ProfileSet",
           "PeriodicProfile"]


# ---------------------------------------------------------------------------
# theta-spectral helpers
# ---------------------------------------------------------------------------


def get_row(arr: np.ndarray, j: int, zsign: int) -> np.ndarray:
    """Coefficient of e^{i j theta} from stored rows; zeros outside support.

    ``arr`` has a row axis of length jmax at position 1 (component axis first)
    holding j = 1..jmax (zsign >= 0) or j = -1..-jmax (zsign < 0).
    """
    jmax = arr.shape[1]
    if j == 0 or abs(j) > jmax:
        return np.zeros_like(arr[:, 0])
    if zsign == 0:
        return arr[:, j - 1] if j > 0 else np.conj(arr[:, -j - 1])
    if zsign > 0:
        return arr[:, j - 1] if j > 0 else np.zeros_like(arr[:, 0])
    return arr[:, -j - 1] if j < 0 else np.zeros_like(arr[:, 0])


def rows_to_phys(arr: np.ndarray, zsign: int, n_theta: int) -> np.ndarray:
    """Collocation values over the theta grid (axis inserted after rows).

    Real reconstruction for hyperbolic rows; one-sided complex sums for
    elliptic rows.  Input (mu, jmax, ...), output (mu, n_theta, ...).
    """
    mu, jmax = arr.shape[:2]
    if zsign == 0:
        buf = np.zeros((mu, n_theta // 2 + 1) + arr.shape[2:], dtype=complex)
        buf[:, 1:jmax + 1] = arr
        return np.fft.irfft(buf, n=n_theta, axis=1) * n_theta
    buf = np.zeros((mu, n_theta) + arr.shape[2:], dtype=complex)
    if zsign > 0:
        buf[:, 1:jmax + 1] = arr
    else:
        for r in range(jmax):
            buf[:, n_theta - 1 - r] = arr[:, r]
    return np.fft.ifft(buf, axis=1) * n_theta


def phys_to_rows(phys: np.ndarray, zsign: int, n_theta: int, jmax: int) -> np.ndarray:
    """Project collocation values back onto the stored coefficient rows."""
    if np.isrealobj(phys):
        buf = np.fft.rfft(phys, axis=1) / n_theta
        return buf[:, 1:jmax + 1]
    buf = np.fft.fft(phys, axis=1) / n_theta
    if zsign >= 0:
        return buf[:, 1:jmax + 1]
    return buf[:, n_theta - 1:n_theta - 1 - jmax:-1]


# ---------------------------------------------------------------------------
# Interior coefficient tensors
# ---------------------------------------------------------------------------


@dataclass
class JRecord:
    """One prepared-integral contribution to the receiving mode's equation.

    Encodes the relation n_recv phi_recv = n1 phi_b1 + n2 phi_b2: the b1
    profile enters through its preparation at multiples of n1, the b2 profile
    through its theta derivative, with coupling tensor C[l, k, k'].
    """

    recv: int
    n_recv: int
    b1: int
    n1: int
    b2: int
    n2: int
    C: np.ndarray


class InteriorCoefficients:
    """Scalar coefficient tensors of the interior profile equations.

    Derived mechanically from the projections E_{m,k} of the quadratic form
    M(V) d_theta V and of F(0) V; cross-checked in the test suite against
    direct projector application on trig-polynomial fixtures.
    """

    def __init__(self, sys: SystemSpec, mt: ModeTable, rs: ResonanceSet | None = None):
        self.sys, self.mt = sys, mt
        beta = mt.beta.beta
        D = sum(beta[j] * np.asarray(sys.dAtilde0_tensor(j), complex)
                for j in range(sys.d))
        self.Dbeta = D
        F0 = np.asarray(sys.F0(), complex)
        self.amap, self.bcoef, self.ecoef, self.meanR = {}, {}, {}, {}
        for m in range(mt.M):
            L, R = mt.l[m], mt.r[m]
            self.amap[m] = np.einsum("la,abc,bk->lkc", L, D, R)
            self.bcoef[m] = np.einsum("la,abc,ck,bm->lkm", L, D, R, R)
            self.ecoef[m] = np.einsum("la,ab,bk->lk", L, F0, R)
            self.meanR[m] = np.einsum("abc,ck,bm->kma", D, R, R)
        self.jrecords: dict = {m: [] for m in range(mt.M)}
        if rs is not None:
            for t in rs.triples:
                for rec in self._family_records(t):
                    self.jrecords[rec.recv].append(rec)

    def _family_records(self, t: Triple):
        mt, D = self.mt, self.Dbeta
        arrangements = [
            (t.p, t.n_p, (t.q, t.n_q), (t.r, t.n_r)),
            (t.q, -t.n_q, (t.p, -t.n_p), (t.r, t.n_r)),
            (t.r, -t.n_r, (t.q, t.n_q), (t.p, -t.n_p)),
        ]
        out = []
        for recv, n_recv, (b1, n1), (b2, n2) in arrangements:
            for (c1, m1), (c2, m2) in (((b1, n1), (b2, n2)), ((b2, n2), (b1, n1))):
                C = np.einsum("la,abc,ck,bm->lkm", mt.l[recv], D, mt.r[c1], mt.r[c2])
                out.append(JRecord(recv=recv, n_recv=n_recv, b1=c1, n1=m1,
                                   b2=c2, n2=m2, C=C))
        return out

    def a_field(self, m: int, vbar: np.ndarray) -> np.ndarray:
        """a_{l,k'}(vbar) over the grid, shape (mu, mu) + grid shape."""
        return np.einsum("lkc,...c->lk...", self.amap[m], vbar)

    def j_row_sum(self, recv: int, jmax: int, prev_getrow, cur_getrow):
        """Accumulated prepared-integral rows for the receiving mode.

        ``prev_getrow(m, j)`` and ``cur_getrow(m, j)`` return coefficient
        arrays (mu_m,) + grid shape; output has shape
        (mu_recv, jmax) + grid shape (rows of the receiving lattice sign).
        """
        recs = self.jrecords[recv]
        if not recs:
            return 0.0
        zs = self.mt.zsign(recv)
        out = None
        for rec in recs:
            lam_max = jmax // max(abs(rec.n1), abs(rec.n2), abs(rec.n_recv))
            for lam in range(-lam_max, lam_max + 1):
                if lam == 0:
                    continue
                jout = lam * rec.n_recv
                if zs == 0 and jout < 0:
                    continue  # negative rows follow by conjugation
                if zs > 0 and jout < 0 or zs < 0 and jout > 0:
                    continue
                arow = prev_getrow(rec.b1, lam * rec.n1)
                brow = cur_getrow(rec.b2, lam * rec.n2)
                term = (1j * lam * rec.n2) * np.einsum(
                    "lkm,k...,m...->l...", rec.C, arow, brow)
                if out is None:
                    shape = (rec.C.shape[0], jmax) + term.shape[1:]
                    out = np.zeros(shape, dtype=complex)
                out[:, abs(jout) - 1] += term
        return 0.0 if out is None else out


# ---------------------------------------------------------------------------
# Boundary coupling
# ---------------------------------------------------------------------------


class BoundaryCoupler:
    """The linear maps determining incoming/elliptic traces from G and outgoing.

    For each positive Fourier index the basis {B(0) r_{m,k}} over incoming and
    positive-type modes is inverted against the data minus the outgoing
    contribution; negative indices use the negative-type family.
    """

    def __init__(self, sys: SystemSpec, mt: ModeTable):
        self.sys, self.mt = sys, mt
        B0 = sys.B0().astype(complex)
        self.order_plus = [(m, k) for m in mt.incoming + mt.plus
                           for k in range(mt.mults[m])]
        self.order_minus = [(m, k) for m in mt.incoming + mt.minus
                            for k in range(mt.mults[m])]
        self.order_out = [(m, k) for m in mt.outgoing for k in range(mt.mults[m])]
        self.Vp = np.column_stack([B0 @ mt.r[m][:, k] for m, k in self.order_plus]) \
            if self.order_plus else np.zeros((sys.p, 0), complex)
        self.Vm = np.column_stack([B0 @ mt.r[m][:, k] for m, k in self.order_minus]) \
            if self.order_minus else np.zeros((sys.p, 0), complex)
        self.Oc = np.column_stack([B0 @ mt.r[m][:, k] for m, k in self.order_out]) \
            if self.order_out else np.zeros((sys.p, 0), complex)
        self.Vp_inv = np.linalg.inv(self.Vp) if self.Vp.shape == (sys.p, sys.p) and sys.p \
            else None
        self.Vm_inv = np.linalg.inv(self.Vm) if self.Vm.shape == (sys.p, sys.p) and sys.p \
            else None

    def solve(self, sign: int, g_rows: np.ndarray, out_rows: np.ndarray) -> np.ndarray:
        """Traces for the sign family; rows is the leading axis.

        g_rows: (..., p) data coefficients; out_rows: (n_out, ...) outgoing
        trace coefficients in ``order_out`` order.  Returns (n_unknown, ...)
        in ``order_plus`` / ``order_minus`` order.
        """
        Vinv = self.Vp_inv if sign > 0 else self.Vm_inv
        if Vinv is None:
            return np.zeros((0,) + g_rows.shape[:-1], dtype=complex)
        rhs = np.array(g_rows, dtype=complex)
        if self.order_out:
            rhs = rhs - np.einsum("pc,c...->...p", self.Oc, out_rows)
        return np.einsum("qp,...p->q...", Vinv, rhs)


def solve_boundary_traces(sys: SystemSpec, mt: ModeTable, g_plus_rows, out_plus_rows,
                          g_minus_rows=None, out_minus_rows=None):
    """Convenience wrapper returning {(m, k): rows} maps for both sign families.

    ``g_plus_rows`` has shape (jmax, ..., p) for Fourier indices 1..jmax; the
    minus family defaults to the conjugate data of a real G.
    """
    bc = BoundaryCoupler(sys, mt)
    if g_minus_rows is None:
        g_minus_rows = np.conj(g_plus_rows)
    if out_minus_rows is None:
        out_minus_rows = np.conj(out_plus_rows)
    plus = bc.solve(+1, g_plus_rows, out_plus_rows)
    minus = bc.solve(-1, g_minus_rows, out_minus_rows)
    tp = {mk: plus[i] for i, mk in enumerate(bc.order_plus)}
    tm = {mk: minus[i] for i, mk in enumerate(bc.order_minus)}
    return tp, tm


# ---------------------------------------------------------------------------
# Picard iteration for the hyperbolic subsystem
# ---------------------------------------------------------------------------


@dataclass
class HypIterate:
    vbar: np.ndarray
    sigma: dict

    def sup(self) -> float:
        s = float(np.abs(self.vbar).max()) if self.vbar.size else 0.0
        for arr in self.sigma.values():
            if arr.size:
                s = max(s, float(np.abs(arr).max()))
        return s

    def diff(self, other: "HypIterate") -> float:
        d = float(np.abs(self.vbar - other.vbar).max()) if self.vbar.size else 0.0
        for m in self.sigma:
            if self.sigma[m].size:
                d = max(d, float(np.abs(self.sigma[m] - other.sigma[m]).max()))
        return d

    def copy(self) -> "HypIterate":
        return HypIterate(self.vbar.copy(), {m: a.copy() for m, a in self.sigma.items()})


@dataclass
class HyperbolicSolution:
    grid: Grid
    mt: ModeTable
    coeffs: InteriorCoefficients
    coupler: BoundaryCoupler
    G: BoundaryData
    final: HypIterate
    iterates: list
    diffs: list
    n_iter: int

    def trace(self, m: int, k: int, it: HypIterate | None = None) -> np.ndarray:
        it = self.final if it is None else it
        if m not in it.sigma:
            raise MissingTrace(f"mode {m} not part of the hyperbolic solution")
        return it.sigma[m][:, k, :, :, 0]

    def dtrace(self, m: int, k: int, it: HypIterate | None = None) -> np.ndarray:
        """One-sided second-order x_d derivative of the trace at x_d = 0."""
        it = self.final if it is None else it
        if m not in it.sigma:
            raise MissingTrace(f"mode {m} not part of the hyperbolic solution")
        a = it.sigma[m][:, k]
        h = self.grid.dxd
        return (-3.0 * a[..., 0] + 4.0 * a[..., 1] - a[..., 2]) / (2.0 * h)

    def vbar_trace(self, it: HypIterate | None = None) -> np.ndarray:
        it = self.final if it is None else it
        return it.vbar[:, :, 0, :]


def _upwind_y(u: np.ndarray, v: float, dy: float, axis: int) -> np.ndarray:
    if v == 0:
        return 0.0
    if v > 0:
        return v * (u - np.roll(u, 1, axis=axis)) / dy
    return v * (np.roll(u, -1, axis=axis) - u) / dy


def _upwind_xd(u: np.ndarray, v: float, dxd: float) -> np.ndarray:
    """One-sided difference along the last axis; edge rows fixed by bc logic."""
    out = np.empty_like(u)
    if v > 0:
        out[..., 1:] = u[..., 1:] - u[..., :-1]
        out[..., 0] = u[..., 1] - u[..., 0]
    else:
        out[..., :-1] = u[..., 1:] - u[..., :-1]
        out[..., -1] = 0.0
    return v * out / dxd


class _MeanStepper:
    """Characteristic flux-split upwinding for the constant-coefficient mean."""

    def __init__(self, sys: SystemSpec, grid: Grid):
        self.grid = grid
        self.split = []
        for j in (1, 2):
            A = sys.A0(j)
            w, R = np.linalg.eig(A)
            Rinv = np.linalg.inv(R)
            Ap = (R * np.where(w.real > 0, w, 0)) @ Rinv
            Am = (R * np.where(w.real < 0, w, 0)) @ Rinv
            self.split.append((np.real(Ap), np.real(Am)))
        self.smax = [float(np.abs(np.linalg.eigvals(sys.A0(j))).max()) for j in (1, 2)]
        # boundary closure [B(0); outgoing left rows of A_d(0)]
        Ad = sys.A0(2)
        w, R = np.linalg.eig(Ad)
        Li = np.linalg.inv(R)
        rows = [Li[i].real for i in range(sys.N) if w[i].real < 0]
        self.Lout = np.array(rows).reshape(-1, sys.N)
        Lpos = np.array([Li[i].real for i in range(sys.N)
                         if w[i].real > 0]).reshape(-1, sys.N)
        Mb = np.vstack([sys.B0(), self.Lout])
        self.Mb_inv = np.linalg.inv(Mb)
        Mtop = np.vstack([Lpos, self.Lout])
        self.top_extrap = np.linalg.solve(Mtop, np.vstack(
            [Lpos, np.zeros_like(self.Lout)]))
        self.p = sys.p

    def advect(self, v: np.ndarray) -> np.ndarray:
        dy, dxd = self.grid.dy, self.grid.dxd
        (A1p, A1m), (A2p, A2m) = self.split
        Dym = (v - np.roll(v, 1, axis=0)) / dy
        Dyp = (np.roll(v, -1, axis=0) - v) / dy
        out = np.einsum("ab,yxb->yxa", A1p, Dym) + np.einsum("ab,yxb->yxa", A1m, Dyp)
        Dxm = np.empty_like(v)
        Dxm[:, 1:] = (v[:, 1:] - v[:, :-1]) / dxd
        Dxm[:, 0] = Dxm[:, 1]
        Dxp = np.empty_like(v)
        Dxp[:, :-1] = (v[:, 1:] - v[:, :-1]) / dxd
        Dxp[:, -1] = 0.0
        out += np.einsum("ab,yxb->yxa", A2p, Dxm) + np.einsum("ab,yxb->yxa", A2m, Dxp)
        return out

    def apply_bc(self, v: np.ndarray, gbar: np.ndarray):
        rhs = np.concatenate([gbar, np.einsum("ab,yb->ya", self.Lout, v[:, 1, :])],
                             axis=-1)
        v[:, 0, :] = np.einsum("ab,yb->ya", self.Mb_inv, rhs)
        v[:, -1, :] = np.einsum("ab,yb->ya", self.top_extrap, v[:, -2, :])


def picard_solve_hyperbolic(sys: SystemSpec, mt: ModeTable, rs: ResonanceSet,
                            G: BoundaryData, grid: Grid, tol: float = 1e-8,
                            max_iter: int = 50, cfl: float = 0.8,
                            keep_iterates: int = 4,
                            blowup_cap: float = 1e6) -> HyperbolicSolution:
    """Solve the hyperbolic subsystem (mean + real modes) to a fixed point.

    Raises CFLViolation when the configured dt is too large for any transport
    speed, and NoConvergence (with a suggested shorter horizon) if successive
    sweeps stop contracting within ``max_iter``.
    """
    coeffs = InteriorCoefficients(sys, mt, rs)
    coupler = BoundaryCoupler(sys, mt)
    stepper = _MeanStepper(sys, grid)
    _check_cfl(mt, stepper, grid, cfl)
    Ghat = G.coefficients(grid)  # (jmax+1, nt, ny, p)
    F0_phys = sys.Fsrc(np.zeros(sys.N))
    Ad0 = sys.Ad0()

    hyp = mt.hyperbolic
    shape = {m: (grid.nt, mt.mults[m], grid.jmax, grid.ny, grid.nxd) for m in hyp}
    prev = HypIterate(np.zeros((grid.nt, grid.ny, grid.nxd, sys.N)),
                      {m: np.zeros(shape[m], complex) for m in hyp})
    iterates, diffs = [], []
    for it in range(1, max_iter + 1):
        cur = _sweep(sys, mt, coeffs, coupler, stepper, grid, Ghat, F0_phys, Ad0, prev)
        d = cur.diff(prev)
        diffs.append(d)
        if cur.sup() > blowup_cap:
            raise NoConvergence("hyperbolic Picard iterates blew up",
                                t0_suggestion=grid.t_final / 2)
        if len(iterates) < keep_iterates:
            iterates.append(cur.copy())
        scale = max(cur.sup(), 1e-30)
        prev = cur
        if d <= tol * scale:
            break
    else:
        raise NoConvergence(
            f"no contraction after {max_iter} sweeps (last diff {diffs[-1]:.3e})",
            t0_suggestion=grid.t_final / 2)
    return HyperbolicSolution(grid=grid, mt=mt, coeffs=coeffs, coupler=coupler,
                              G=G, final=prev, iterates=iterates, diffs=diffs,
                              n_iter=it)


def _check_cfl(mt: ModeTable, stepper: _MeanStepper, grid: Grid, cfl: float):
    worst = stepper.smax[0] / grid.dy + stepper.smax[1] / grid.dxd
    for m in mt.hyperbolic:
        v = mt.v[m]
        worst = max(worst, abs(v[0]) / grid.dy + abs(v[1]) / grid.dxd)
    if grid.dt * worst > cfl:
        raise CFLViolation(
            f"dt = {grid.dt} exceeds CFL {cfl}: need dt <= {cfl / worst:.4g}")


def _lower_order(m, coeffs: InteriorCoefficients, mt: ModeTable, grid: Grid,
                 prev_slice: dict, cur_slice: dict, prev_vbar_slice: np.ndarray):
    """Zeroth-order terms of the mode-m transport equations at one time slice.

    Returns the right-hand side increment (mu, jmax, ny, nxd) so that
    d_t sigma + v . grad sigma = dlam * increment.
    """
    jrow = np.arange(1, grid.jmax + 1).reshape(1, -1, 1, 1)
    cur = cur_slice[m]
    dth_cur = 1j * jrow * cur
    aval = coeffs.a_field(m, prev_vbar_slice)  # (mu, mu, ny, nxd)
    aterm = np.einsum("lkyx,kjyx->ljyx", aval, dth_cur)
    # same-mode quadratic term: pseudospectral product, mean row excluded
    phys_prev = rows_to_phys(prev_slice[m], 0, grid.n_theta).real
    phys_dcur = rows_to_phys(dth_cur, 0, grid.n_theta).real
    prod = phys_prev[:, None] * phys_dcur[None, :]  # (k, k', th, y, xd)
    conv = phys_to_rows(prod.reshape((-1,) + prod.shape[2:]), 0, grid.n_theta,
                        grid.jmax).reshape(prod.shape[:2] + (grid.jmax,) + prod.shape[3:])
    bterm = np.einsum("lkm,kmjyx->ljyx", coeffs.bcoef[m], conv)
    eterm = np.einsum("lk,kjyx->ljyx", coeffs.ecoef[m], prev_slice[m])

    def prev_get(mm, j):
        return get_row(prev_slice[mm], j, mt.zsign(mm)) if mm in prev_slice \
            else np.zeros((mt.mults[mm], grid.ny, grid.nxd), complex)

    def cur_get(mm, j):
        return get_row(cur_slice[mm], j, mt.zsign(mm)) if mm in cur_slice \
            else np.zeros((mt.mults[mm], grid.ny, grid.nxd), complex)

    jterm = coeffs.j_row_sum(m, grid.jmax, prev_get, cur_get)
    return -aterm - bterm - (jterm if isinstance(jterm, np.ndarray) else 0.0) + eterm


def _mean_quadratic(coeffs: InteriorCoefficients, mt: ModeTable, grid: Grid,
                    prev_slice: dict, cur_slice: dict) -> np.ndarray:
    """Mean-equation quadratic source sum_m Q_m^{kk'} R_m^{kk'} over one slice."""
    out = 0.0
    jrow = np.arange(1, grid.jmax + 1).reshape(1, -1, 1, 1)
    for m in prev_slice:
        P, C = prev_slice[m], cur_slice[m]
        # mean(sigma_prev_k d_th sigma_cur_k') = sum_j 2 Re(conj(P_j) i j C_j)
        Q = 2.0 * np.real(np.einsum("kjyx,mjyx->kmyx", np.conj(P), 1j * jrow * C))
        out = out + np.real(np.einsum("kmyx,kma->yxa", Q, coeffs.meanR[m]))
    return out


def _sweep(sys, mt, coeffs, coupler, stepper, grid, Ghat, F0_phys, Ad0,
           prev: HypIterate) -> HypIterate:
    nt, dt = grid.nt, grid.dt
    hyp = mt.hyperbolic
    cur = HypIterate(np.zeros_like(prev.vbar),
                     {m: np.zeros_like(prev.sigma[m]) for m in hyp})
    incoming = set(mt.incoming)
    for i in range(nt - 1):
        prev_slice = {m: prev.sigma[m][i] for m in hyp}
        cur_slice = {m: cur.sigma[m][i] for m in hyp}
        new_slices = {}
        for m in hyp:
            s_i = cur_slice[m]
            v = mt.v[m]
            adv = _upwind_y(s_i, v[0], grid.dy, axis=-2) + _upwind_xd(s_i, v[1], grid.dxd)
            low = _lower_order(m, coeffs, mt, grid, prev_slice, cur_slice, prev.vbar[i])
            new = s_i + dt * (-adv + mt.dlam_dxid[m] * low)
            if v[1] > 0:
                pass  # x_d = 0 row overwritten by the boundary solve below
            else:
                new[..., -1] = 0.0
            new_slices[m] = new
        # boundary coupling at the new time level (positive rows; hyperbolic
        # negative rows follow by conjugation)
        if incoming:
            out_rows = np.stack([new_slices[m][k, :, :, 0]
                                 for m, k in coupler.order_out]) \
                if coupler.order_out else np.zeros((0, grid.jmax, grid.ny), complex)
            sol = coupler.solve(+1, Ghat[1:, i + 1], out_rows)
            for idx, (m, k) in enumerate(coupler.order_plus):
                if m in incoming:
                    new_slices[m][k, :, :, 0] = sol[idx]
        for m in hyp:
            cur.sigma[m][i + 1] = new_slices[m]
        # mean update
        quad = _mean_quadratic(coeffs, mt, grid, prev_slice, cur_slice)
        rhs = np.einsum("ab,yxb->yxa", F0_phys, prev.vbar[i]) \
            - np.einsum("ab,yxb->yxa", Ad0, quad)
        vnew = cur.vbar[i] + dt * (-stepper.advect(cur.vbar[i]) + rhs)
        stepper.apply_bc(vnew, np.real(Ghat[0, i + 1]))
        cur.vbar[i + 1] = vnew
    return cur


# ---------------------------------------------------------------------------
# Profile containers (hyperbolic + elliptic)
# ---------------------------------------------------------------------------


@dataclass
class PeriodicProfile:
    """Mean-zero periodic amplitude of one (m, k) slot as Fourier rows.

    ``coeffs`` has shape (nt, jmax, ny, nxd); ``jlist`` gives the Fourier
    index of each row (positive for hyperbolic/positive-type modes, negative
    for negative-type ones).
    """

    m: int
    k: int
    jlist: np.ndarray
    coeffs: np.ndarray
    conjugate_extend: bool  # True when rows imply conjugate negatives


@dataclass
class ProfileSet:
    """Full leading-order profile data on the profile grid."""

    grid: Grid
    mt: ModeTable
    vbar: np.ndarray
    profiles: dict  # (m, k) -> PeriodicProfile

    def profile_rows(self, m: int, k: int) -> np.ndarray:
        return self.profiles[(m, k)].coeffs

    @classmethod
    def from_hyperbolic(cls, hyp: HyperbolicSolution,
                        elliptic: dict | None = None) -> "ProfileSet":
        """Bundle the converged hyperbolic fields with elliptic profiles."""
        mt, grid = hyp.mt, hyp.grid
        profiles = {}
        for m in mt.hyperbolic:
            for k in range(mt.mults[m]):
                profiles[(m, k)] = PeriodicProfile(
                    m=m, k=k, jlist=np.arange(1, grid.jmax + 1),
                    coeffs=hyp.final.sigma[m][:, k], conjugate_extend=True)
        for key, prof in (elliptic or {}).items():
            profiles[key] = prof
        return cls(grid=grid, mt=mt, vbar=hyp.final.vbar, profiles=profiles)

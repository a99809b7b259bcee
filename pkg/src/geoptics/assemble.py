"""Assembly of the substituted expansion and the convergence machinery.

The periodic ansatz V^0(x, theta_1..theta_M) becomes a function of the
boundary angle alone through theta_m = theta_0 + omega_m xi_d followed by
xi_d = x_d / eps: a multi-index term V_alpha e^{i alpha . theta} lands on the
theta_0 Fourier row n = sum(alpha) carrying the phase factor
e^{i (alpha . omega) x_d / eps}, which is bounded precisely because the
spectrum lives on the sign-constrained lattice (Im(alpha . omega) >= 0).

This module provides that substitution for both profile sets and finite
trigonometric polynomials, the partial-sum bookkeeping (the finite groups
C_{j,k} of indices sharing a row and a phase), the quantitative decay check
for elliptically polarized residual fields, and the simultaneous-Picard
convergence study against the singular solver.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .corrector import Ltilde_dx, solve_corrector, truncate_to_polynomial
from .elliptic import EllipticLayer, EllipticResidual, build_elliptic_profiles
from .errors import SpectrumViolation
from .grids import BoundaryData, Grid
from .modes import BoundaryFrequency, ModeTable
from .norms import es_norm, hs_sq_per_xd
from .profiles import (HyperbolicSolution, ProfileSet, get_row,
                       picard_solve_hyperbolic)
from .resonance import ResonanceSet, SpectrumLattice, find_resonances
from .singular import SingularField, SingularSolver, solve_singular
from .spectral import TrigPolynomial, mul_M_dtheta, project_E, project_Eflat, unit_alpha
from .systems import SystemSpec

__all__ = ["substitute", "substitute_rows", "profile_to_trig", "cjk_groups",
           "assemble_u0_rows", "decay_check", "physical_error", "interp_axis",
           "ConvergenceReport", "convergence_study", "StudyOptions",
           "singular_grid_for_eps"]


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------


def _check_spectrum(alpha, omegas, tol=1e-12):
    val = complex(np.dot(alpha, omegas))
    if val.imag < -tol * max(np.abs(omegas).max(), 1.0):
        raise SpectrumViolation(
            f"index {alpha} has Im(alpha . omega) = {val.imag:.3e} < 0")
    return val


def substitute(v: TrigPolynomial, mt: ModeTable, theta0: float, xid: float):
    """Point evaluation of V at theta = (theta_0 + omega_m xi_d)_m.

    Works for xi_d >= 0; each term contributes V_alpha e^{i n theta_0}
    e^{i (alpha . omega) xi_d} with a non-amplifying exponential.
    """
    if xid < 0:
        raise ValueError("xi_d must be nonnegative")
    om = np.asarray(mt.omegas)
    out = None
    for a, V in sorted(v.terms.items()):
        val = _check_spectrum(a, om)
        ph = np.exp(1j * (sum(a) * theta0 + val * xid))
        out = ph * V if out is None else out + ph * V
    return out


def substitute_rows(v: TrigPolynomial, mt: ModeTable, xid: np.ndarray,
                    n_rows: int) -> np.ndarray:
    """theta_0-coefficient rows of the substituted field over an xi_d axis.

    ``xid`` has the length of the coefficient fields' x_d axis (last-but-one
    of the (nt, ny, nxd, N) layout).  Only rows n >= 0 are produced (the
    field is real for reality-symmetric inputs); row n collects all alpha
    with sum(alpha) = n.  Output shape (nt, ny, nxd, n_rows + 1, N).
    """
    om = np.asarray(mt.omegas)
    some = next(iter(v.terms.values())) if v.terms else None
    if some is None:
        raise ValueError("empty polynomial")
    nt, ny, nxd, N = some.shape
    out = np.zeros((nt, ny, nxd, n_rows + 1, N), complex)
    for a, V in sorted(v.terms.items()):
        n = int(sum(a))
        if not 0 <= n <= n_rows:
            continue
        val = _check_spectrum(a, om)
        ph = np.exp(1j * val * xid)  # (nxd,)
        out[:, :, :, n, :] += V * ph[None, None, :, None]
    return out


def cjk_groups(support, omegas, tol: float = 1e-10) -> dict:
    """Group multi-indices by (row j = sum alpha, phase z_k = alpha . omega).

    Returns {(j, k): [alpha, ...]} with k enumerating the distinct phases in
    deterministic order; each group is finite with at most M(M-1)/2 members.
    """
    om = np.asarray(omegas)
    scale = max(np.abs(om).max(), 1.0)
    phases: list = []
    out: dict = {}
    for a in sorted(support):
        j = int(sum(a))
        z = complex(np.dot(a, om))
        for k, zk in enumerate(phases):
            if abs(z - zk) <= tol * scale:
                break
        else:
            phases.append(z)
            k = len(phases) - 1
        out.setdefault((j, k), []).append(tuple(a))
    return out


# ---------------------------------------------------------------------------
# Profile set -> trig polynomial / theta_0 rows
# ---------------------------------------------------------------------------


def profile_to_trig(vbar: np.ndarray, profiles: dict, mt: ModeTable,
                    include_mean: bool = True) -> TrigPolynomial:
    """Single-phase trig polynomial sum vbar + sigma_{m,k} r_{m,k}.

    Coefficient fields keep the (nt, ny, nxd, N) layout; hyperbolic profiles
    contribute conjugate pairs of indices, elliptic ones their one-sided rows.
    """
    out = TrigPolynomial(mt.M)
    if include_mean and np.abs(vbar).max() > 0:
        out.add_term((0,) * mt.M, vbar.astype(complex))
    for (m, k), prof in sorted(profiles.items()):
        r = mt.r[m][:, k]
        for row, j in enumerate(prof.jlist):
            c = prof.coeffs[:, row]  # (nt, ny, nxd)
            if np.abs(c).max() == 0:
                continue
            V = c[..., None] * r
            out.add_term(unit_alpha(mt.M, m, int(j)), V)
            if prof.conjugate_extend:
                out.add_term(unit_alpha(mt.M, m, -int(j)), np.conj(c)[..., None] * r)
    return out.prune()


def interp_axis(arr: np.ndarray, src: np.ndarray, dst: np.ndarray,
                axis: int) -> np.ndarray:
    """Linear interpolation along one axis (clamped at the ends)."""
    src, dst = np.asarray(src), np.asarray(dst)
    idx = np.clip(np.searchsorted(src, dst, side="right") - 1, 0, len(src) - 2)
    w = (dst - src[idx]) / (src[idx + 1] - src[idx])
    w = np.clip(w, 0.0, 1.0)
    a = np.moveaxis(arr, axis, 0)
    out = a[idx] * (1 - w).reshape((-1,) + (1,) * (a.ndim - 1)) \
        + a[idx + 1] * w.reshape((-1,) + (1,) * (a.ndim - 1))
    return np.moveaxis(out, 0, axis)


def _interp_t_xd(arr, src_grid: Grid, dst_grid: Grid, t_axis=0, xd_axis=-1):
    out = interp_axis(arr, src_grid.t, dst_grid.t, t_axis)
    return interp_axis(out, src_grid.xd, dst_grid.xd, xd_axis)


def assemble_u0_rows(pset: ProfileSet, dst_grid: Grid, eps: float) -> np.ndarray:
    """theta_0 rows of U^0_eps on the destination grid: (nt, ny, nxd, K+1, N).

    Hyperbolic modes contribute unimodular phases e^{i n omega x_d / eps};
    elliptic pairs are Hermitian-averaged so the assembled field is real even
    when the independently computed conjugate profiles differ by round-off.
    """
    mt, src = pset.mt, pset.grid
    if dst_grid.ny != src.ny or abs(dst_grid.y_extent - src.y_extent) > 1e-12:
        raise ValueError("profile and singular grids must share the y axis")
    K = dst_grid.jmax
    N = mt.sys.N
    out = np.zeros((dst_grid.nt, dst_grid.ny, dst_grid.nxd, K + 1, N), complex)
    out[..., 0, :] = _interp_t_xd(pset.vbar, src, dst_grid, 0, 2)
    xd = dst_grid.xd
    for (m, k), prof in sorted(pset.profiles.items()):
        r = mt.r[m][:, k]
        om = pset.mt.omegas[m]
        cs = _interp_t_xd(prof.coeffs, src, dst_grid, 0, 3)  # (nt, jmax_src, ny, nxd)
        zs = mt.zsign(m)
        for row, j in enumerate(prof.jlist):
            n = int(j)
            if zs >= 0:
                if n > K:
                    continue
                ph = np.exp(1j * n * om * xd / eps)
                w = 0.5 if zs > 0 else 1.0
                out[..., n, :] += w * cs[:, row][..., None] \
                    * ph[None, None, :, None] * r
            else:
                # negative-type rows enter the positive half conjugated
                nn = -n
                if nn > K:
                    continue
                ph = np.exp(1j * nn * np.conj(om) * xd / eps)
                out[..., nn, :] += 0.5 * np.conj(cs[:, row])[..., None] \
                    * ph[None, None, :, None] * np.conj(r)
    return out


def physical_error(rows_a: np.ndarray, rows_b: np.ndarray, beta, eps: float,
                   grid: Grid) -> float:
    """L^inf over the grid of the two fields evaluated at theta_0 = beta.x'/eps."""
    beta = np.asarray(beta, float)
    phase = (beta[0] * grid.t[:, None] + beta[1] * grid.y[None, :]) / eps
    diff = rows_a - rows_b
    out = np.real(diff[..., 0, :])
    for n in range(1, rows_a.shape[-2]):
        ph = np.exp(1j * n * phase)[:, :, None, None]
        out = out + 2 * np.real(diff[..., n, :] * ph)
    return float(np.abs(out).max())


# ---------------------------------------------------------------------------
# Decay check for elliptically polarized residuals
# ---------------------------------------------------------------------------


def decay_check(res: EllipticResidual, epsilons, s: int = 2) -> dict:
    """Per-epsilon sup / L2 components of the substituted residual norm.

    The substitution sends the mode-p rows to theta_0 rows damped by
    e^{- n |Im omega_p| x_d / eps}; the sup component must vanish with eps for
    boundary-zero residuals while the L2-in-x_d component obeys the sqrt(eps)
    law.
    """
    grid, mt = res.grid, res.mt
    N = mt.sys.N
    out = {"epsilons": list(map(float, epsilons)), "sup": [], "l2": [], "total": []}
    for eps in epsilons:
        rows = np.zeros((grid.nt, grid.ny, grid.nxd, grid.jmax + 1, N), complex)
        for (p, l), R in sorted(res.rows.items()):
            r = mt.r[p][:, l]
            om = mt.omegas[p]
            for row, j in enumerate(res.jlists[(p, l)]):
                n = int(j)
                if n > 0:
                    ph = np.exp(1j * n * om * grid.xd / eps)
                    rows[..., n, :] += 0.5 * R[:, row][..., None] \
                        * ph[None, None, :, None] * r
                else:
                    ph = np.exp(-1j * n * np.conj(om) * grid.xd / eps)
                    rows[..., -n, :] += 0.5 * np.conj(R[:, row])[..., None] \
                        * ph[None, None, :, None] * np.conj(r)
        piece = es_norm(rows, grid.dt, grid.dy, grid.dxd, s - 1)
        out["sup"].append(piece["sup"])
        out["l2"].append(piece["l2"])
        out["total"].append(piece["total"])
    return out


# ---------------------------------------------------------------------------
# Convergence study
# ---------------------------------------------------------------------------


@dataclass
class StudyOptions:
    epsilons: tuple = (0.2, 0.1, 0.05)
    s: int = 2
    cfl: float = 0.7
    layer_points: float = 8.0     # x_d nodes per eps at the finest layer scale
    tol_profile: float = 1e-8
    tol_singular: float = 1e-7
    max_iter: int = 50
    truncation_delta: float = 1e-3
    induction_levels: tuple = (1, 2, 3)
    keep_fields: bool = False
    resonance_bound: int = 12


@dataclass
class ConvergenceReport:
    epsilons: list
    errors: list          # E^{s-1} of U_eps - U^0_eps (dict sup/l2/total)
    linf_errors: list     # physical-space sup errors
    runtimes: list
    induction: dict       # n -> list over eps of D(n, eps)
    induction_frozen: dict
    layer_width: list
    profile_iters: int
    singular_iters: list
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "epsilons": [float(e) for e in self.epsilons],
            "errors": [{k: float(v) for k, v in e.items()} for e in self.errors],
            "linf_errors": [float(x) for x in self.linf_errors],
            "induction": {str(n): [float(x) for x in v]
                          for n, v in sorted(self.induction.items())},
            "induction_frozen": {str(n): [float(x) for x in v]
                                 for n, v in sorted(self.induction_frozen.items())},
            "layer_width": [None if w is None else float(w) for w in self.layer_width],
            "profile_iters": int(self.profile_iters),
            "singular_iters": [int(n) for n in self.singular_iters],
            "meta": self.meta,
        }


def singular_grid_for_eps(base: Grid, eps: float, eps_ref: float,
                          sys: SystemSpec, cfl: float,
                          llf_margin: float = 1.15) -> Grid:
    """Per-epsilon refinement: x_d step scaled by eps, dt set by the CFL bound.

    Refining along the epsilon sequence keeps the elliptic layer equally
    resolved at every epsilon; the study measures the limit along this
    refinement path.
    """
    dxd = base.dxd * eps / eps_ref
    s_y = llf_margin * float(np.abs(np.linalg.eigvals(sys.A0(1))).max())
    s_x = llf_margin * float(np.abs(np.linalg.eigvals(sys.A0(2))).max())
    dt_raw = cfl / (s_y / base.dy + s_x / dxd)
    nt_steps = int(np.ceil(base.t_final / dt_raw))
    dt = base.t_final / nt_steps
    return Grid.build(t_final=base.t_final, dt=dt, y_extent=base.y_extent,
                      dy=base.dy, xd_extent=base.xd_extent, dxd=dxd,
                      n_theta=base.n_theta, depth=base.depth)


def _corrector_field(sys, mt, hyp, layer, grid, n_level, delta):
    """V^{0,n}_p, V^{0,n+1}_p and the corrector V^1_p for one induction level."""
    measure = grid.dt * grid.dy * grid.dxd

    def trig_level(n):
        if n == 0:
            return None
        it = hyp.iterates[min(n, len(hyp.iterates)) - 1]
        ell = layer.iterate_profiles[min(n, len(layer.iterate_profiles)) - 1] \
            if layer.iterate_profiles else {}
        pset = ProfileSet.from_hyperbolic(
            HyperbolicSolution(grid=grid, mt=mt, coeffs=hyp.coeffs,
                               coupler=hyp.coupler, G=hyp.G, final=it,
                               iterates=[], diffs=[], n_iter=0), ell)
        v = profile_to_trig(pset.vbar, pset.profiles, mt)
        return truncate_to_polynomial(v, delta, s=2.0, weights=measure)

    v_n = trig_level(n_level)
    v_n1 = trig_level(n_level + 1)
    F0 = np.asarray(sys.F0(), complex)
    Gp = Ltilde_dx(v_n1, mt, grid)
    if v_n is not None:
        Gp = Gp + mul_M_dtheta(v_n, v_n1, sys, mt.beta.beta)
        FV = v_n.map_fields(lambda V: V @ F0.T)
    else:
        FV = TrigPolynomial(mt.M)
    H = (Gp - FV)
    Hfree = (H - project_Eflat(H, mt)).scale(-1.0)
    v1, rep = solve_corrector(Hfree, mt)
    return v_n, v_n1, v1, rep


def convergence_study(sys: SystemSpec, beta: BoundaryFrequency, G: BoundaryData,
                      profile_grid: Grid, opts: StudyOptions,
                      mt: ModeTable | None = None,
                      hyp: HyperbolicSolution | None = None,
                      layer: EllipticLayer | None = None) -> ConvergenceReport:
    """Full pipeline: profiles once, singular solve per epsilon, error norms.

    Implements the qualitative main-theorem check (error norms decreasing as
    eps -> 0 along the refinement path) plus the simultaneous-Picard
    diagnostic for the configured induction levels.
    """
    from .modes import compute_modes  # local to avoid cycles in doc builds

    if mt is None:
        mt = compute_modes(sys, beta)
    rs = find_resonances(mt, SpectrumLattice.from_modes(mt, opts.resonance_bound))
    if hyp is None:
        hyp = picard_solve_hyperbolic(sys, mt, rs, G, profile_grid,
                                      tol=opts.tol_profile, max_iter=opts.max_iter,
                                      cfl=opts.cfl)
    if layer is None:
        layer = build_elliptic_profiles(hyp) if mt.elliptic else \
            EllipticLayer({}, {}, {}, [], [])
    pset = ProfileSet.from_hyperbolic(hyp, layer.profiles)

    eps_ref = max(opts.epsilons)
    report = ConvergenceReport(epsilons=list(opts.epsilons), errors=[],
                               linf_errors=[], runtimes=[], induction={},
                               induction_frozen={}, layer_width=[],
                               profile_iters=hyp.n_iter, singular_iters=[],
                               meta={"boundary_norm_proxy": "discrete trace H^{s+1}"})
    level_data = {}
    for n in opts.induction_levels:
        report.induction[n] = []
        report.induction_frozen[n] = []
        level_data[n] = _corrector_field(sys, mt, hyp, layer, profile_grid,
                                         n, opts.truncation_delta)
    fields = {}
    for eps in opts.epsilons:
        t0 = time.time()
        sgrid = singular_grid_for_eps(profile_grid, eps, eps_ref, sys, opts.cfl)
        Ueps, info = solve_singular(sys, beta.beta, G, sgrid, eps,
                                    tol=opts.tol_singular, max_iter=opts.max_iter,
                                    keep_iterates=max(opts.induction_levels) + 1,
                                    cfl=opts.cfl + 0.1)
        rows0 = assemble_u0_rows(pset, sgrid, eps)
        diff = Ueps.U - rows0
        err = es_norm(diff, sgrid.dt, sgrid.dy, sgrid.dxd, opts.s - 1)
        report.errors.append(dict(err))
        report.linf_errors.append(physical_error(Ueps.U, rows0, beta.beta, eps, sgrid))
        report.singular_iters.append(info["n_iter"])
        report.layer_width.append(_layer_width(pset, sgrid, eps))
        # simultaneous-Picard diagnostic
        solver: SingularSolver = info["solver"]
        for n in opts.induction_levels:
            vn, vn1, v1, _ = level_data[n]
            rows_n = _trig_rows_on(vn, mt, profile_grid, sgrid, eps) \
                if vn is not None else np.zeros_like(rows0)
            rows_n1 = _trig_rows_on(vn1, mt, profile_grid, sgrid, eps)
            rows_v1 = _trig_rows_on(v1, mt, profile_grid, sgrid, eps) \
                if v1.terms else np.zeros_like(rows0)
            Un = info["iterates"][min(n, len(info["iterates"])) - 1].U
            d_direct = es_norm(Un - rows_n - eps * rows_v1, sgrid.dt, sgrid.dy,
                               sgrid.dxd, opts.s - 1)["total"]
            Ufrozen = solver.linear_solve(rows_n)
            d_frozen = es_norm(Ufrozen - rows_n1 - eps * rows_v1, sgrid.dt,
                               sgrid.dy, sgrid.dxd, opts.s - 1)["total"]
            report.induction[n].append(d_direct)
            report.induction_frozen[n].append(d_frozen)
        report.runtimes.append(time.time() - t0)
        if opts.keep_fields:
            fields[eps] = (Ueps, rows0)
    report.meta["fields"] = fields if opts.keep_fields else None
    return report


def _trig_rows_on(v: TrigPolynomial, mt, src_grid: Grid, dst_grid: Grid,
                  eps: float) -> np.ndarray:
    """Interpolate a trig polynomial's fields and substitute on the dst grid."""
    vi = v.map_fields(lambda V: _interp_t_xd(V, src_grid, dst_grid, 0, 2))
    return substitute_rows(vi, mt, dst_grid.xd / eps, dst_grid.jmax)


def _layer_width(pset: ProfileSet, sgrid: Grid, eps: float):
    """x_d where the elliptic part of |U^0| decays to e^-2 of its boundary value."""
    mt = pset.mt
    if not mt.elliptic:
        return None
    im = min(abs(np.imag(mt.omegas[m])) for m in mt.elliptic)
    return 2.0 * eps / im

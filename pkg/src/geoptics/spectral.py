"""Trigonometric polynomials in M phase angles and the projector algebra.

Fields are represented as finite sums ``V(x, theta) = sum_alpha V_alpha(x)
e^{i alpha . theta}`` with multi-indices alpha carrying at most two nonzero
components and sign-constrained per mode.  Coefficients are numpy arrays of
arbitrary leading (grid) shape with a trailing state axis of length N.

The projectors defined here:

* ``project_E``     -- collapse each characteristic term to its single-phase
                       image ``P_m V_alpha e^{i n_alpha theta_m}``;
* ``project_Eflat`` -- same polarization but the multi-phase exponential is
                       kept (``P_m V_alpha e^{i alpha . theta}``);
* ``project_Eh`` / ``project_Ee`` -- restrict the mode sum to hyperbolic
                       (including the mean) or elliptic modes;
* ``project_Emk_scalar`` -- the scalar component series of one (m, k) slot.

Also implemented: the preparation map that filters a periodic series to the
multiples of a resonance integer, and the closed-form Fourier series of the
prepared interaction integrals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SpectrumViolation, UnindexedMode
from .modes import ModeTable
from .resonance import ResonanceSet, SpectrumLattice, Triple, coincides

__all__ = ["TrigPolynomial", "validate_support", "project_E", "project_Eflat",
           "project_Eh", "project_Ee", "project_Emk_scalar", "prepare",
           "interaction_integral", "interaction_quadrature", "mul_M_dtheta",
           "unit_alpha"]


def unit_alpha(M: int, m: int, n: int) -> tuple:
    a = [0] * M
    a[m] = n
    return tuple(a)


@dataclass
class TrigPolynomial:
    """Finite Fourier sum over multi-indices with <= 2 nonzero components."""

    M: int
    terms: dict = field(default_factory=dict)

    def copy(self) -> "TrigPolynomial":
        return TrigPolynomial(self.M, {a: v.copy() for a, v in self.terms.items()})

    def add_term(self, alpha, value):
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.M:
            raise ValueError("alpha length mismatch")
        if np.count_nonzero(alpha) > 2:
            raise SpectrumViolation(f"alpha = {alpha} has more than two nonzero slots")
        value = np.asarray(value)
        if alpha in self.terms:
            self.terms[alpha] = self.terms[alpha] + value
        else:
            self.terms[alpha] = np.array(value, dtype=complex)
        return self

    def __add__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        out = self.copy()
        for a, v in other.terms.items():
            out.add_term(a, v)
        return out

    def __sub__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        out = self.copy()
        for a, v in other.terms.items():
            out.add_term(a, -v)
        return out

    def scale(self, c) -> "TrigPolynomial":
        return TrigPolynomial(self.M, {a: c * v for a, v in self.terms.items()})

    def map_fields(self, f) -> "TrigPolynomial":
        """Apply a coefficient-wise map (e.g. an x-derivative) to every term."""
        return TrigPolynomial(self.M, {a: np.asarray(f(v), complex)
                                       for a, v in self.terms.items()})

    def dtheta(self, m: int) -> "TrigPolynomial":
        return TrigPolynomial(self.M, {a: 1j * a[m] * v for a, v in self.terms.items()
                                       if a[m] != 0})

    def prune(self, tol: float = 0.0) -> "TrigPolynomial":
        self.terms = {a: v for a, v in self.terms.items()
                      if np.max(np.abs(v)) > tol}
        return self

    def evaluate(self, theta) -> np.ndarray:
        """Pointwise value at a single (possibly complex) angle vector."""
        theta = np.asarray(theta)
        out = None
        for a, v in sorted(self.terms.items()):
            ph = np.exp(1j * np.dot(np.asarray(a), theta))
            out = ph * v if out is None else out + ph * v
        return out

    def norm2(self, s: float = 0.0) -> float:
        """Squared weighted l2 coefficient norm sum (1+|alpha|)^{2s} |V_alpha|^2."""
        tot = 0.0
        for a, v in self.terms.items():
            w = (1.0 + np.linalg.norm(a)) ** (2 * s)
            tot += w * float(np.sum(np.abs(v) ** 2))
        return tot

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(v))) for v in self.terms.values()), default=0.0)


def validate_support(v: TrigPolynomial, lat: SpectrumLattice):
    for a in v.terms:
        if np.count_nonzero(a) > 2:
            raise SpectrumViolation(f"{a} outside Z^(M;2)")
        for m, n in enumerate(a):
            if n and not lat.contains(m, n):
                raise SpectrumViolation(f"index {n} not in Z_{m}")


def _char_mode(v_alpha_key, mt: ModeTable, tol: float = 1e-10):
    """Return (m, n_alpha) if the key is characteristic, else None."""
    a = np.asarray(v_alpha_key, int)
    if not a.any():
        return None
    for m in range(mt.M):
        n = coincides(mt, a, m, tol)
        if n is not None and n != 0:
            return m, n
    return None


def _check_bound(alpha, rs: ResonanceSet | None):
    if rs is not None and max(abs(int(a)) for a in alpha) > rs.bound:
        raise UnindexedMode(
            f"characteristic index {alpha} exceeds the enumerated bound {rs.bound}")


def _project(v: TrigPolynomial, mt: ModeTable, flat: bool, modes, keep_mean: bool,
             rs: ResonanceSet | None, tol: float) -> TrigPolynomial:
    out = TrigPolynomial(v.M)
    for alpha, V in sorted(v.terms.items()):
        if not any(alpha):
            if keep_mean:
                out.add_term(alpha, V)
            continue
        hit = _char_mode(alpha, mt, tol)
        if hit is None:
            continue
        m, n = hit
        if m not in modes:
            continue
        _check_bound(alpha, rs)
        PV = V @ mt.P[m].T  # P_m acting on the trailing state axis
        key = alpha if flat else unit_alpha(v.M, m, n)
        out.add_term(key, PV)
    return out.prune()


def project_E(v: TrigPolynomial, mt: ModeTable, rs: ResonanceSet | None = None,
              tol: float = 1e-10) -> TrigPolynomial:
    """E V = V_0 + sum_m sum_{alpha in C_m \\ 0} P_m V_alpha e^{i n_alpha theta_m}."""
    return _project(v, mt, False, range(mt.M), True, rs, tol)


def project_Eflat(v: TrigPolynomial, mt: ModeTable, rs: ResonanceSet | None = None,
                  tol: float = 1e-10) -> TrigPolynomial:
    """Same polarization as E but keeping the multi-phase exponentials."""
    return _project(v, mt, True, range(mt.M), True, rs, tol)


def project_Eh(v: TrigPolynomial, mt: ModeTable, rs: ResonanceSet | None = None,
               tol: float = 1e-10) -> TrigPolynomial:
    """Mean part plus the incoming/outgoing single-phase components."""
    return _project(v, mt, False, set(mt.hyperbolic), True, rs, tol)


def project_Ee(v: TrigPolynomial, mt: ModeTable, rs: ResonanceSet | None = None,
               tol: float = 1e-10) -> TrigPolynomial:
    """Elliptic single-phase components (no mean)."""
    return _project(v, mt, False, set(mt.elliptic), False, rs, tol)


def project_Emk_scalar(v: TrigPolynomial, mt: ModeTable, m: int, k: int,
                       tol: float = 1e-10) -> dict:
    """Scalar series {n: l_{m,k} . V_alpha} of the (m,k) component of E V."""
    out: dict = {}
    lmk = mt.l[m][k]
    for alpha, V in sorted(v.terms.items()):
        if not any(alpha):
            continue
        hit = _char_mode(alpha, mt, tol)
        if hit is None or hit[0] != m:
            continue
        n = hit[1]
        c = V @ lmk
        out[n] = out.get(n, 0) + c
    return {n: c for n, c in out.items() if np.max(np.abs(c)) > 0}


# ---------------------------------------------------------------------------
# Preparation map and prepared interaction integrals
# ---------------------------------------------------------------------------


def prepare(series: dict, n_q: int) -> dict:
    """Keep exactly the Fourier coefficients at indices divisible by n_q.

    ``series`` maps integer indices to coefficients; the output keeps k*n_q
    entries at their original frequencies, which is the image of the
    preparation map.
    """
    if n_q == 0:
        raise ValueError("n_q must be nonzero")
    return {j: c for j, c in series.items() if j % n_q == 0}


def interaction_integral(a_series: dict, b_series: dict, n_p: int, n_q: int,
                         n_r: int, positive_only: bool = False) -> dict:
    """Closed-form series of the prepared integral J_{p, n_q, n_r}.

    With sigma_q = sum a_j e^{ij theta_q} and sigma_r = sum b_j e^{ij theta_r},
    the integral has coefficients a_{j n_q} b_{j n_r} i (j n_r) at frequency
    j n_p.  For an elliptic receiving phase only j > 0 contributes
    (``positive_only``).
    """
    out: dict = {}
    for aj_key, aval in sorted(a_series.items()):
        if aj_key == 0 or aj_key % n_q:
            continue
        j = aj_key // n_q
        if positive_only and j <= 0:
            continue
        bval = b_series.get(j * n_r)
        if bval is None:
            continue
        out[j * n_p] = out.get(j * n_p, 0) + aval * bval * (1j * j * n_r)
    return {k: v for k, v in out.items() if np.max(np.abs(v)) > 0}


def interaction_quadrature(a_series: dict, b_series: dict, n_p: int, n_q: int,
                           n_r: int, theta_p: float, n_quad: int = 512) -> complex:
    """Trapezoid quadrature of the defining prepared integral at one theta_p.

    Independent oracle for :func:`interaction_integral`: evaluates
    (sigma_q)_{n_q}(n_p/n_q theta_p - n_r/n_q theta_r) d_theta sigma_r(theta_r)
    and averages over a uniform theta_r grid.
    """
    th_r = np.linspace(0.0, 2 * np.pi, n_quad, endpoint=False)
    prepared = prepare(a_series, n_q)
    acc = 0.0
    for jq, c in sorted(prepared.items()):
        k = jq // n_q
        acc = acc + c * np.exp(1j * (k * n_p * theta_p - k * n_r * th_r))
    dsig = 0.0
    for j, c in sorted(b_series.items()):
        dsig = dsig + c * 1j * j * np.exp(1j * j * th_r)
    return complex(np.mean(acc * dsig))


def mul_M_dtheta(v1: TrigPolynomial, v2: TrigPolynomial, sys, beta) -> TrigPolynomial:
    """Exact quadratic form M(V1) d_theta V2 on trigonometric polynomials.

    M(V) d_theta W = sum_m sum_{j=0}^{d-1} beta_j dAtilde_j(0)[V] d_{theta_m} W,
    expanded term by term; the result generally lives in the two-nonzero-slot
    lattice when the factors are single-phase.
    """
    beta = np.asarray(beta, float)
    tensors = [sys.dAtilde0_tensor(j) for j in range(sys.d)]
    Dbeta = sum(beta[j] * tensors[j] for j in range(sys.d))
    out = TrigPolynomial(v1.M)
    for a1, V1 in sorted(v1.terms.items()):
        coef = np.einsum("abc,...c->...ab", Dbeta, V1)
        for a2, V2 in sorted(v2.terms.items()):
            # the matrix coefficient is the same for every m, so the theta
            # derivative contributes the total weight i * sum_m a2[m]
            weight = 1j * sum(a2)
            if weight == 0:
                continue
            key = tuple(x + y for x, y in zip(a1, a2))
            out.add_term(key, weight * np.einsum("...ab,...b->...a", coef, V2))
    return out.prune()

"""Enumeration of characteristic modes and resonance triples on sign-constrained lattices.

The Fourier support of the profile of mode m is restricted to

    Z_m = { n : n Im omega_m >= 0 },

i.e. all of Z for hyperbolic modes, positive (negative) integers for elliptic
modes with positive (negative) imaginary part.  A multi-index alpha with at
most two nonzero components is *characteristic for mode m* when
``alpha . phi = n_alpha phi_m`` for an integer n_alpha, which amounts to the
two scalar conditions ``sum_i alpha_i = n_alpha`` and
``alpha . omega = n_alpha omega_m``.  Resonances are the integer relations
``n_p phi_p = n_q phi_q + n_r phi_r`` coupling distinct phases; they are
normalized to gcd 1 with n_p > 0 for hyperbolic p, and deduplicated under the
six rearrangements of the relation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ClassificationContradiction, MultipleTripleFamilies
from .modes import ModeTable

__all__ = ["SpectrumLattice", "Triple", "ResonanceSet", "find_characteristic_modes",
           "find_resonances", "classify_resonance", "coincides"]

DEFAULT_TOL = 1e-10
DEFAULT_BOUND = 12


@dataclass(frozen=True)
class SpectrumLattice:
    """Per-mode sign constraints Z_m and the enumeration radius."""

    zsigns: tuple
    bound: int = DEFAULT_BOUND

    @classmethod
    def from_modes(cls, mt: ModeTable, bound: int = DEFAULT_BOUND) -> "SpectrumLattice":
        return cls(tuple(mt.zsign(m) for m in range(mt.M)), bound)

    @property
    def M(self) -> int:
        return len(self.zsigns)

    def contains(self, m: int, n: int) -> bool:
        s = self.zsigns[m]
        return True if s == 0 else (n * s >= 0)

    def indices(self, m: int, bound: int | None = None):
        """Nonzero lattice indices of Z_m up to the bound."""
        b = self.bound if bound is None else bound
        s = self.zsigns[m]
        if s > 0:
            return range(1, b + 1)
        if s < 0:
            return range(-b, 0)
        return [n for n in range(-b, b + 1) if n != 0]


@dataclass(frozen=True)
class Triple:
    """A normalized resonance n_p phi_p = n_q phi_q + n_r phi_r (q < r)."""

    p: int
    q: int
    r: int
    n_p: int
    n_q: int
    n_r: int

    def as_tuple(self):
        return (self.p, self.q, self.r, self.n_p, self.n_q, self.n_r)


@dataclass
class ResonanceSet:
    """All normalized resonance triples plus the characteristic-mode index."""

    triples: list
    charmodes: dict
    bound: int
    multiple_families: bool = False

    def to_report(self) -> dict:
        return {
            "bound": self.bound,
            "multiple_families": self.multiple_families,
            "triples": [list(t.as_tuple()) for t in self.triples],
            "characteristic_modes": {
                str(m): [[list(alpha), int(n)] for alpha, n in sorted(pairs)]
                for m, pairs in sorted(self.charmodes.items())
            },
        }


def _scaled_omegas(mt: ModeTable):
    om = np.asarray(mt.omegas, complex)
    scale = max(np.abs(om).max(), 1.0)
    return om / scale


def coincides(mt: ModeTable, alpha, m: int, tol: float = DEFAULT_TOL):
    """If alpha . phi = n phi_m for an integer n, return n, else None."""
    om = _scaled_omegas(mt)
    alpha = np.asarray(alpha, int)
    n = int(alpha.sum())
    if abs(complex(alpha @ om) - n * om[m]) <= tol:
        return n
    return None


def _alpha_iter(lat: SpectrumLattice, bound: int):
    """All alpha in Z^{M;2} with |alpha|_inf <= bound, alpha != 0 (sorted)."""
    M = lat.M
    out = []
    for q in range(M):
        for nq in lat.indices(q, bound):
            a = [0] * M
            a[q] = nq
            out.append(tuple(a))
        for r in range(q + 1, M):
            for nq in lat.indices(q, bound):
                for nr in lat.indices(r, bound):
                    a = [0] * M
                    a[q], a[r] = nq, nr
                    out.append(tuple(a))
    return sorted(out)


def find_characteristic_modes(mt: ModeTable, lat: SpectrumLattice,
                              bound: int | None = None, tol: float = DEFAULT_TOL) -> dict:
    """Map m -> set of (alpha, n_alpha) with alpha . phi = n_alpha phi_m, alpha != 0.

    Covers all alpha in Z^{M;2} with |alpha|_inf <= bound.  Singletons
    alpha = n e_m always land in C_m with n_alpha = n.
    """
    b = lat.bound if bound is None else bound
    om = _scaled_omegas(mt)
    out = {m: set() for m in range(mt.M)}
    for alpha in _alpha_iter(lat, b):
        a = np.asarray(alpha, int)
        n = int(a.sum())
        val = complex(a @ om)
        for m in range(mt.M):
            if abs(val - n * om[m]) <= tol:
                if n != 0 or np.count_nonzero(a) == 0:
                    out[m].add((alpha, n))
                break
    return out


def _normalize(p, q, r, n_p, n_q, n_r, zsigns):
    """Normalize one arrangement: gcd 1, and n_p > 0 when p is hyperbolic."""
    g = math.gcd(math.gcd(abs(n_p), abs(n_q)), abs(n_r))
    n_p, n_q, n_r = n_p // g, n_q // g, n_r // g
    if zsigns[p] == 0 and n_p < 0:
        n_p, n_q, n_r = -n_p, -n_q, -n_r
    if q > r:
        q, r, n_q, n_r = r, q, n_r, n_q
    return Triple(p, q, r, n_p, n_q, n_r)


def _valid_arrangement(t: Triple, zsigns) -> bool:
    if 0 in (t.n_p, t.n_q, t.n_r):
        return False
    ok = True
    for m, n in ((t.q, t.n_q), (t.r, t.n_r), (t.p, t.n_p)):
        s = zsigns[m]
        ok = ok and (s == 0 or n * s > 0)
    if zsigns[t.p] == 0 and t.n_p <= 0:
        ok = False
    return ok


def _family_key(t: Triple):
    """Canonical key of the rank-1 relation n_p phi_p - n_q phi_q - n_r phi_r = 0."""
    w = {t.p: t.n_p, t.q: -t.n_q, t.r: -t.n_r}
    items = sorted(w.items())
    vec = tuple(v for _, v in items)
    first = next(v for v in vec if v != 0)
    if first < 0:
        vec = tuple(-v for v in vec)
    return (tuple(k for k, _ in items), vec)


def find_resonances(mt: ModeTable, lat: SpectrumLattice, bound: int | None = None,
                    tol: float = DEFAULT_TOL) -> ResonanceSet:
    """Enumerate all normalized resonance triples within the lattice bound.

    Triples are deduplicated under the six-rearrangement equivalence: one
    canonical arrangement (lexicographically least valid one) is stored per
    family.  Emits a MultipleTripleFamilies warning when more than one
    distinct family exists; interaction terms are later summed over families.
    """
    b = lat.bound if bound is None else bound
    om = _scaled_omegas(mt)
    zs = lat.zsigns
    families: dict = {}
    for q in range(mt.M):
        for r in range(q + 1, mt.M):
            for nq in lat.indices(q, b):
                for nr in lat.indices(r, b):
                    n_p = nq + nr
                    if n_p == 0:
                        continue
                    val = nq * om[q] + nr * om[r]
                    for p in range(mt.M):
                        if p in (q, r):
                            continue
                        if abs(val - n_p * om[p]) > tol:
                            continue
                        if not lat.contains(p, n_p):
                            continue
                        t = _normalize(p, q, r, n_p, nq, nr, zs)
                        if not _valid_arrangement(t, zs):
                            continue
                        key = _family_key(t)
                        prev = families.get(key)
                        if prev is None or t.as_tuple() < prev.as_tuple():
                            families[key] = t
    triples = sorted(families.values(), key=Triple.as_tuple)
    for t in triples:
        classify_resonance(mt, t)
    charmodes = find_characteristic_modes(mt, lat, b, tol)
    multi = len(triples) > 1
    if multi:
        warnings.warn(
            f"{len(triples)} distinct resonance families found; interior "
            "interaction terms are summed over all of them",
            MultipleTripleFamilies, stacklevel=2)
    return ResonanceSet(triples=triples, charmodes=charmodes, bound=b,
                        multiple_families=multi)


def classify_resonance(mt: ModeTable, t: Triple) -> str:
    """'hyperbolic' iff p is real (then q, r must be), 'elliptic' otherwise.

    Raises ClassificationContradiction when the pairing rules are violated,
    which indicates a numerical failure upstream.
    """
    hyp = mt.is_hyperbolic
    if hyp(t.p):
        if not (hyp(t.q) and hyp(t.r)):
            raise ClassificationContradiction(
                f"hyperbolic resonance {t} formed with an elliptic phase")
        return "hyperbolic"
    if hyp(t.q) and hyp(t.r):
        raise ClassificationContradiction(
            f"elliptic resonance {t} formed by two hyperbolic phases")
    return "elliptic"

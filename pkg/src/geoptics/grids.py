"""Space-time grids, periodic-in-theta storage conventions, and boundary data.

The PDE solvers work in d = 2 on a tensor grid (t, y, x_d) with y periodic,
plus one periodic angle resolved spectrally.  Profile coefficients retain
Fourier indices |j| <= jmax with jmax = n_theta // 3, so quadratic products
evaluated pseudospectrally on the n_theta collocation grid are exactly
dealiased (2/3 rule).

Boundary forcing is a sum of Gaussian-windowed theta-harmonics, ramped so the
data vanish identically for t <= 0 and tapered to exactly compact support
in y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = ["Grid", "BoundaryHarmonic", "BoundaryData", "smoothstep", "taper_window"]


def smoothstep(s):
    """C^2 quintic ramp: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 + s * (6.0 * s - 15.0))


def taper_window(s):
    """C^2 plateau window: 1 for |s| <= 1/2, 0 for |s| >= 1."""
    return smoothstep(2.0 * (1.0 - np.abs(s)))


@dataclass(frozen=True)
class Grid:
    """Tensor grid for the profile and singular solvers (d = 2)."""

    t_final: float
    dt: float
    y_extent: float
    ny: int
    xd_extent: float
    nxd: int
    n_theta: int
    depth: float  # x_d depth D available to the elliptic layer cutoff

    @classmethod
    def build(cls, t_final, dt, y_extent, dy, xd_extent, dxd, n_theta, depth=None):
        if min(t_final, dt, y_extent, dy, xd_extent, dxd) <= 0:
            raise ConfigError("all grid steps and extents must be positive")
        if n_theta < 6 or n_theta % 2:
            raise ConfigError("n_theta must be an even integer >= 6")
        ny = int(round(y_extent / dy))
        nxd = int(round(xd_extent / dxd)) + 1
        if depth is None:
            depth = 0.9 * xd_extent
        return cls(t_final=float(t_final), dt=float(dt), y_extent=float(y_extent),
                   ny=ny, xd_extent=float(xd_extent), nxd=nxd,
                   n_theta=int(n_theta), depth=float(depth))

    @property
    def nt(self) -> int:
        return int(round(self.t_final / self.dt)) + 1

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.nt)

    @property
    def dy(self) -> float:
        return self.y_extent / self.ny

    @property
    def y(self) -> np.ndarray:
        return -0.5 * self.y_extent + self.dy * np.arange(self.ny)

    @property
    def dxd(self) -> float:
        return self.xd_extent / (self.nxd - 1)

    @property
    def xd(self) -> np.ndarray:
        return self.dxd * np.arange(self.nxd)

    @property
    def jmax(self) -> int:
        return self.n_theta // 3

    @property
    def theta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_theta) / self.n_theta

    def ky(self) -> np.ndarray:
        """Angular wavenumbers of the periodic y axis (fft order)."""
        return 2 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)


# ---------------------------------------------------------------------------
# Boundary forcing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryHarmonic:
    """One Gaussian-windowed theta_0 harmonic of the boundary data.

    ``harmonic = 0`` contributes to the theta-mean of G; ``component`` selects
    the boundary-condition row it feeds.
    """

    harmonic: int
    amplitude: float
    t_center: float
    t_width: float
    y_center: float = 0.0
    y_width: float = 0.5
    phase: float = 0.0
    component: int = 0
    t_ramp: float | None = None

    def window(self, t: np.ndarray, y: np.ndarray) -> np.ndarray:
        ramp = self.t_ramp if self.t_ramp is not None else 0.5 * self.t_center
        ramp = max(ramp, 1e-12)
        wt = np.where(t > 0, np.exp(-(((t - self.t_center) / self.t_width) ** 2)), 0.0)
        wt = wt * smoothstep(t / ramp)
        wy = np.exp(-(((y - self.y_center) / self.y_width) ** 2))
        wy = wy * taper_window((y - self.y_center) / (3.5 * self.y_width))
        return wt[:, None] * wy[None, :]


@dataclass
class BoundaryData:
    """Real boundary data G(x', theta_0) in R^p as windowed harmonics."""

    harmonics: list
    p: int

    def max_harmonic(self) -> int:
        return max((h.harmonic for h in self.harmonics), default=0)

    def amplitude(self) -> float:
        return float(sum(abs(h.amplitude) for h in self.harmonics))

    def coefficients(self, grid: Grid, t: np.ndarray | None = None) -> np.ndarray:
        """theta_0-Fourier coefficients, shape (jmax+1, nt, ny, p).

        Row n holds the coefficient of e^{i n theta_0}; G is real so the
        negative rows are conjugates.  Harmonic terms a cos(n theta + phi)
        contribute (a/2) e^{i phi} to row n.
        """
        t = grid.t if t is None else np.asarray(t)
        out = np.zeros((grid.jmax + 1, len(t), grid.ny, self.p), dtype=complex)
        for h in self.harmonics:
            if h.harmonic > grid.jmax:
                raise ConfigError(
                    f"harmonic {h.harmonic} exceeds retained modes jmax={grid.jmax}")
            if not 0 <= h.component < max(self.p, 1):
                raise ConfigError(f"component {h.component} out of range for p={self.p}")
            w = h.window(t, grid.y)
            if h.harmonic == 0:
                out[0, :, :, h.component] += h.amplitude * np.cos(h.phase) * w
            else:
                out[h.harmonic, :, :, h.component] += 0.5 * h.amplitude * np.exp(1j * h.phase) * w
        return out

    def values(self, grid: Grid, theta0: np.ndarray, t: np.ndarray | None = None) -> np.ndarray:
        """Physical values G(t, y, theta0), shape (nt, ny, len(theta0), p)."""
        coef = self.coefficients(grid, t)
        th = np.asarray(theta0)
        out = np.real(coef[0])[:, :, None, :] * np.ones((1, 1, th.size, 1))
        for n in range(1, coef.shape[0]):
            ph = np.exp(1j * n * th)
            out = out + 2 * np.real(coef[n][:, :, None, :] * ph[None, None, :, None])
        return out

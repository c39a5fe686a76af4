"""Axisymmetric field of a single air-core electromagnet at unit current.

The exact (slow) path superposes circular current loops evaluated with
complete elliptic integrals. The fast path samples that model once on an
``(r, z)`` grid and interpolates bilinearly. Coordinates are coil-local:
``z`` along the coil axis, ``r`` the distance from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ellipe, ellipk

from tricoil import MU0


class FieldDomainError(ValueError):
    """Raised when a field query falls outside the region a model can answer."""


@dataclass(frozen=True)
class CoilSpec:
    """Winding geometry of one electromagnet.

    ``radial_samples`` x ``axial_samples`` is the midpoint quadrature used to
    discretise the winding cross-section into filament loops; raise both to
    refine the model.
    """

    inner_radius: float = 0.019
    outer_radius: float = 0.045
    axial_length: float = 0.052
    turns: float = 6000.0
    max_current: float = 5.0
    radial_samples: int = 8
    axial_samples: int = 16

    def __post_init__(self):
        if not 0 < self.inner_radius <= self.outer_radius:
            raise ValueError("coil radii must satisfy 0 < inner_radius <= outer_radius")
        if self.axial_length <= 0:
            raise ValueError("axial_length must be positive")
        if self.turns < 1:
            raise ValueError("turns must be >= 1")
        if self.max_current <= 0:
            raise ValueError("max_current must be positive")
        if self.radial_samples < 1 or self.axial_samples < 1:
            raise ValueError("quadrature sample counts must be >= 1")

    def filaments(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Return loop radii, loop axial offsets and the turns carried per loop."""
        nr, nz = self.radial_samples, self.axial_samples
        dr = (self.outer_radius - self.inner_radius) / nr
        dz = self.axial_length / nz
        radii = self.inner_radius + (np.arange(nr) + 0.5) * dr
        offsets = -0.5 * self.axial_length + (np.arange(nz) + 0.5) * dz
        rr, zz = np.meshgrid(radii, offsets, indexing="ij")
        return rr.ravel(), zz.ravel(), self.turns / (nr * nz)

    def inside_winding(self, r, z) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        z = np.asarray(z, dtype=float)
        return (
            (r >= self.inner_radius)
            & (r <= self.outer_radius)
            & (np.abs(z) <= 0.5 * self.axial_length)
        )

    def as_dict(self) -> dict:
        return {
            "inner_radius": self.inner_radius,
            "outer_radius": self.outer_radius,
            "axial_length": self.axial_length,
            "turns": self.turns,
            "max_current": self.max_current,
            "radial_samples": self.radial_samples,
            "axial_samples": self.axial_samples,
        }


def loop_field(loop_radius, current, r, z):
    """Field ``(B_r, B_z)`` in tesla of a filament loop centred at the origin.

    Vectorised over ``r`` and ``z``. The loop lies in the plane ``z = 0``;
    positive current gives positive ``B_z`` at the centre.
    """
    if loop_radius <= 0:
        raise ValueError("loop_radius must be positive")
    r, z = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(z, dtype=float))
    if np.any(r < 0):
        raise ValueError("radial coordinate must be non-negative")
    R = float(loop_radius)
    alpha2 = R * R + r * r + z * z - 2.0 * R * r
    if np.any(alpha2 == 0.0):
        raise FieldDomainError("on-conductor evaluation")
    beta2 = R * R + r * r + z * z + 2.0 * R * r
    beta = np.sqrt(beta2)
    m = 1.0 - alpha2 / beta2
    K = ellipk(m)
    E = ellipe(m)
    c = MU0 * current / np.pi
    bz = c / (2.0 * alpha2 * beta) * ((R * R - r * r - z * z) * E + alpha2 * K)
    # near the axis the closed form cancels catastrophically; use the leading
    # term of its expansion in r (relative error O(r^2/R^2) < 1e-12 there)
    near_axis = r < 1e-6 * R
    safe_r = np.where(near_axis, 1.0, r)
    br = c * z / (2.0 * alpha2 * beta * safe_r) * ((R * R + r * r + z * z) * E - alpha2 * K)
    br_axis = 3.0 * MU0 * current * R * R * z * r / (4.0 * (R * R + z * z) ** 2.5)
    br = np.where(near_axis, br_axis, br)
    if br.ndim == 0:
        return float(br), float(bz)
    return br, bz


def coil_unit_field(spec: CoilSpec, r, z):
    """Field per ampere of coil current, ``(B_r, B_z)`` in T/A.

    Raises :class:`FieldDomainError` for points inside the winding volume.
    """
    r, z = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(z, dtype=float))
    if np.any(spec.inside_winding(r, z)):
        raise FieldDomainError("inside winding volume")
    radii, offsets, per_loop = spec.filaments()
    br = np.zeros(r.shape)
    bz = np.zeros(r.shape)
    for R, z0 in zip(radii, offsets):
        dbr, dbz = loop_field(R, 1.0, r, z - z0)
        br += dbr
        bz += dbz
    br *= per_loop
    bz *= per_loop
    if br.ndim == 0:
        return float(br), float(bz)
    return br, bz


@dataclass(frozen=True, eq=False)
class AxisymmetricFieldMap:
    """Unit-current ``(B_r, B_z)`` samples on a rectilinear ``(r, z)`` grid.

    Nodes inside the winding are stored as NaN; any interpolation that would
    put weight on such a node is refused.
    """

    r_grid: np.ndarray
    z_grid: np.ndarray
    B_r: np.ndarray
    B_z: np.ndarray
    spec: CoilSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("r_grid", "z_grid"):
            g = np.asarray(getattr(self, name), dtype=float)
            if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
                raise ValueError(f"{name} must be strictly increasing with >= 2 entries")
            g.setflags(write=False)
            object.__setattr__(self, name, g)
        shape = (self.r_grid.size, self.z_grid.size)
        for name in ("B_r", "B_z"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != shape:
                raise ValueError(f"{name} has shape {a.shape}, expected {shape}")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.r_grid[0] < 0:
            raise ValueError("r_grid must start at r >= 0")

    @property
    def masked(self) -> np.ndarray:
        return ~(np.isfinite(self.B_r) & np.isfinite(self.B_z))

    def _cell(self, grid, x):
        i = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
        t = (x - grid[i]) / (grid[i + 1] - grid[i])
        return i, t

    def sample(self, r, z, strict: bool = True):
        """Bilinear interpolation at coil-local ``(r, z)``.

        With ``strict=False`` invalid queries yield NaN instead of raising.
        """
        r, z = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(z, dtype=float))
        outside = (
            (r < self.r_grid[0]) | (r > self.r_grid[-1])
            | (z < self.z_grid[0]) | (z > self.z_grid[-1])
            | ~np.isfinite(r) | ~np.isfinite(z)
        )
        if strict and np.any(outside):
            raise FieldDomainError("outside field map domain")
        rc = np.where(outside, self.r_grid[0], r)
        zc = np.where(outside, self.z_grid[0], z)
        i, tr = self._cell(self.r_grid, rc)
        j, tz = self._cell(self.z_grid, zc)
        weights = ((1 - tr) * (1 - tz), tr * (1 - tz), (1 - tr) * tz, tr * tz)
        corners = ((i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1))
        out = []
        bad = outside.copy()
        for table in (self.B_r, self.B_z):
            acc = np.zeros(r.shape)
            for w, (a, b) in zip(weights, corners):
                v = table[a, b]
                hit = w != 0
                bad |= hit & ~np.isfinite(v)
                acc = acc + np.where(hit, w * np.nan_to_num(v), 0.0)
            out.append(acc)
        if np.any(bad):
            if strict:
                raise FieldDomainError("query touches masked winding cell")
            out = [np.where(bad, np.nan, o) for o in out]
        br, bz = out
        if br.ndim == 0:
            return float(br), float(bz)
        return br, bz


def default_grids(r_max: float = 0.25, z_half: float = 0.30, spacing: float = 1.5e-3):
    n_r = int(round(r_max / spacing)) + 1
    n_z = int(round(2 * z_half / spacing)) + 1
    return np.linspace(0.0, r_max, n_r), np.linspace(-z_half, z_half, n_z)


def build_field_map(spec: CoilSpec, r_grid=None, z_grid=None, mask_winding: bool = True):
    """Sample :func:`coil_unit_field` on every node of an ``(r, z)`` grid."""
    if r_grid is None or z_grid is None:
        dr, dz = default_grids()
        r_grid = dr if r_grid is None else r_grid
        z_grid = dz if z_grid is None else z_grid
    r_grid = np.asarray(r_grid, dtype=float)
    z_grid = np.asarray(z_grid, dtype=float)
    if np.any(np.diff(r_grid) <= 0) or np.any(np.diff(z_grid) <= 0):
        raise ValueError("grids must be strictly increasing")
    R, Z = np.meshgrid(r_grid, z_grid, indexing="ij")
    inside = spec.inside_winding(R, Z)
    if np.any(inside) and not mask_winding:
        raise FieldDomainError("grid overlaps the winding volume and masking is disabled")
    br = np.full(R.shape, np.nan)
    bz = np.full(R.shape, np.nan)
    ok = ~inside
    br[ok], bz[ok] = coil_unit_field(spec, R[ok], Z[ok])
    # exact zero on the axis, independent of elliptic-integral rounding
    br[r_grid == 0.0, :] = np.where(ok[r_grid == 0.0, :], 0.0, np.nan)
    return AxisymmetricFieldMap(r_grid, z_grid, br, bz, spec=spec)

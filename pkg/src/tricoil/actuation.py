"""Actuation matrix, gradient basis, current synthesis and the field library.

Every coil is an identical axisymmetric source placed by a :class:`CoilPose`.
Column ``k`` of the actuation matrix is the field of coil ``k`` at 1 A; the
gradient tensor ``G[k]`` is its spatial Jacobian, ``G[k][m, n] = d a_m / d x_n``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from tricoil.coilfield import AxisymmetricFieldMap, CoilSpec, FieldDomainError, coil_unit_field
from tricoil.mechanism import ClearanceModel, CoilMount, CoilPose, z_limit


class UnreachableFieldError(ValueError):
    def __init__(self, residual: float):
        super().__init__(f"unreachable field direction (residual {residual:.3e} T)")
        self.residual = residual


def local_coords(p, pose: CoilPose):
    """Coil-local cylindrical coordinates of point(s) ``p``.

    Returns ``(r, z, e_r)``. Where ``r == 0`` the radial unit vector falls back
    to the pose's ``x_dir``.
    """
    p = np.asarray(p, dtype=float)
    d = p - pose.center
    z = d @ pose.axis
    radial = d - np.multiply.outer(z, pose.axis)
    r = np.linalg.norm(radial, axis=-1)
    zero = r == 0.0
    e_r = np.where(zero[..., None], pose.x_dir, radial / np.where(zero, 1.0, r)[..., None])
    return r, z, e_r


class DirectSource:
    """Per-coil field evaluated with the exact loop superposition (no map)."""

    def __init__(self, spec: CoilSpec):
        self.spec = spec

    def __call__(self, r, z, strict: bool = True):
        r = np.asarray(r, dtype=float)
        z = np.asarray(z, dtype=float)
        inside = self.spec.inside_winding(r, z)
        if strict and np.any(inside):
            raise FieldDomainError("inside winding volume")
        br = np.full(r.shape, np.nan)
        bz = np.full(r.shape, np.nan)
        ok = ~inside
        br[ok], bz[ok] = coil_unit_field(self.spec, r[ok], z[ok])
        return br, bz


def map_source(fmap: AxisymmetricFieldMap) -> Callable:
    return fmap.sample


class CoilArray:
    """Three posed coils sharing one unit-current field source."""

    def __init__(self, poses: Sequence[CoilPose], source: Callable):
        self.poses = list(poses)
        self.source = source

    def coil_field(self, k: int, p, strict: bool = True) -> np.ndarray:
        pose = self.poses[k]
        r, z, e_r = local_coords(p, pose)
        try:
            br, bz = self.source(r, z, strict=strict)
        except FieldDomainError as exc:
            raise FieldDomainError(f"coil {k}: {exc}") from None
        br = np.asarray(br)[..., None]
        bz = np.asarray(bz)[..., None]
        return br * e_r + bz * pose.axis

    def matrix(self, p, strict: bool = True) -> np.ndarray:
        """Actuation matrices, shape ``(..., 3, 3)``."""
        cols = [self.coil_field(k, p, strict) for k in range(len(self.poses))]
        return np.stack(cols, axis=-1)

    def coil_gradient(self, k: int, p, delta: float, strict: bool = True) -> np.ndarray:
        """Central-difference Jacobian of coil ``k``'s field, shape ``(..., 3, 3)``.

        The six stencil points lie along the coil's own frame axes; the
        directional differences are rotated back to the mechanism frame.
        """
        p = np.asarray(p, dtype=float)
        Q = self.poses[k].frame
        cols = []
        for n in range(3):
            step = delta * Q[:, n]
            plus = self.coil_field(k, p + step, strict)
            minus = self.coil_field(k, p - step, strict)
            cols.append((plus - minus) / (2.0 * delta))
        D = np.stack(cols, axis=-1)
        return D @ Q.T

    def gradients(self, p, delta: float, strict: bool = True) -> np.ndarray:
        """Gradient basis, shape ``(..., 3, 3, 3)`` indexed ``[k, m, n]``."""
        return np.stack([self.coil_gradient(k, p, delta, strict) for k in range(len(self.poses))],
                        axis=-3)


@dataclass(frozen=True, eq=False)
class ActuationMatrix:
    matrix: np.ndarray
    position: np.ndarray
    theta: float

    @property
    def columns(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(self.matrix[:, k] for k in range(3))

    def __matmul__(self, currents):
        return self.matrix @ np.asarray(currents, dtype=float)


@dataclass(frozen=True, eq=False)
class GradientBasis:
    tensors: np.ndarray
    delta: float

    def combine(self, currents) -> np.ndarray:
        return np.einsum("k,kmn->mn", np.asarray(currents, dtype=float), self.tensors)

    def maxwell_residuals(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coil relative asymmetry and relative trace."""
        return maxwell_residuals(self.tensors)


def maxwell_residuals(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    G = np.asarray(G, dtype=float)
    norm = np.linalg.norm(G, axis=(-2, -1))
    asym = np.linalg.norm(G - np.swapaxes(G, -1, -2), axis=(-2, -1))
    trace = np.abs(np.trace(G, axis1=-2, axis2=-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return asym / norm, trace / norm


@dataclass(frozen=True, eq=False)
class CurrentVector:
    currents: np.ndarray
    feasible: bool
    residual: float = 0.0

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.currents, dtype=dtype)

    def __iter__(self):
        return iter(self.currents)


def actuation_matrix(p, theta: float, fmap, poses: Sequence[CoilPose]) -> ActuationMatrix:
    source = fmap if callable(fmap) and not isinstance(fmap, AxisymmetricFieldMap) else fmap.sample
    p = np.asarray(p, dtype=float)
    return ActuationMatrix(CoilArray(poses, source).matrix(p), p, theta)


def gradient_basis(p, theta: float, fmap, poses: Sequence[CoilPose], delta: float) -> GradientBasis:
    source = fmap if callable(fmap) and not isinstance(fmap, AxisymmetricFieldMap) else fmap.sample
    p = np.asarray(p, dtype=float)
    return GradientBasis(CoilArray(poses, source).gradients(p, delta), delta)


def least_norm_currents(A, B_target, I_max: float, rcond: float = 1e-8,
                        tol: float = 1e-9) -> CurrentVector:
    """Minimum 2-norm currents realising ``B_target`` through ``A``.

    Singular values below ``rcond * sigma_max`` are dropped. The result is
    returned even when it violates ``I_max``; ``feasible`` records that.
    """
    A = np.asarray(getattr(A, "matrix", A), dtype=float)
    b = np.asarray(B_target, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("target field must be finite")
    U, s, Vt = np.linalg.svd(A)
    keep = s > rcond * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    i = Vt.T @ (inv * (U.T @ b))
    residual = float(np.linalg.norm(A @ i - b))
    if residual > tol * max(float(np.linalg.norm(b)), 1e-300) and np.linalg.norm(b) > 0:
        raise UnreachableFieldError(residual)
    return CurrentVector(i, bool(np.max(np.abs(i)) <= I_max), residual)


def pinv_batch(A: np.ndarray, rcond: float = 1e-8) -> np.ndarray:
    """Vectorised pseudoinverse with the same relative cutoff."""
    U, s, Vt = np.linalg.svd(A)
    keep = s > rcond * s[..., :1]
    inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return np.swapaxes(Vt, -1, -2) @ (inv[..., :, None] * np.swapaxes(U, -1, -2))


# ---------------------------------------------------------------------------
# offline library

@dataclass(frozen=True)
class LibraryGrid:
    xy_half: float = 0.05
    z_min: float = -0.30
    spacing: float = 0.0025

    def axes(self, z_top: float):
        n_xy = int(round(2 * self.xy_half / self.spacing)) + 1
        # symmetric about the axis so that x = y = 0 is an exact node
        xy = self.spacing * (np.arange(n_xy) - 0.5 * (n_xy - 1))
        n_z = int(math.floor((z_top - self.z_min) / self.spacing + 1e-9)) + 1
        z = self.z_min + self.spacing * np.arange(n_z)
        if z_top - z[-1] > 1e-9:
            z = np.append(z, z_top)
        return xy, xy.copy(), z

    def as_dict(self) -> dict:
        return {"xy_half": self.xy_half, "z_min": self.z_min, "spacing": self.spacing}


@dataclass(frozen=True)
class LibraryConfig:
    coil: CoilSpec = field(default_factory=CoilSpec)
    mount: CoilMount = field(default_factory=CoilMount)
    clearance: ClearanceModel = field(default_factory=ClearanceModel)
    grid: LibraryGrid = field(default_factory=LibraryGrid)
    thetas_deg: tuple[float, ...] = (35.0, 45.0, 55.0)
    fd_step: float | None = None
    map_r_max: float = 0.25
    map_z_half: float = 0.30
    map_spacing: float = 1.5e-3

    @property
    def delta(self) -> float:
        return self.grid.spacing if self.fd_step is None else self.fd_step

    def describe(self) -> dict:
        return {
            "coil": self.coil.as_dict(),
            "mount": self.mount.as_dict(),
            "clearance": self.clearance.as_dict(),
            "grid": self.grid.as_dict(),
            "thetas_deg": list(self.thetas_deg),
            "fd_step": self.delta,
            "field_map": {"r_max": self.map_r_max, "z_half": self.map_z_half,
                          "spacing": self.map_spacing},
        }


def config_hash(desc: dict) -> str:
    return hashlib.sha256(json.dumps(desc, sort_keys=True).encode()).hexdigest()


@dataclass(eq=False)
class LibrarySlice:
    """One theta of the library. Arrays are ``(nz, ny, nx, ...)``, x fastest."""

    theta: float
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    A: np.ndarray
    G: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.A).all(axis=(-2, -1)) & np.isfinite(self.G).all(axis=(-3, -2, -1))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.z.size, self.y.size, self.x.size)

    def nodes(self) -> np.ndarray:
        Z, Y, X = np.meshgrid(self.z, self.y, self.x, indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    def interpolate(self, p):
        """Trilinear interpolation of ``A`` and ``G`` at point(s) ``p``."""
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        lo = np.array([self.x[0], self.y[0], self.z[0]])
        hi = np.array([self.x[-1], self.y[-1], self.z[-1]])
        if np.any(p < lo - 1e-12) or np.any(p > hi + 1e-12):
            raise FieldDomainError("point outside library grid")
        idx, wts = [], []
        for axis, g in zip(range(3), (self.x, self.y, self.z)):
            v = np.clip(p[:, axis], g[0], g[-1])
            i = np.clip(np.searchsorted(g, v, side="right") - 1, 0, g.size - 2)
            t = (v - g[i]) / (g[i + 1] - g[i])
            t = np.where(v == g[i + 1], 1.0, t)  # nodes return stored values exactly
            idx.append(i)
            wts.append(t)
        A = np.zeros((p.shape[0], 3, 3))
        G = np.zeros((p.shape[0], 3, 3, 3))
        bad = np.zeros(p.shape[0], dtype=bool)
        for cx in (0, 1):
            wx = wts[0] if cx else 1 - wts[0]
            for cy in (0, 1):
                wy = wts[1] if cy else 1 - wts[1]
                for cz in (0, 1):
                    wz = wts[2] if cz else 1 - wts[2]
                    w = wx * wy * wz
                    a = self.A[idx[2] + cz, idx[1] + cy, idx[0] + cx]
                    g = self.G[idx[2] + cz, idx[1] + cy, idx[0] + cx]
                    hit = w != 0
                    bad |= hit & ~(np.isfinite(a).all(axis=(1, 2)) & np.isfinite(g).all(axis=(1, 2, 3)))
                    A += np.where(hit[:, None, None], w[:, None, None] * np.nan_to_num(a), 0.0)
                    G += np.where(hit[:, None, None, None], w[:, None, None, None] * np.nan_to_num(g), 0.0)
        if np.any(bad):
            raise FieldDomainError("interpolation touches an invalid library node")
        if single:
            return A[0], G[0]
        return A, G


@dataclass(eq=False)
class FieldLibrary:
    slices: list[LibrarySlice]
    metadata: dict

    @property
    def theta_values(self) -> np.ndarray:
        return np.array([s.theta for s in self.slices])

    def slice_for(self, theta: float) -> LibrarySlice:
        for s in self.slices:
            if abs(s.theta - theta) < 1e-9:
                return s
        avail = ", ".join(f"{math.degrees(t):g}" for t in self.theta_values)
        raise KeyError(f"theta={math.degrees(theta):g} deg not in library; available: {{{avail}}} deg")

    @property
    def clearance(self) -> ClearanceModel:
        c = self.metadata["config"]["clearance"]
        return ClearanceModel(c["z_ref"], math.radians(c["theta_ref_deg"]), c["coil_extent"])

    def matrices(self, p, theta: float):
        """Interpolated ``(A, G)`` arrays at point(s) ``p``."""
        return self.slice_for(theta).interpolate(p)

    def query(self, p, theta: float):
        s = self.slice_for(theta)
        A, G = s.interpolate(p)
        delta = float(self.metadata.get("fd_step", float("nan")))
        if np.ndim(A) == 2:
            return ActuationMatrix(A, np.asarray(p, dtype=float), theta), GradientBasis(G, delta)
        return A, G


class DirectModel:
    """Library-free evaluation of ``A`` and ``G`` for any theta.

    Uses a field map when given, else the exact loop superposition.
    """

    def __init__(self, cfg: LibraryConfig | None = None, fmap: AxisymmetricFieldMap | None = None):
        self.cfg = cfg or LibraryConfig()
        self.source = fmap.sample if fmap is not None else DirectSource(self.cfg.coil)

    @property
    def clearance(self) -> ClearanceModel:
        return self.cfg.clearance

    def array(self, theta: float) -> CoilArray:
        return CoilArray(self.cfg.mount.poses(theta, self.cfg.clearance), self.source)

    def matrices(self, p, theta: float, delta: float | None = None):
        arr = self.array(theta)
        return arr.matrix(p), arr.gradients(p, self.cfg.delta if delta is None else delta)


def query_library(lib: FieldLibrary, p, theta: float):
    return lib.query(p, theta)


def winding_distance(p, poses: Sequence[CoilPose], spec: CoilSpec) -> np.ndarray:
    """Distance from point(s) ``p`` to the nearest winding cross-section."""
    out = None
    for pose in poses:
        r, z, _ = local_coords(p, pose)
        dr = np.maximum.reduce([spec.inner_radius - r, np.zeros_like(r), r - spec.outer_radius])
        dz = np.maximum(np.abs(z) - 0.5 * spec.axial_length, 0.0)
        d = np.hypot(dr, dz)
        out = d if out is None else np.minimum(out, d)
    return out


def build_slice(cfg: LibraryConfig, theta: float, source: Callable) -> LibrarySlice:
    zl = z_limit(theta, cfg.clearance)
    x, y, z = cfg.grid.axes(zl)
    arr = CoilArray(cfg.mount.poses(theta, cfg.clearance), source)
    Z, Y, X = np.meshgrid(z, y, x, indexing="ij")
    P = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
    A = arr.matrix(P, strict=False)
    G = arr.gradients(P, cfg.delta, strict=False)
    bad = ~(np.isfinite(A).all(axis=(1, 2)) & np.isfinite(G).all(axis=(1, 2, 3)))
    A[bad] = np.nan
    G[bad] = np.nan
    n = (z.size, y.size, x.size)
    return LibrarySlice(theta, x, y, z, A.reshape(n + (3, 3)), G.reshape(n + (3, 3, 3)))


def build_field_map_for(cfg: LibraryConfig) -> AxisymmetricFieldMap:
    from tricoil.coilfield import build_field_map, default_grids

    r_grid, z_grid = default_grids(cfg.map_r_max, cfg.map_z_half, cfg.map_spacing)
    return build_field_map(cfg.coil, r_grid, z_grid)


def build_library(cfg: LibraryConfig | None = None, fmap: AxisymmetricFieldMap | None = None) -> FieldLibrary:
    """Tabulate ``A`` and ``G`` over the collision-free grid of every theta.

    Nodes whose stencil leaves the field map are stored as NaN (invalid).
    """
    cfg = cfg or LibraryConfig()
    fmap = fmap or build_field_map_for(cfg)
    slices = [build_slice(cfg, math.radians(t), fmap.sample) for t in sorted(cfg.thetas_deg)]
    desc = cfg.describe()
    meta = {
        "config": desc,
        "config_hash": config_hash(desc),
        "coil_hash": config_hash(cfg.coil.as_dict()),
        "fd_step": cfg.delta,
        "units": {"position": "m", "A": "T/A", "G": "T/(A*m)", "theta": "rad"},
    }
    return FieldLibrary(slices, meta)


def field(p, theta: float, currents, source) -> np.ndarray:
    """``B = A(p, theta) i`` from a library, :class:`DirectModel` or :class:`CoilArray`."""
    A, _ = _matrices(source, p, theta, need_gradient=False)
    return A @ np.asarray(currents, dtype=float)


def field_gradient(p, theta: float, currents, source, delta: float | None = None) -> np.ndarray:
    """``grad B = sum_k i_k G_k``, indexed ``[m, n] = dB_m/dx_n``."""
    _, G = _matrices(source, p, theta, need_gradient=True, delta=delta)
    return np.einsum("k,...kmn->...mn", np.asarray(currents, dtype=float), G)


def _matrices(source, p, theta, need_gradient=True, delta=None):
    if isinstance(source, CoilArray):
        A = source.matrix(p)
        G = source.gradients(p, delta) if need_gradient else None
        return A, G
    if isinstance(source, DirectModel):
        if not need_gradient:
            return source.array(theta).matrix(p), None
        return source.matrices(p, theta, delta)
    if hasattr(source, "matrices"):
        return source.matrices(p, theta)
    raise TypeError("source must be a FieldLibrary, DirectModel or CoilArray")

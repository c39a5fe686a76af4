"""Energy density, worst-case field capability and the feasible workspace."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from tricoil import MU0
from tricoil.actuation import FieldLibrary


@dataclass(frozen=True)
class FeasibilitySpec:
    I_max: float = 5.0
    B_req: float = 1e-3
    sphere_samples: int = 512

    def __post_init__(self):
        if self.I_max <= 0 or self.B_req < 0:
            raise ValueError("I_max must be positive and B_req non-negative")
        if self.sphere_samples < 64:
            raise ValueError("sphere_samples must be >= 64")


def fibonacci_directions(n: int) -> np.ndarray:
    """Golden-angle Fibonacci lattice of ``n`` unit vectors."""
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def energy_density(B) -> np.ndarray:
    """``|B|^2 / (2 mu0)`` in J/m^3 for field vector(s) ``B``."""
    B = np.asarray(B, dtype=float)
    return np.sum(B * B, axis=-1) / (2.0 * MU0)


def directional_max_field(A, u_dir, I_max: float) -> float:
    """Largest field along ``u_dir`` reachable with ``|i_k| <= I_max``."""
    u = np.asarray(u_dir, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    A = np.asarray(getattr(A, "matrix", A), dtype=float)
    return float(I_max * np.abs(A.T @ u).sum())


def sample_directions(n: int) -> np.ndarray:
    """Fibonacci lattice plus the three coordinate axes.

    The objective is even in ``u``, so the axes cover all six poles; they are
    where ``|u|_1`` is smallest, which a lattice of any size misses.
    """
    return np.vstack([fibonacci_directions(n), np.eye(3)])


def b_min(A, spec: FeasibilitySpec | None = None) -> np.ndarray | float:
    """Worst-case directional capability; vectorised over leading axes of ``A``."""
    spec = spec or FeasibilitySpec()
    A = np.asarray(getattr(A, "matrix", A), dtype=float)
    U = sample_directions(spec.sphere_samples)
    flat = A.reshape(-1, 3, 3)
    out = np.empty(flat.shape[0])
    chunk = 4096
    for s in range(0, flat.shape[0], chunk):
        proj = np.matmul(U, flat[s:s + chunk])
        out[s:s + chunk] = np.abs(proj).sum(axis=-1).min(axis=-1)
    out *= spec.I_max
    if A.ndim == 2:
        return float(out[0])
    return out.reshape(A.shape[:-2])


def hull_volume(points) -> float:
    """Convex-hull volume; zero for fewer than four affinely independent points."""
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    if P.shape[0] < 4:
        return 0.0
    centred = P - P.mean(axis=0)
    scale = np.abs(centred).max()
    if scale == 0 or np.linalg.matrix_rank(centred / scale, tol=1e-10) < 3:
        return 0.0
    try:
        return float(ConvexHull(P).volume)
    except QhullError:
        return 0.0


@dataclass(frozen=True, eq=False)
class WorkspaceReport:
    theta: float
    nodes: np.ndarray
    b_min: np.ndarray
    feasible: np.ndarray
    hull_volume: float
    energy_depth_profile: np.ndarray

    @property
    def feasible_count(self) -> int:
        return int(self.feasible.sum())

    def summary(self) -> dict:
        return {"theta_deg": math.degrees(self.theta), "hull_volume_m3": self.hull_volume,
                "feasible_count": self.feasible_count, "node_count": int(self.nodes.shape[0])}


def axis_energy_profile(lib: FieldLibrary, theta: float, currents=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Rows ``(z, log10 u)`` on the symmetry axis under fixed currents."""
    s = lib.slice_for(theta)
    ix = int(np.argmin(np.abs(s.x)))
    iy = int(np.argmin(np.abs(s.y)))
    if abs(s.x[ix]) > 1e-12 or abs(s.y[iy]) > 1e-12:
        raise ValueError("library grid has no nodes on the symmetry axis")
    A = s.A[:, iy, ix]
    B = A @ np.asarray(currents, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logu = np.log10(energy_density(B))
    return np.column_stack([s.z, logu])


def feasible_workspace(lib: FieldLibrary, theta: float, spec: FeasibilitySpec | None = None) -> WorkspaceReport:
    spec = spec or FeasibilitySpec()
    s = lib.slice_for(theta)
    nodes = s.nodes().reshape(-1, 3)
    A = s.A.reshape(-1, 3, 3)
    valid = s.valid.reshape(-1)
    bm = np.full(nodes.shape[0], np.nan)
    bm[valid] = b_min(A[valid], spec)
    feasible = valid & (np.nan_to_num(bm, nan=-np.inf) >= spec.B_req)
    return WorkspaceReport(theta, nodes, bm, feasible, hull_volume(nodes[feasible]),
                           axis_energy_profile(lib, theta))

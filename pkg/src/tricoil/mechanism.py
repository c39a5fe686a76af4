"""Planar PRRR linkage that sets the coil polar angle, and coil placement.

Plane coordinates are ``(x, z)`` with ``+z`` up. A slider point ``S`` moves
along a fixed axis through the origin; the coupler ``BC`` connects the slider
to the rocker ``CD`` pivoting about ``D``. The coil axis ``DE`` is the rocker
direction turned counter-clockwise by ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class MechanismLockedError(ValueError):
    """The coupler and rocker circles do not intersect for the requested input."""


@dataclass(frozen=True)
class LinkageGeometry:
    slider_axis: tuple[float, float] = (0.0, 1.0)
    point_A: tuple[float, float] = (0.060, 0.0)
    point_D: tuple[float, float] = (0.060, 0.010)
    len_BC: float = 0.040
    len_CD: float = 0.025
    len_DE: float = 0.055
    slider_offset_B: tuple[float, float] = (0.035, 0.0)
    alpha: float = math.pi / 3
    s_range: tuple[float, float] = (0.0034, 0.018)

    def __post_init__(self):
        if min(self.len_BC, self.len_CD, self.len_DE) <= 0:
            raise ValueError("link lengths must be positive")
        if not self.s_range[0] < self.s_range[1]:
            raise ValueError("s_range must be a non-empty interval")
        if abs(math.hypot(*self.slider_axis) - 1.0) > 1e-12:
            raise ValueError("slider_axis must be a unit vector")

    def as_dict(self) -> dict:
        return {
            "slider_axis": list(self.slider_axis),
            "point_A": list(self.point_A),
            "point_D": list(self.point_D),
            "len_BC": self.len_BC,
            "len_CD": self.len_CD,
            "len_DE": self.len_DE,
            "slider_offset_B": list(self.slider_offset_B),
            "alpha": self.alpha,
            "s_range": list(self.s_range),
        }


@dataclass(frozen=True)
class MechanismState:
    s: float
    psi: float
    phi: float
    theta: float
    point_B: np.ndarray
    point_C: np.ndarray
    point_E: np.ndarray


def _solve(geom: LinkageGeometry, s: float) -> MechanismState:
    B = s * np.asarray(geom.slider_axis, float) + np.asarray(geom.slider_offset_B, float)
    D = np.asarray(geom.point_D, float)
    BD = D - B
    d = math.hypot(*BD)
    if d > geom.len_BC + geom.len_CD or d < abs(geom.len_BC - geom.len_CD) or d == 0.0:
        raise MechanismLockedError(f"mechanism locked at s={s:.6g} m (|BD|={d:.6g} m)")
    a = (geom.len_BC**2 - geom.len_CD**2 + d * d) / (2.0 * d)
    h = math.sqrt(max(geom.len_BC**2 - a * a, 0.0))
    mid = B + a * BD / d
    perp = np.array([-BD[1], BD[0]]) / d
    c1, c2 = mid + h * perp, mid - h * perp
    # elbow-up assembly: the intersection with the larger z
    C = c1 if c1[1] >= c2[1] else c2
    psi = math.atan2(C[1] - D[1], C[0] - D[0])
    phi = psi + geom.alpha
    theta = abs(phi - math.pi / 2)
    E = D + geom.len_DE * np.array([math.cos(phi), math.sin(phi)])
    return MechanismState(s, psi, phi, theta, B, C, E)


def forward_kinematics(geom: LinkageGeometry, s: float) -> MechanismState:
    """Solve the loop for slider travel ``s``; raises outside ``s_range``."""
    lo, hi = geom.s_range
    if not lo <= s <= hi:
        raise ValueError(f"s={s!r} outside s_range [{lo}, {hi}]")
    return _solve(geom, s)


def theta_bounds(geom: LinkageGeometry) -> tuple[float, float]:
    a = _solve(geom, geom.s_range[0]).theta
    b = _solve(geom, geom.s_range[1]).theta
    return min(a, b), max(a, b)


def inverse_kinematics(geom: LinkageGeometry, theta: float) -> float:
    """Slider travel that produces polar angle ``theta`` (bisection)."""
    lo, hi = geom.s_range
    t_lo, t_hi = _solve(geom, lo).theta, _solve(geom, hi).theta
    th_min, th_max = min(t_lo, t_hi), max(t_lo, t_hi)
    if not th_min - 1e-12 <= theta <= th_max + 1e-12:
        raise ValueError(
            f"theta={math.degrees(theta):.4f} deg unreachable; attainable range is "
            f"[{math.degrees(th_min):.4f}, {math.degrees(th_max):.4f}] deg"
        )
    theta = min(max(theta, th_min), th_max)
    sign = 1.0 if t_hi > t_lo else -1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if sign * (_solve(geom, mid).theta - theta) < 0:
            lo = mid
        else:
            hi = mid
    return lo if abs(_solve(geom, lo).theta - theta) <= abs(_solve(geom, hi).theta - theta) else hi


def check_monotone(geom: LinkageGeometry, samples: int = 2001) -> None:
    """Raise unless every ``s`` in range assembles and theta(s) is strictly monotone."""
    ss = np.linspace(*geom.s_range, samples)
    th = np.array([_solve(geom, s).theta for s in ss])
    slope = np.diff(th)
    if not (np.all(slope > 0) or np.all(slope < 0)):
        raise ValueError("theta(s) is not strictly monotone over s_range")


@dataclass(frozen=True, eq=False)
class CoilPose:
    """Placement of one coil in the mechanism frame.

    ``axis`` points from the coil centre into the workspace; ``x_dir`` is a
    unit vector normal to it that fixes the coil-local frame.
    """

    center: np.ndarray
    axis: np.ndarray
    x_dir: np.ndarray
    azimuth_index: int

    @property
    def frame(self) -> np.ndarray:
        """Columns are the coil-local x, y and axis directions."""
        return np.column_stack([self.x_dir, np.cross(self.axis, self.x_dir), self.axis])


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def coil_poses(theta: float, mount_radius: float, mount_height: float) -> list[CoilPose]:
    """Three coils at azimuths 0, 120 and 240 degrees, tilted inward by ``theta``.

    Each axis points down and toward the symmetry axis, making angle ``theta``
    with ``-z``. Poses 1 and 2 are pose 0 rotated about ``z``.
    """
    if not 0.0 <= theta < math.pi / 2:
        raise ValueError("theta must lie in [0, pi/2)")
    st, ct = math.sin(theta), math.cos(theta)
    center = np.array([mount_radius, 0.0, mount_height])
    axis = np.array([-st, 0.0, -ct])
    x_dir = np.array([ct, 0.0, -st])
    poses = []
    for k in range(3):
        R = rotation_z(2.0 * math.pi * k / 3.0)
        poses.append(CoilPose(R @ center, R @ axis, R @ x_dir, k))
    return poses


@dataclass(frozen=True)
class ClearanceModel:
    """Collision-free upper bound of the workspace as a function of theta.

    ``z_limit = z_ref - coil_extent * (theta - theta_ref)``: tilting the coils
    by an extra ``dtheta`` sweeps their lower rim down by ``coil_extent * dtheta``.
    """

    z_ref: float = -0.17
    theta_ref: float = math.radians(35.0)
    coil_extent: float = 0.02 / math.radians(10.0)

    def __post_init__(self):
        if self.coil_extent < 0:
            raise ValueError("coil_extent must be non-negative")

    def as_dict(self) -> dict:
        return {"z_ref": self.z_ref, "theta_ref_deg": math.degrees(self.theta_ref),
                "coil_extent": self.coil_extent}


def z_limit(theta: float, model: ClearanceModel | None = None) -> float:
    model = model or ClearanceModel()
    return model.z_ref - model.coil_extent * (theta - model.theta_ref)


@dataclass(frozen=True)
class CoilMount:
    """Where the coil centres sit for a given theta.

    Centre height follows the clearance bound by the fraction
    ``height_coupling``, ``height_ref + height_coupling * (z_limit(theta) -
    z_limit(theta_ref))``; the radial distance from the symmetry axis shrinks
    by ``radius_slope`` metres per radian of extra tilt.
    """

    radius: float = 0.081
    height_ref: float = -0.054
    height_coupling: float = 0.14
    radius_slope: float = 0.0

    def radius_at(self, theta: float, clearance: ClearanceModel | None = None) -> float:
        clearance = clearance or ClearanceModel()
        r = self.radius - self.radius_slope * (theta - clearance.theta_ref)
        if r <= 0:
            raise ValueError(f"mount radius non-positive at theta={math.degrees(theta):g} deg")
        return r

    def height(self, theta: float, clearance: ClearanceModel | None = None) -> float:
        clearance = clearance or ClearanceModel()
        drop = z_limit(theta, clearance) - clearance.z_ref
        return self.height_ref + self.height_coupling * drop

    def poses(self, theta: float, clearance: ClearanceModel | None = None) -> list[CoilPose]:
        return coil_poses(theta, self.radius_at(theta, clearance), self.height(theta, clearance))

    def as_dict(self) -> dict:
        return {"radius": self.radius, "height_ref": self.height_ref,
                "height_coupling": self.height_coupling, "radius_slope": self.radius_slope}


def sweep(geom: LinkageGeometry, clearance: ClearanceModel | None = None, n: int = 101):
    """Rows of ``(s, theta, E_x, E_z, z_limit)`` across ``s_range``."""
    rows = []
    for s in np.linspace(*geom.s_range, n):
        st = forward_kinematics(geom, float(s))
        rows.append((float(s), st.theta, float(st.point_E[0]), float(st.point_E[1]),
                     z_limit(st.theta, clearance)))
    return rows

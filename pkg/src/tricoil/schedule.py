"""Depth-triggered theta scheduling and a kinematic closed-loop simulator.

The simulated robot follows a polyline of world-frame waypoints. An external
arm is assumed to keep it on the symmetry axis of the coil group, so in the
mechanism frame the robot sits at ``(0, 0, z_m)`` with ``z_m`` set by the
lower-boundary alignment::

    z_m = z_limit(theta) - (lower_boundary_z - z_world) - standoff

i.e. a robot at ``lower_boundary_z`` in the world is at the collision-free top
of the current workspace. Each step commands a field rotating about the
heading, solves least-norm currents, clamps every coil to the current limit
and advances the robot.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from tricoil.actuation import pinv_batch
from tricoil.loading import RotatingFieldSpec, force_from_matrices, rotation_basis
from tricoil.mechanism import ClearanceModel, z_limit


@dataclass(frozen=True)
class ThetaSchedule:
    breakpoints: tuple[float, ...] = (0.035, 0.045)
    theta_values: tuple[float, ...] = (math.radians(35.0), math.radians(45.0), math.radians(55.0))
    hysteresis: float = 0.0

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if len(self.theta_values) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one more theta than breakpoints")
        if self.hysteresis < 0:
            raise ValueError("hysteresis must be non-negative")

    def regime(self, z_world: float) -> int:
        return int(np.searchsorted(self.breakpoints, z_world, side="right"))


def schedule_theta(schedule: ThetaSchedule, z_world: float, previous_theta: float | None = None) -> float:
    """Piecewise-constant theta for depth ``z_world``.

    With hysteresis the current regime is kept until ``z_world`` leaves its
    band by more than ``hysteresis``.
    """
    target = schedule.regime(z_world)
    if schedule.hysteresis == 0 or previous_theta is None:
        return schedule.theta_values[target]
    matches = [k for k, t in enumerate(schedule.theta_values) if abs(t - previous_theta) < 1e-12]
    if not matches:
        return schedule.theta_values[target]
    k = matches[0]
    lo = -math.inf if k == 0 else schedule.breakpoints[k - 1]
    hi = math.inf if k == len(schedule.breakpoints) else schedule.breakpoints[k]
    if lo - schedule.hysteresis <= z_world < hi + schedule.hysteresis:
        return previous_theta
    return schedule.theta_values[target]


@dataclass(frozen=True)
class RobotParams:
    dipole_moment: float = 1e-4
    forward_speed_per_hz: float = 1.0e-3
    drag_coefficient: float = 6.0e-3
    rotation_freq: float = 5.0
    sink_speed: float = 2.0e-4

    def __post_init__(self):
        for name in ("dipole_moment", "forward_speed_per_hz", "drag_coefficient", "rotation_freq"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sink_speed < 0:
            raise ValueError("sink_speed must be non-negative")


@dataclass(frozen=True)
class SimParams:
    """Controller settings shared by every mode of a comparison.

    ``lift_speed`` is the upward drift the gradient force is asked to supply on
    lift-assisted segments; the commanded field is raised (up to
    ``lift_boost_max`` times ``B0``) until the cycle-averaged lift meets it.
    """

    B0: float = 1e-3
    coil_limit: float = 5.0
    sync_ratio: float = 0.5
    dt: float = 0.01
    window_steps: int = 100
    event_threshold: float = 7.0
    lookahead: float = 3e-3
    lift_speed: float = 4e-4
    lift_boost_max: float = 4.0
    lift_phases: int = 24
    max_time_factor: float = 3.0

    def __post_init__(self):
        if not 0 < self.dt <= 0.02:
            raise ValueError("dt must lie in (0, 0.02] s")
        if self.window_steps < 1 or self.B0 <= 0 or self.coil_limit <= 0:
            raise ValueError("invalid simulation parameters")


Mode = Union[float, ThetaSchedule]


@dataclass(frozen=True, eq=False)
class TrajectorySpec:
    waypoints: np.ndarray
    speeds: np.ndarray
    mode: Mode = field(default_factory=ThetaSchedule)
    lower_boundary_z: float = 0.075
    standoff: float = 0.0
    lift_assist: tuple[bool, ...] | None = None

    def __post_init__(self):
        wp = np.array(self.waypoints, dtype=float).reshape(-1, 3)
        sp = np.array(self.speeds, dtype=float).reshape(-1)
        if wp.shape[0] < 2:
            raise ValueError("trajectory needs at least 2 waypoints")
        if sp.size == 1 and wp.shape[0] > 2:
            sp = np.full(wp.shape[0] - 1, sp[0])
        if sp.size != wp.shape[0] - 1 or np.any(sp <= 0):
            raise ValueError("need one positive speed per segment")
        la = self.lift_assist
        if la is None:
            la = (False,) * (wp.shape[0] - 1)
        if len(la) != wp.shape[0] - 1:
            raise ValueError("lift_assist needs one flag per segment")
        wp.setflags(write=False)
        sp.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)
        object.__setattr__(self, "speeds", sp)
        object.__setattr__(self, "lift_assist", tuple(bool(x) for x in la))

    def waypoint_hash(self) -> str:
        payload = {
            "waypoints": self.waypoints.tolist(),
            "speeds": self.speeds.tolist(),
            "lower_boundary_z": self.lower_boundary_z,
            "standoff": self.standoff,
            "lift_assist": list(self.lift_assist),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def with_mode(self, mode: Mode) -> "TrajectorySpec":
        return replace(self, mode=mode)

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "waypoints": self.waypoints.tolist(),
            "speeds": self.speeds.tolist(),
            "lower_boundary_z": self.lower_boundary_z,
            "standoff": self.standoff,
            "lift_assist": list(self.lift_assist),
        }

    @classmethod
    def from_json(cls, data: dict, mode: Mode | None = None) -> "TrajectorySpec":
        allowed = {"schema_version", "waypoints", "speeds", "lower_boundary_z", "standoff", "lift_assist"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown trajectory keys: {sorted(unknown)}")
        for key in ("waypoints", "speeds"):
            if key not in data:
                raise ValueError(f"trajectory missing required key '{key}'")
        kw = {k: data[k] for k in ("lower_boundary_z", "standoff", "lift_assist") if k in data}
        if mode is not None:
            kw["mode"] = mode
        return cls(np.asarray(data["waypoints"], float), np.asarray(data["speeds"], float), **kw)


def parse_mode(text: str, schedule: ThetaSchedule | None = None) -> Mode:
    """``"fixed:45"`` -> radians, ``"auto"`` -> the schedule."""
    if text == "auto":
        return schedule or ThetaSchedule()
    if text.startswith("fixed:"):
        return math.radians(float(text.split(":", 1)[1]))
    raise ValueError(f"unknown mode {text!r}; expected fixed:<deg> or auto")


def mode_label(mode: Mode) -> str:
    if isinstance(mode, ThetaSchedule):
        return "auto"
    return f"fixed:{math.degrees(mode):g}"


def default_trajectory(mode: Mode | None = None) -> TrajectorySpec:
    """Deep straight run, rising arc through the mid band, shallow climb."""
    pts = [(0.295, 0.0, 0.030), (0.340, 0.0, 0.030), (0.360, 0.0, 0.0365)]
    centre, radius = np.array([0.340, 0.0]), 0.020
    n_arc = 12
    for j in range(1, n_arc + 1):
        a = math.pi * j / n_arc
        z = 0.0365 + (0.0440 - 0.0365) * j / n_arc
        pts.append((centre[0] + radius * math.cos(a), centre[1] + radius * math.sin(a), z))
    pts.append((0.280, 0.0, 0.056))
    speeds = [5e-3] * (len(pts) - 1)
    lift = [False] * (len(pts) - 2) + [True]
    return TrajectorySpec(np.array(pts), np.array(speeds), mode or ThetaSchedule(), lift_assist=tuple(lift))


class _Path:
    def __init__(self, waypoints: np.ndarray):
        self.pts = waypoints
        seg = np.diff(waypoints, axis=0)
        self.len = np.linalg.norm(seg, axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(self.len)])
        self.total = float(self.cum[-1])

    def segment(self, s: float) -> int:
        return int(np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, len(self.len) - 1))

    def point(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.total)
        k = self.segment(s)
        if self.len[k] == 0:
            return self.pts[k].copy()
        t = (s - self.cum[k]) / self.len[k]
        return self.pts[k] + t * (self.pts[k + 1] - self.pts[k])

    def project(self, p: np.ndarray, s_lo: float, s_hi: float) -> float:
        """Arc length of the closest path point to ``p`` with ``s`` in ``[s_lo, s_hi]``."""
        best_s, best_d = s_lo, math.inf
        for k in range(self.segment(s_lo), self.segment(s_hi) + 1):
            if self.len[k] == 0:
                continue
            d = self.pts[k + 1] - self.pts[k]
            t = float(np.clip((p - self.pts[k]) @ d / self.len[k] ** 2, 0.0, 1.0))
            sk = min(max(self.cum[k] + t * self.len[k], s_lo), s_hi)
            dist = float(np.linalg.norm(self.point(sk) - p))
            if dist < best_d:
                best_s, best_d = sk, dist
        return best_s

    def tangent(self, s: float) -> np.ndarray:
        k = self.segment(s)
        d = self.pts[k + 1] - self.pts[k]
        n = np.linalg.norm(d)
        return d / n if n > 0 else np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True, eq=False)
class SimLog:
    t: np.ndarray
    position: np.ndarray
    z_mech: np.ndarray
    theta: np.ndarray
    field_cmd: np.ndarray
    field: np.ndarray
    currents: np.ndarray
    feasible: np.ndarray
    synced: np.ndarray
    dt: float
    mode: str
    waypoint_hash: str

    def __len__(self) -> int:
        return self.t.size

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "t_s": self.t,
            "x_m": self.position[:, 0], "y_m": self.position[:, 1], "z_m": self.position[:, 2],
            "z_mech_m": self.z_mech,
            "theta_deg": np.degrees(self.theta),
            "Bx_cmd_T": self.field_cmd[:, 0], "By_cmd_T": self.field_cmd[:, 1], "Bz_cmd_T": self.field_cmd[:, 2],
            "Bx_T": self.field[:, 0], "By_T": self.field[:, 1], "Bz_T": self.field[:, 2],
            "i1_A": self.currents[:, 0], "i2_A": self.currents[:, 1], "i3_A": self.currents[:, 2],
            "feasible": self.feasible.astype(int), "synced": self.synced.astype(int),
        }

    def digest(self) -> str:
        h = hashlib.sha256()
        for v in self.columns().values():
            h.update(np.ascontiguousarray(v, dtype="<f8").tobytes())
        return h.hexdigest()


def mechanism_z(z_world: float, theta: float, traj: TrajectorySpec,
                clearance: ClearanceModel | None = None) -> float:
    return z_limit(theta, clearance) - (traj.lower_boundary_z - z_world) - traj.standoff


def simulate(traj: TrajectorySpec, robot: RobotParams, source, params: SimParams | None = None,
             clearance: ClearanceModel | None = None) -> SimLog:
    """Run the trajectory in the given mode and log every step.

    ``source`` exposes ``matrices(p, theta)``; typically the field library.
    The log is padded (robot holding station) to a whole number of windows.
    """
    params = params or SimParams()
    clearance = clearance or getattr(source, "clearance", None) or ClearanceModel()
    path = _Path(traj.waypoints)
    dt = params.dt
    v_prop = robot.forward_speed_per_hz * robot.rotation_freq
    nominal = float(np.sum(path.len / np.minimum(traj.speeds, v_prop))) if path.total > 0 else 0.0
    max_steps = int(math.ceil((params.max_time_factor * nominal + 1.0) / dt))

    pos = traj.waypoints[0].copy()
    s_ref = 0.0
    theta = None
    rows: dict[str, list] = {k: [] for k in ("t", "pos", "zm", "th", "bc", "b", "i", "feas", "sync")}
    step = 0
    finished = path.total == 0.0
    phase = 0.0
    while True:
        if finished and step % params.window_steps == 0 and step > 0:
            break
        if step >= max_steps and step % params.window_steps == 0:
            break
        t = step * dt
        if isinstance(traj.mode, ThetaSchedule):
            theta = schedule_theta(traj.mode, float(pos[2]), theta)
        else:
            theta = float(traj.mode)
        zm = mechanism_z(float(pos[2]), theta, traj, clearance)
        p_m = np.array([0.0, 0.0, zm])
        try:
            A, G = source.matrices(p_m, theta)
        except (ValueError, KeyError) as exc:
            raise ValueError(f"trajectory leaves library coverage at world {pos.tolist()} "
                             f"(mechanism z={zm:.4f} m, theta={math.degrees(theta):g} deg): {exc}") from None

        seg = path.segment(s_ref)
        if finished:
            heading = path.tangent(path.total)
        else:
            aim = path.point(s_ref + params.lookahead) - pos
            na = np.linalg.norm(aim)
            heading = aim / na if na > 1e-12 else path.tangent(s_ref)
        e1, e2 = rotation_basis(heading)

        B0 = params.B0
        if not finished and traj.lift_assist[seg]:
            spec = RotatingFieldSpec(tuple(heading), params.B0, params.lift_phases, robot.dipole_moment)
            fz = force_from_matrices(A, G, spec, math.inf, saturate_currents=False)[2]
            need = robot.drag_coefficient * (robot.sink_speed + params.lift_speed)
            boost = params.lift_boost_max if fz <= 0 else min(max(need / fz, 1.0), params.lift_boost_max)
            B0 = params.B0 * boost

        b_cmd = B0 * (math.cos(phase) * e1 + math.sin(phase) * e2)
        i_raw = pinv_batch(A) @ b_cmd
        i = np.clip(i_raw, -params.coil_limit, params.coil_limit)
        feasible = bool(np.all(np.abs(i_raw) <= params.coil_limit))
        b = A @ i
        nb = float(np.linalg.norm(b))
        synced = nb >= params.sync_ratio * B0

        rows["t"].append(t)
        rows["pos"].append(pos.copy())
        rows["zm"].append(zm)
        rows["th"].append(theta)
        rows["bc"].append(b_cmd)
        rows["b"].append(b)
        rows["i"].append(i)
        rows["feas"].append(feasible)
        rows["sync"].append(synced)

        vel = np.zeros(3)
        if not finished:
            speed = min(traj.speeds[seg], v_prop)
            if synced:
                vel += speed * heading
            if nb > 0:
                m = robot.dipole_moment * b / nb
                force = np.einsum("k,kmn->mn", i, G).T @ m
                vel += force / robot.drag_coefficient
            vel[2] -= robot.sink_speed
            pos = pos + vel * dt
            s_ref = path.project(pos, s_ref, min(path.total, s_ref + 2.0 * params.lookahead))
            if s_ref >= path.total - 1e-9:
                finished = True
        phase = (phase + 2.0 * math.pi * robot.rotation_freq * dt) % (2.0 * math.pi)
        step += 1

    return SimLog(
        t=np.array(rows["t"]),
        position=np.array(rows["pos"]).reshape(-1, 3),
        z_mech=np.array(rows["zm"]),
        theta=np.array(rows["th"]),
        field_cmd=np.array(rows["bc"]).reshape(-1, 3),
        field=np.array(rows["b"]).reshape(-1, 3),
        currents=np.array(rows["i"]).reshape(-1, 3),
        feasible=np.array(rows["feas"], dtype=bool),
        synced=np.array(rows["sync"], dtype=bool),
        dt=dt,
        mode=mode_label(traj.mode),
        waypoint_hash=traj.waypoint_hash(),
    )


@dataclass(frozen=True, eq=False)
class WindowMetrics:
    e_over_b2: np.ndarray
    i_peak: np.ndarray
    events: np.ndarray
    z_mean: np.ndarray
    threshold: float

    @property
    def median_e_over_b2(self) -> float:
        v = self.e_over_b2[np.isfinite(self.e_over_b2)]
        return float(np.median(v)) if v.size else float("nan")

    @property
    def event_fraction(self) -> float:
        return float(self.events.mean()) if self.events.size else 0.0

    def subset(self, mask) -> "WindowMetrics":
        mask = np.asarray(mask, dtype=bool)
        return WindowMetrics(self.e_over_b2[mask], self.i_peak[mask], self.events[mask],
                             self.z_mean[mask], self.threshold)


def window_metrics(log: SimLog, window_steps: int = 100, threshold: float = 7.0) -> WindowMetrics:
    """Per-window ``E/B^2`` and ``I_peak`` over consecutive non-overlapping windows."""
    n = len(log) // window_steps
    if n == 0:
        raise ValueError("log shorter than one metrics window")
    cut = n * window_steps
    i2 = np.sum(log.currents[:cut] ** 2, axis=1).reshape(n, window_steps)
    bmag = np.linalg.norm(log.field[:cut], axis=1).reshape(n, window_steps)
    inorm = np.sqrt(i2)
    mean_b = bmag.mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        eb2 = np.where(mean_b > 0, i2.mean(axis=1) / mean_b**2, np.nan)
    peak = inorm.max(axis=1)
    z_mean = log.position[:cut, 2].reshape(n, window_steps).mean(axis=1)
    return WindowMetrics(eb2, peak, peak >= threshold, z_mean, threshold)


REGIME_NAMES = ("deep", "mid", "shallow")


def metrics_summary(log: SimLog, params: SimParams | None = None,
                    schedule: ThetaSchedule | None = None) -> dict:
    params = params or SimParams()
    schedule = schedule or ThetaSchedule()
    wm = window_metrics(log, params.window_steps, params.event_threshold)
    regimes = np.array([schedule.regime(z) for z in wm.z_mean])
    by_regime = {}
    for k, name in enumerate(REGIME_NAMES[: len(schedule.theta_values)]):
        sub = wm.subset(regimes == k)
        by_regime[name] = {
            "windows": int(sub.events.size),
            "median_E_over_B2_A2_per_T2": sub.median_e_over_b2 if sub.events.size else None,
            "P_Ipeak_ge_threshold": sub.event_fraction if sub.events.size else None,
        }
    return {
        "schema_version": 1,
        "mode": log.mode,
        "waypoint_hash": log.waypoint_hash,
        "duration_s": float(len(log) * log.dt),
        "windows": int(wm.events.size),
        "event_threshold_A": params.event_threshold,
        "median_E_over_B2_A2_per_T2": wm.median_e_over_b2,
        "P_Ipeak_ge_threshold": wm.event_fraction,
        "regimes": by_regime,
    }


def merge_metrics(summaries: Sequence[dict]) -> list[dict]:
    """Stack metrics from several modes; all must share one trajectory."""
    hashes = {s["waypoint_hash"] for s in summaries}
    if len(hashes) != 1:
        raise ValueError("metrics come from different trajectories (waypoint hash mismatch)")
    return [dict(s) for s in summaries]


def compare_modes(traj_base: TrajectorySpec, robot: RobotParams, source, modes: Sequence[Mode],
                  params: SimParams | None = None, clearance: ClearanceModel | None = None) -> list[dict]:
    """Run every mode on the same trajectory and tabulate its metrics."""
    params = params or SimParams()
    schedule = next((m for m in modes if isinstance(m, ThetaSchedule)), ThetaSchedule())
    out = []
    for mode in modes:
        log = simulate(traj_base.with_mode(mode), robot, source, params, clearance)
        out.append(metrics_summary(log, params, schedule))
    return merge_metrics(out)

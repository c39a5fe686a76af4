"""Gradient disturbance under field tracking and cycle-averaged lift.

``source`` arguments accept anything exposing ``matrices(p, theta)`` returning
``(A, G)``: a :class:`~tricoil.actuation.FieldLibrary` or a
:class:`~tricoil.actuation.DirectModel`.

All currents here go through the same per-coil limit. A least-norm solution
with ``|i_k| > I_max`` is scaled down uniformly (direction kept), so the
achieved field is weaker than commanded wherever the array runs out of
authority. Pass ``saturate=False`` to inspect the raw least-norm response.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from tricoil.actuation import CurrentVector, UnreachableFieldError, least_norm_currents, pinv_batch


@dataclass(frozen=True)
class FieldCommand:
    B0: float
    alpha: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if not self.B0 > 0:
            raise ValueError("B0 must be positive")

    @property
    def direction(self) -> np.ndarray:
        ce = math.cos(self.epsilon)
        return np.array([ce * math.cos(self.alpha), ce * math.sin(self.alpha), math.sin(self.epsilon)])

    @property
    def target(self) -> np.ndarray:
        return self.B0 * self.direction


@dataclass(frozen=True)
class RotatingFieldSpec:
    n_hat: tuple[float, float, float] = (0.0, 0.0, 1.0)
    B0: float = 1e-3
    phase_samples: int = 72
    dipole_moment: float = 1e-4

    def __post_init__(self):
        if abs(np.linalg.norm(self.n_hat) - 1.0) > 1e-9:
            raise ValueError("n_hat must be a unit vector")
        if self.phase_samples < 8:
            raise ValueError("phase_samples must be >= 8")
        if self.dipole_moment <= 0 or self.B0 <= 0:
            raise ValueError("dipole_moment and B0 must be positive")

    def basis(self) -> tuple[np.ndarray, np.ndarray]:
        """In-plane unit vectors ``(e1, e2)`` spanning the rotation plane."""
        n = np.asarray(self.n_hat, dtype=float)
        return rotation_basis(n)


def rotation_basis(n) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(n, dtype=float)
    e1 = np.cross([0.0, 0.0, 1.0], n)
    norm = np.linalg.norm(e1)
    e1 = np.array([1.0, 0.0, 0.0]) if norm < 1e-9 else e1 / norm
    return e1, np.cross(n, e1)


def saturate(currents, I_max: float) -> np.ndarray:
    """Scale ``currents`` (last axis) uniformly so that ``max |i_k| <= I_max``."""
    i = np.asarray(currents, dtype=float)
    peak = np.abs(i).max(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        scale = np.where(peak > I_max, I_max / peak, 1.0)
    return i * scale


def synthesize_tracking_currents(p, theta: float, cmd: FieldCommand, I_max: float, source) -> CurrentVector:
    A, _ = source.matrices(p, theta)
    return least_norm_currents(A, cmd.target, I_max)


def gradient_disturbance(p, theta: float, cmd: FieldCommand, I_max: float, source,
                         saturate_currents: bool = True) -> float:
    """Frobenius norm of the gradient left behind while tracking ``cmd``."""
    A, G = source.matrices(p, theta)
    i = least_norm_currents(A, cmd.target, I_max).currents
    if saturate_currents:
        i = saturate(i, I_max)
    return float(np.linalg.norm(np.einsum("k,kmn->mn", i, G)))


def azimuth_average(p, theta: float, epsilon: float, B0: float, I_max: float, source,
                    n_alpha: int = 36, saturate_currents: bool = True) -> float:
    """Mean of ``g_F`` over ``n_alpha`` uniformly spaced azimuths."""
    if n_alpha < 12:
        raise ValueError("n_alpha must be >= 12")
    A, G = source.matrices(p, theta)
    vals, failed = [], []
    for a in 2.0 * math.pi * np.arange(n_alpha) / n_alpha:
        try:
            i = least_norm_currents(A, FieldCommand(B0, a, epsilon).target, I_max).currents
        except UnreachableFieldError:
            failed.append(math.degrees(a))
            continue
        if saturate_currents:
            i = saturate(i, I_max)
        vals.append(np.linalg.norm(np.einsum("k,kmn->mn", i, G)))
    if failed:
        raise UnreachableFieldError(float("nan")) from ValueError(
            "synthesis failed at alpha = " + ", ".join(f"{a:g}" for a in failed) + " deg")
    return float(math.fsum(vals) / len(vals))


def phase_angles(n: int, offset: float = 0.0) -> np.ndarray:
    return offset + 2.0 * math.pi * (np.arange(n) + 0.5) / n


def force_from_matrices(A, G, spec: RotatingFieldSpec, I_max: float, offset: float = 0.0,
                        saturate_currents: bool = True) -> np.ndarray:
    """Cycle-averaged dipole force given ``A`` and ``G`` at one point."""
    A = np.asarray(A, dtype=float)
    e1, e2 = spec.basis()
    ph = phase_angles(spec.phase_samples, offset)
    targets = spec.B0 * (np.multiply.outer(np.cos(ph), e1) + np.multiply.outer(np.sin(ph), e2))
    I = targets @ pinv_batch(A).T
    resid = np.linalg.norm(I @ A.T - targets, axis=1)
    bad = resid > 1e-9 * spec.B0
    if np.any(bad):
        raise UnreachableFieldError(float(resid.max())) from ValueError(
            "synthesis failed at phase " + ", ".join(f"{math.degrees(x):g}" for x in ph[bad]) + " deg")
    if saturate_currents:
        I = saturate(I, I_max)
    B = I @ A.T
    nb = np.linalg.norm(B, axis=1)
    keep = nb > 0
    m = spec.dipole_moment * B[keep] / nb[keep, None]
    grads = np.einsum("jk,kmn->jmn", I[keep], G)
    F = np.einsum("jmn,jm->jn", grads, m)
    return F.sum(axis=0) / spec.phase_samples


def cycle_average_force(p, theta: float, spec: RotatingFieldSpec, I_max: float, source,
                        offset: float = 0.0, saturate_currents: bool = True):
    """Return ``(F_bar, F_z)`` in newtons for a phase-locked dipole at ``p``."""
    A, G = source.matrices(p, theta)
    F = force_from_matrices(A, G, spec, I_max, offset, saturate_currents)
    return F, float(F[2])


def lift_depth_profile(theta: float, spec: RotatingFieldSpec, z_values, source,
                       I_max: float = 5.0) -> np.ndarray:
    """Rows ``(z, F_z)`` along the symmetry axis."""
    rows = []
    for z in np.asarray(z_values, dtype=float):
        _, fz = cycle_average_force(np.array([0.0, 0.0, z]), theta, spec, I_max, source)
        rows.append((z, fz))
    return np.array(rows).reshape(-1, 2)


def gradient_depth_map(theta: float, epsilons, z_values, source, B0: float = 1e-3,
                       I_max: float = 5.0, n_alpha: int = 36) -> np.ndarray:
    """Rows ``(z, epsilon, M)`` along the symmetry axis."""
    rows = []
    for z in np.asarray(z_values, dtype=float):
        for eps in epsilons:
            M = azimuth_average(np.array([0.0, 0.0, z]), theta, float(eps), B0, I_max, source, n_alpha)
            rows.append((z, float(eps), M))
    return np.array(rows).reshape(-1, 3)

"""Launcher-conditioned spin initialization.

A bias-free two-head network maps the three motor actuations to the spin
(and raw spin variances) of a ball launched along +x. The result is rotated
into the world frame with the launch azimuth and elevation.

Rotation convention: ``R_rot(phi, theta) = R_z(phi) @ R_y(-theta)``, i.e.
the head elevation is applied first (positive ``theta`` pitches +x upwards),
then the total azimuth about the vertical axis. The convention lives only in
:func:`launch_rotation`.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, DegenerateDisplacement
from .transforms import softplus_eps

HIDDEN = 256


@dataclass(frozen=True)
class LaunchInfo:
    phi_f: float
    phi_l: float
    theta_l: float
    s_m: tuple[float, float, float]
    after_impact: bool = False

    def __post_init__(self):
        s_m = tuple(float(s) for s in self.s_m)
        if len(s_m) != 3:
            raise DataError("s_m needs three motor actuations")
        if any(not 0.0 <= s <= 1.0 for s in s_m):
            raise DataError(f"motor actuations must lie in [0, 1], got {s_m}")
        object.__setattr__(self, "s_m", s_m)

    @property
    def phi_total(self) -> float:
        return self.phi_f + self.phi_l

    def with_after_impact(self, flag: bool) -> "LaunchInfo":
        return replace(self, after_impact=bool(flag))


@dataclass
class SpinNetParams:
    """Weights of ``W2 @ relu(W1 @ s_m)``; no bias terms."""

    W1: np.ndarray
    W2: np.ndarray

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=float)
        self.W2 = np.asarray(self.W2, dtype=float)
        hidden = self.W1.shape[0]
        if self.W1.shape != (hidden, 3) or self.W2.shape != (6, hidden):
            raise DataError(f"bad spin network shapes {self.W1.shape}, {self.W2.shape}")

    @classmethod
    def random(cls, rng: np.random.Generator, hidden: int = HIDDEN) -> "SpinNetParams":
        """Uniform init in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` per layer."""
        a1 = 1.0 / np.sqrt(3.0)
        a2 = 1.0 / np.sqrt(hidden)
        W1 = rng.uniform(-a1, a1, size=(hidden, 3))
        W2 = rng.uniform(-a2, a2, size=(6, hidden))
        return cls(W1, W2)


def canonical_spin(s_m, psi: SpinNetParams):
    """Spin mean and raw variance for a launch along +x.

    Returns ``(omega_x, sigma_raw)``; the covariance is
    ``diag(softplus_eps(sigma_raw))``.
    """
    hidden = np.maximum(psi.W1 @ np.asarray(s_m, dtype=float), 0.0)
    out = psi.W2 @ hidden
    return out[:3], out[3:]


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def launch_rotation(phi_total: float, theta_l: float) -> np.ndarray:
    """Rotation taking the canonical +x launch frame to the world frame."""
    return rot_z(phi_total) @ rot_y(-theta_l)


def azimuth_from_measurements(m1, m2) -> float:
    """Launch azimuth ``atan2(dy, dx)`` of the displacement between two points."""
    d = np.asarray(m2, dtype=float) - np.asarray(m1, dtype=float)
    if np.hypot(d[0], d[1]) < 1e-9:
        raise DegenerateDisplacement("xy displacement too small to infer an azimuth")
    return float(np.arctan2(d[1], d[0]))


def initial_spin(launch: LaunchInfo | None, psi: SpinNetParams, params, phi_total=None):
    """Initial spin moments ``(omega, Sigma_omega)`` in the world frame.

    ``params`` supplies the raw fallback variances ``sigma_omega_raw`` (no
    launch information) and ``sigma_omega_ai_raw`` (after an impact).
    ``phi_total`` overrides the azimuth taken from ``launch``.
    """
    if launch is None:
        return np.zeros(3), np.diag(softplus_eps(params.sigma_omega_raw))
    if launch.after_impact:
        return np.zeros(3), np.diag(softplus_eps(params.sigma_omega_ai_raw))
    if phi_total is None:
        phi_total = launch.phi_total
    R = launch_rotation(phi_total, launch.theta_l)
    omega_x, sigma_raw = canonical_spin(launch.s_m, psi)
    return R @ omega_x, R @ np.diag(softplus_eps(sigma_raw)) @ R.T

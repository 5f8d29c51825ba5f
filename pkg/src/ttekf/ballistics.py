"""Ball flight physics: Euler free flight, table impacts and analytic Jacobians.

The state is a flat 11-vector ``(p, v, omega, a_d, a_m)``::

    p      position [m]            z[0:3]
    v      velocity [m/s]          z[3:6]
    omega  spin [rad/s]            z[6:9]
    a_d    drag parameter          z[9]
    a_m    Magnus parameter        z[10]

with derived coefficients ``k_d = a_d**2 + eps`` and ``k_m = a_m**2 + eps``.
Free flight integrates

    dv/dt = -k_d |v| v + k_m (omega x v) + g

with a single explicit Euler step. A step whose end point puts the ball's
lower edge below the table is split at the impact time, the impact matrix
is applied to ``(v, omega)`` and the remainder of the step is flown again.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NegativeDiscriminant

log = logging.getLogger(__name__)

STATE_DIM = 11
POS = slice(0, 3)
VEL = slice(3, 6)
SPIN = slice(6, 9)
A_D = 9
A_M = 10
PZ = 2
VZ = 5


@dataclass(frozen=True)
class PhysicalConstants:
    """Physical and sampling constants shared by simulator and filter.

    ``g_z = 0`` and ``eps = 0`` are accepted so that drag-free or
    gravity-free test configurations can be built; impact handling requires
    ``g_z < 0``.
    """

    g_z: float = -9.802
    r: float = 0.02
    z_table: float = 0.0
    dt: float = 1.0 / 180.0
    eps: float = 0.05

    def __post_init__(self):
        if not self.g_z <= 0.0:
            raise DataError(f"g_z must be <= 0, got {self.g_z}")
        if not self.r > 0.0:
            raise DataError(f"r must be > 0, got {self.r}")
        if not self.dt > 0.0:
            raise DataError(f"dt must be > 0, got {self.dt}")
        if not self.eps >= 0.0:
            raise DataError(f"eps must be >= 0, got {self.eps}")

    @property
    def gravity(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.g_z])


def make_state(p, v, omega=(0.0, 0.0, 0.0), a_d=0.0, a_m=0.0) -> np.ndarray:
    """Pack the state components into a flat 11-vector."""
    z = np.empty(STATE_DIM)
    z[POS] = p
    z[VEL] = v
    z[SPIN] = omega
    z[A_D] = a_d
    z[A_M] = a_m
    return z


def coefficients(a_d, a_m, eps):
    """Drag and Magnus coefficients ``(a_d**2 + eps, a_m**2 + eps)``."""
    return a_d * a_d + eps, a_m * a_m + eps


def skew(a: np.ndarray) -> np.ndarray:
    """Cross-product matrix: ``skew(a) @ b == np.cross(a, b)``."""
    return np.array([
        [0.0, -a[2], a[1]],
        [a[2], 0.0, -a[0]],
        [-a[1], a[0], 0.0],
    ])


def lift_impact(C: np.ndarray) -> np.ndarray:
    """Embed the 6x6 impact matrix as ``blockdiag(I3, C, 1, 1)``."""
    C = np.asarray(C, dtype=float)
    if C.shape != (6, 6):
        raise DataError(f"impact matrix must be 6x6, got {C.shape}")
    lifted = np.eye(STATE_DIM)
    lifted[3:9, 3:9] = C
    return lifted


def bounce_matrix() -> np.ndarray:
    """Identity impact map except for the sign flip of ``v_z``."""
    return np.diag([1.0, 1.0, -1.0, 1.0, 1.0, 1.0])


def acceleration(z: np.ndarray, consts: PhysicalConstants) -> np.ndarray:
    v = z[VEL]
    k_d, k_m = coefficients(z[A_D], z[A_M], consts.eps)
    return -k_d * np.linalg.norm(v) * v + k_m * np.cross(z[SPIN], v) + consts.gravity


def free_flight_step(z: np.ndarray, dt: float, consts: PhysicalConstants) -> np.ndarray:
    """One Euler step of length ``dt``; spin and coefficients are constant."""
    z = np.asarray(z, dtype=float)
    out = z.copy()
    out[POS] = z[POS] + dt * z[VEL]
    out[VEL] = z[VEL] + dt * acceleration(z, consts)
    return out


def impact_time(z: np.ndarray, consts: PhysicalConstants) -> float:
    """Time until the ball's lower edge reaches the table under gravity alone.

    Raises :class:`NegativeDiscriminant` if the constant-gravity parabola never
    reaches the table surface, which happens only for states that already lie
    below it. The result is clamped into ``[0, dt]``.
    """
    return _impact_time(z, consts)[0]


def _impact_time(z, consts):
    if not consts.g_z < 0.0:
        raise DataError("impact handling needs g_z < 0")
    v_z = z[VZ]
    h = -((z[PZ] - consts.r) - consts.z_table)
    disc = v_z * v_z + 2.0 * consts.g_z * h
    if disc < 0.0:
        raise NegativeDiscriminant(f"discriminant {disc:.3e} < 0 (p_z={z[PZ]}, v_z={v_z})")
    root = np.sqrt(disc)
    t = -(v_z + root) / consts.g_z
    clamped = not 0.0 <= t <= consts.dt
    return min(max(t, 0.0), consts.dt), root, clamped


def apply_impact(z: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Map ``(v, omega)`` through the impact matrix; everything else is kept."""
    z = np.asarray(z, dtype=float)
    out = z.copy()
    out[3:9] = np.asarray(C, dtype=float) @ z[3:9]
    return out


def _penetrates(z, consts):
    return z[PZ] - consts.r < consts.z_table


def _step(z, C, consts):
    """Forward step; also returns the impact time (None on the free branch)."""
    z = np.asarray(z, dtype=float)
    z_free = free_flight_step(z, consts.dt, consts)
    if not _penetrates(z_free, consts):
        return z_free, None
    try:
        t, root, clamped = _impact_time(z, consts)
    except NegativeDiscriminant:
        # state starts below the surface and cannot reach it; fly through
        log.warning("impact branch without a real impact time, using free flight")
        return z_free, None
    z_plus = apply_impact(free_flight_step(z, t, consts), C)
    z_next = free_flight_step(z_plus, consts.dt - t, consts)
    if _penetrates(z_next, consts):
        log.warning("ball re-penetrates the table within one step; returning state as-is")
    return z_next, (t, root, clamped)


def forward_step(z: np.ndarray, C: np.ndarray, consts: PhysicalConstants) -> np.ndarray:
    """One sampling period of flight including at most one table impact."""
    return _step(z, C, consts)[0]


def forward_step_info(z, C, consts):
    """Like :func:`forward_step` but also reports whether an impact happened."""
    z_next, info = _step(z, C, consts)
    return z_next, info is not None


def jac_state(z: np.ndarray, dt: float, consts: PhysicalConstants) -> np.ndarray:
    """Jacobian of :func:`free_flight_step` with respect to the state."""
    z = np.asarray(z, dtype=float)
    v = z[VEL]
    omega = z[SPIN]
    a_d, a_m = z[A_D], z[A_M]
    k_d, k_m = coefficients(a_d, a_m, consts.eps)
    speed = np.linalg.norm(v)

    J = np.eye(STATE_DIM)
    J[POS, VEL] = dt * np.eye(3)
    if speed > 0.0:
        d_drag = speed * np.eye(3) + np.outer(v, v) / speed
    else:
        d_drag = np.zeros((3, 3))
    J[VEL, VEL] = np.eye(3) + dt * (-k_d * d_drag + k_m * skew(omega))
    J[VEL, SPIN] = -dt * k_m * skew(v)
    J[VEL, A_D] = -2.0 * dt * a_d * speed * v
    J[VEL, A_M] = 2.0 * dt * a_m * np.cross(omega, v)
    return J


def jac_time(z: np.ndarray, dt: float, consts: PhysicalConstants) -> np.ndarray:
    """Derivative of :func:`free_flight_step` with respect to its duration.

    Under Euler integration this is the vector field at ``z`` and does not
    depend on ``dt``.
    """
    z = np.asarray(z, dtype=float)
    out = np.zeros(STATE_DIM)
    out[POS] = z[VEL]
    out[VEL] = acceleration(z, consts)
    return out


def _impact_time_gradient(z, root, consts):
    row = np.zeros(STATE_DIM)
    row[PZ] = 1.0 / root
    row[VZ] = -(1.0 + z[VZ] / root) / consts.g_z
    return row


def jac_forward(z: np.ndarray, C: np.ndarray, consts: PhysicalConstants) -> np.ndarray:
    """Jacobian of :func:`forward_step`, including the impact-time chain rule."""
    return step_with_jacobian(z, C, consts)[1]


def step_with_jacobian(z, C, consts):
    """``(forward_step(z), jac_forward(z))`` sharing one branch evaluation."""
    z = np.asarray(z, dtype=float)
    z_next, info = _step(z, C, consts)
    if info is None:
        return z_next, jac_state(z, consts.dt, consts)
    t, root, clamped = info
    rem = consts.dt - t
    z_plus = apply_impact(free_flight_step(z, t, consts), C)

    dt_imp = np.zeros(STATE_DIM) if clamped else _impact_time_gradient(z, root, consts)
    J1 = jac_state(z_plus, rem, consts)
    J2 = lift_impact(C) @ (jac_state(z, t, consts) + np.outer(jac_time(z, t, consts), dt_imp))
    J3 = jac_time(z_plus, rem, consts)
    return z_next, J1 @ J2 - np.outer(J3, dt_imp)

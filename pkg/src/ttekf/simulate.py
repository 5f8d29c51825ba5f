"""Synthetic launcher and ball-flight data.

A simulated launcher stands in for the lab setup: actuation values map to
head angles through piecewise-linear maps and to wheel speeds through a
monotone map, the three wheel speeds combine into a spin, and the ball is
rolled out through the same ballistics model the filter uses. Measurements
get Gaussian noise and random dropouts.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import ballistics as bl
from .data import Measurement, Trajectory
from .errors import BadKnots, DataError
from .spin_net import LaunchInfo, launch_rotation, rot_z

log = logging.getLogger(__name__)

SQRT3_2 = np.sqrt(3.0) / 2.0
# spin directions contributed by the top-left, top-right and bottom wheels,
# expressed in the frame of a launch along -y
WHEEL_AXES = np.array([
    [0.5, 0.0, -SQRT3_2],
    [0.5, 0.0, SQRT3_2],
    [-1.0, 0.0, 0.0],
])

DEFAULT_SPLIT = (108, 63, 163)

S_PHI_RANGE = (0.4, 0.6)
S_THETA_RANGE = (0.7, 1.0)
MOTOR_RANGES = {
    "default": ((0.095, 0.155), (0.135, 0.195), (0.135, 0.195)),
    "unseen": ((0.105, 0.165), (0.145, 0.205), (0.145, 0.205)),
}


class PiecewiseLinearMap:
    """Linear interpolation between knots, held constant beyond the ends."""

    def __init__(self, knots: Sequence[tuple[float, float]]):
        knots = [(float(x), float(y)) for x, y in knots]
        if len(knots) < 2:
            raise BadKnots("need at least two knots")
        xs = np.array([k[0] for k in knots])
        if np.any(np.diff(xs) <= 0.0):
            raise BadKnots("knot x values must be strictly increasing")
        self.knots = knots
        self._x = xs
        self._y = np.array([k[1] for k in knots])

    def __call__(self, x):
        out = np.interp(x, self._x, self._y)
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return f"PiecewiseLinearMap({self.knots})"

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self._y) >= 0.0))


def piecewise_linear_map(knots) -> PiecewiseLinearMap:
    return PiecewiseLinearMap(knots)


def fit_piecewise_linear(x, y, candidates=None) -> PiecewiseLinearMap:
    """Least-squares fit of a continuous two-segment line.

    Every candidate breakpoint is tried with a hinge basis
    ``(1, x, max(x - b, 0))``; the breakpoint with the smallest residual wins.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise BadKnots("need at least three samples to fit two segments")
    lo, hi = float(x.min()), float(x.max())
    if candidates is None:
        candidates = np.linspace(lo, hi, 201)[1:-1]
    best = None
    for b in candidates:
        A = np.column_stack([np.ones_like(x), x, np.maximum(x - b, 0.0)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        sse = float(np.sum((A @ coef - y) ** 2))
        if best is None or sse < best[0]:
            best = (sse, b, coef)
    _, b, (c0, c1, c2) = best
    f = lambda t: c0 + c1 * t + c2 * max(t - b, 0.0)
    return PiecewiseLinearMap([(lo, f(lo)), (b, f(b)), (hi, f(hi))])


@dataclass
class LauncherConfig:
    position: tuple = (0.0, 1.5, 0.35)
    phi_f: float = -np.pi / 2
    phi_l_map: PiecewiseLinearMap = field(
        default_factory=lambda: PiecewiseLinearMap([(0.0, -0.35), (0.5, 0.0), (1.0, 0.35)]))
    theta_l_map: PiecewiseLinearMap = field(
        default_factory=lambda: PiecewiseLinearMap([(0.0, -0.2), (0.6, 0.05), (1.0, 0.45)]))
    wheel_map: PiecewiseLinearMap = field(
        default_factory=lambda: PiecewiseLinearMap([(0.0, 0.0), (1.0, 1200.0)]))
    alpha: float = 0.5
    beta: float = 0.5
    gamma: float = 0.5
    speed_gain: float = 0.02
    # ground-truth flight coefficients of the simulated ball
    a_d: float = float(np.sqrt(0.1))
    a_m: float = 0.0

    def __post_init__(self):
        if not self.wheel_map.is_monotone():
            raise BadKnots("wheel speed map must be non-decreasing")

    def wheel_speeds(self, s_m) -> np.ndarray:
        return np.array([self.wheel_map(s) for s in s_m])

    @property
    def gains(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma])


@dataclass(frozen=True)
class SimNoise:
    meas_std: tuple = (1e-3, 1e-3, 1e-3)
    dropout_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout_prob < 1.0:
            raise DataError(f"dropout_prob must lie in [0, 1), got {self.dropout_prob}")
        if len(self.meas_std) != 3 or min(self.meas_std) < 0.0:
            raise DataError("meas_std needs three non-negative entries")


@dataclass(frozen=True)
class BoundingBox:
    x: float = 3.0
    y: float = 3.0
    z: float = 3.0

    def contains(self, p) -> bool:
        return abs(p[0]) <= self.x and abs(p[1]) <= self.y and p[2] <= self.z


def spin_design(wheels) -> np.ndarray:
    """3x3 matrix mapping the gains ``(alpha, beta, gamma)`` to the spin."""
    return (np.asarray(wheels, dtype=float)[:, None] * WHEEL_AXES).T


def ground_truth_spin(s_m, lc: LauncherConfig) -> np.ndarray:
    """Spin of a launch along -y from the three wheel speeds."""
    return spin_design(lc.wheel_speeds(s_m)) @ lc.gains


def launch_angles(lc: LauncherConfig, s_phi: float, s_theta: float) -> tuple[float, float]:
    return lc.phi_l_map(s_phi), lc.theta_l_map(s_theta)


def launch_state(lc: LauncherConfig, s_phi: float, s_theta: float, s_m) -> np.ndarray:
    phi_l, theta_l = launch_angles(lc, s_phi, s_theta)
    R = launch_rotation(lc.phi_f + phi_l, theta_l)
    speed = lc.speed_gain * float(np.mean(lc.wheel_speeds(s_m)))
    velocity = speed * R[:, 0]
    spin = R @ rot_z(np.pi / 2) @ ground_truth_spin(s_m, lc)
    return bl.make_state(lc.position, velocity, spin, lc.a_d, lc.a_m)


def launch_info(lc: LauncherConfig, s_phi: float, s_theta: float, s_m) -> LaunchInfo:
    phi_l, theta_l = launch_angles(lc, s_phi, s_theta)
    return LaunchInfo(lc.phi_f, phi_l, theta_l, tuple(s_m))


def default_impact_matrix(v_from_spin: float = 0.02, spin_from_v: float = 1.0) -> np.ndarray:
    """Bounce with a flipped normal velocity and tangential spin coupling.

    The couplings act in the table plane only, so the map commutes with
    rotations about the vertical axis.
    """
    C = bl.bounce_matrix()
    C[0, 4] = v_from_spin     # v_x <- omega_y
    C[1, 3] = -v_from_spin    # v_y <- omega_x
    C[4, 0] = spin_from_v     # omega_y <- v_x
    C[3, 1] = -spin_from_v    # omega_x <- v_y
    return C


def simulate_trajectory(z0, steps: int, C_true, noise: SimNoise, consts: bl.PhysicalConstants,
                        launch: LaunchInfo | None = None, fine: bool = False,
                        box: BoundingBox | None = BoundingBox(), max_impacts: int | None = 2,
                        rng: np.random.Generator | None = None) -> Trajectory:
    """Roll out ``steps`` samples from ``z0`` and measure them.

    Sample 0 is ``z0`` itself. The rollout ends early when the ball leaves
    ``box`` or when impact number ``max_impacts`` happens; the sample that
    triggered the stop is not kept. ``fine`` integrates with ten substeps per
    sampling period.
    """
    if steps < 2:
        raise DataError("need at least two steps")
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    sub = 10 if fine else 1
    inner = replace(consts, dt=consts.dt / sub)
    z = np.asarray(z0, dtype=float).copy()
    states = [z]
    impacts: list[int] = []
    n_impacts = 0
    for n in range(1, steps):
        hit = False
        for _ in range(sub):
            z, h = bl.forward_step_info(z, C_true, inner)
            hit = hit or h
        if hit:
            n_impacts += 1
            if max_impacts is not None and n_impacts >= max_impacts:
                break
            impacts.append(n)
        if box is not None and not box.contains(z):
            break
        states.append(z)
    truth = np.array(states)
    L = len(states)
    meas_noise = rng.normal(size=(L, 3)) * np.asarray(noise.meas_std)
    drop = rng.random(L) < noise.dropout_prob
    drop[:2] = False
    measurements = [
        Measurement(n, None, False) if drop[n] else Measurement(n, truth[n, :3] + meas_noise[n])
        for n in range(L)
    ]
    return Trajectory(measurements, launch, consts.dt, truth, impacts)


def _rotate_about(points, pivot, R):
    return (points - pivot) @ R.T + pivot


def augment(traj: Trajectory, phi: float) -> Trajectory:
    """Rotate a trajectory by ``phi`` about the vertical axis through its lowest sample."""
    if len(traj) == 0:
        raise DataError("cannot augment an empty trajectory")
    pos = traj.positions()
    if traj.truth is not None:
        ref = traj.truth[:, :3]
    else:
        ref = pos
    lowest = int(np.nanargmin(ref[:, 2]))
    pivot = np.array([ref[lowest, 0], ref[lowest, 1], 0.0])
    R = rot_z(phi)
    measurements = [
        Measurement(m.index, _rotate_about(m.position, pivot, R)) if m.available
        else Measurement(m.index, None, False)
        for m in traj.measurements
    ]
    truth = None
    if traj.truth is not None:
        truth = traj.truth.copy()
        truth[:, 0:3] = _rotate_about(traj.truth[:, 0:3], pivot, R)
        truth[:, 3:6] = traj.truth[:, 3:6] @ R.T
        truth[:, 6:9] = traj.truth[:, 6:9] @ R.T
    launch = traj.launch
    if launch is not None:
        launch = replace(launch, phi_f=launch.phi_f + phi)
    return Trajectory(measurements, launch, traj.dt, truth, list(traj.impacts))


def sample_launch_params(rng: np.random.Generator, mode: str = "default"):
    """Uniform launcher actuations ``(s_phi, s_theta, s_m)``."""
    if mode not in MOTOR_RANGES:
        raise DataError(f"unknown sampling mode {mode!r}")
    s_phi = rng.uniform(*S_PHI_RANGE)
    s_theta = rng.uniform(*S_THETA_RANGE)
    s_m = tuple(float(rng.uniform(lo, hi)) for lo, hi in MOTOR_RANGES[mode])
    return float(s_phi), float(s_theta), s_m


@dataclass
class SimSettings:
    """Everything the dataset generator needs besides the launcher."""

    steps: int = 400
    meas_std: float = 1e-3
    dropout_prob: float = 0.05
    mode: str = "default"
    fine: bool = False
    max_impacts: int = 2
    box: BoundingBox = BoundingBox()
    impact_matrix: np.ndarray = field(default_factory=default_impact_matrix)


def simulate_launch(index: int, base_seed: int, lc: LauncherConfig, settings: SimSettings,
                    consts: bl.PhysicalConstants) -> Trajectory:
    """Trajectory number ``index``; its randomness comes from ``base_seed + index`` only."""
    rng = np.random.default_rng(base_seed + index)
    s_phi, s_theta, s_m = sample_launch_params(rng, settings.mode)
    z0 = launch_state(lc, s_phi, s_theta, s_m)
    noise = SimNoise((settings.meas_std,) * 3, settings.dropout_prob, base_seed + index)
    return simulate_trajectory(
        z0, settings.steps, settings.impact_matrix, noise, consts,
        launch=launch_info(lc, s_phi, s_theta, s_m), fine=settings.fine,
        box=settings.box, max_impacts=settings.max_impacts, rng=rng,
    )


def generate_dataset(count: int, lc: LauncherConfig, settings: SimSettings,
                     consts: bl.PhysicalConstants, base_seed: int = 0) -> list[Trajectory]:
    return [simulate_launch(i, base_seed, lc, settings, consts) for i in range(count)]


def split_sizes(count: int, split=DEFAULT_SPLIT) -> tuple[int, int, int]:
    """Split ``count`` in proportion to ``split``; exact when they add up."""
    total = sum(split)
    if count == total:
        return tuple(split)
    train = int(round(count * split[0] / total))
    val = int(round(count * split[1] / total))
    val = min(val, count - train)
    return train, val, count - train - val


def split_dataset(trajs: list, split=DEFAULT_SPLIT) -> dict[str, list]:
    n_train, n_val, _ = split_sizes(len(trajs), split)
    return {
        "train": trajs[:n_train],
        "validation": trajs[n_train:n_train + n_val],
        "test": trajs[n_train + n_val:],
    }


def augment_dataset(trajs: list[Trajectory], copies: int, seed: int = 0) -> list[Trajectory]:
    """Each trajectory followed by ``copies`` rotations at uniform random angles."""
    rng = np.random.default_rng(seed)
    out = []
    for t in trajs:
        out.append(t)
        for phi in rng.uniform(0.0, 2.0 * np.pi, size=copies):
            out.append(augment(t, float(phi)))
    return out

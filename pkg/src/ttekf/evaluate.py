"""Evaluation protocols: open-loop prediction error and the spin-model fit."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import ekf
from .ballistics import PhysicalConstants
from .data import Trajectory
from .errors import DataError, DegenerateDesign, TooShort
from .simulate import LauncherConfig, spin_design
from .spin_net import LaunchInfo, SpinNetParams, azimuth_from_measurements, canonical_spin, rot_z

log = logging.getLogger(__name__)

__all__ = [
    "PredictionReport", "prediction_error", "horizon_sweep", "SpinFit", "spin_correlation",
    "pearson", "rescale_spin", "azimuth_from_measurements", "MIN_FILTERED", "LAST_PAIRS",
]

MIN_FILTERED = 10
LAST_PAIRS = 5

# (belief, steps) -> (steps, 3) predicted positions
Predictor = Callable[[ekf.Belief, int], np.ndarray]


@dataclass
class PredictionReport:
    horizon: float
    errors: np.ndarray
    skipped: int = 0
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=float)
        if np.any(self.errors < 0.0):
            raise DataError("prediction errors must be non-negative")

    def percentile(self, q: float) -> float:
        if self.errors.size == 0:
            return float("nan")
        return float(np.percentile(self.errors, q, method="linear"))

    @property
    def p10(self) -> float:
        return self.percentile(10)

    @property
    def median(self) -> float:
        return self.percentile(50)

    @property
    def p90(self) -> float:
        return self.percentile(90)

    def summary(self) -> dict:
        return {
            "horizon": self.horizon, "count": int(self.errors.size), "skipped": self.skipped,
            "p10": self.p10, "p50": self.median, "p90": self.p90,
        }


def prediction_split(traj: Trajectory, horizon_s: float) -> int:
    """Position of the first predicted sample.

    Starts ``horizon_s`` before the end, moved earlier if needed so the last
    five available samples are predicted, then later if needed so at least
    ten available samples are filtered.
    """
    L = len(traj)
    avail = np.flatnonzero(traj.available)
    if avail.size < MIN_FILTERED + 1:
        raise TooShort(f"only {avail.size} available measurements")
    start = L - int(round(horizon_s / traj.dt))
    start = min(start, int(avail[max(avail.size - LAST_PAIRS, 0)]))
    start = max(start, int(avail[MIN_FILTERED - 1]) + 1)
    if start >= L or not np.any(avail >= start):
        raise TooShort("no measurement left to compare predictions with")
    return start


def _model_predictor(params, consts) -> Predictor:
    def predict(belief, steps):
        return np.array([b.mu[:3] for b in ekf.predict_horizon(belief, steps, params, consts)])
    return predict


def prediction_error(traj: Trajectory, params, horizon_s: float, consts: PhysicalConstants,
                     use_launch_info: bool = True, azimuth: str = "launch",
                     predictor: Predictor | None = None) -> float:
    """Max distance over the last five available measurement/prediction pairs."""
    start = prediction_split(traj, horizon_s)
    launch = traj.launch if use_launch_info else None
    beliefs, _ = ekf.filter_trajectory(traj.measurements[:start], launch, params, consts, azimuth)
    if predictor is None:
        predictor = _model_predictor(params, consts)
    preds = np.asarray(predictor(beliefs[-1], len(traj) - start))
    pos = traj.positions()[start:]
    ok = np.flatnonzero(traj.available[start:])[-LAST_PAIRS:]
    return float(np.max(np.linalg.norm(pos[ok] - preds[ok], axis=1)))


def horizon_sweep(dataset: Sequence[Trajectory], params, horizons: Sequence[float],
                  consts: PhysicalConstants, **kwargs) -> list[PredictionReport]:
    """One report per horizon; trajectories too short for a horizon are counted as skipped."""
    reports = []
    for h in horizons:
        errors, skipped = [], 0
        for traj in dataset:
            try:
                errors.append(prediction_error(traj, params, h, consts, **kwargs))
            except TooShort:
                skipped += 1
        reports.append(PredictionReport(float(h), np.array(errors), skipped))
    return reports


def pearson(a, b) -> float:
    """Pearson correlation; a constant series correlates 1 with an identical one, else 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da, db = a - a.mean(), b - b.mean()
    na, nb = np.linalg.norm(da), np.linalg.norm(db)
    if na == 0.0 or nb == 0.0:
        return 1.0 if np.allclose(a, b, rtol=0.0, atol=1e-12) else 0.0
    return float(np.clip(da @ db / (na * nb), -1.0, 1.0))


@dataclass
class SpinFit:
    alpha: float
    beta: float
    gamma: float
    pearson_r: np.ndarray
    network_spin: np.ndarray   # (n, 3) in the -y launch frame
    model_spin: np.ndarray     # (n, 3) fitted wheel-spin model

    @property
    def gains(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma])


def _motor_settings(launches) -> np.ndarray:
    out = []
    for item in launches:
        if isinstance(item, Trajectory):
            item = item.launch
        if isinstance(item, LaunchInfo):
            item = item.s_m
        if item is None:
            raise DataError("spin fit needs launch information")
        out.append(np.asarray(item, dtype=float))
    return np.array(out)


def spin_correlation(launches, psi: SpinNetParams, lc: LauncherConfig) -> SpinFit:
    """Fit the wheel-spin gains to the network's spins by least squares.

    ``launches`` holds trajectories, launch infos or raw motor settings.
    """
    s_all = _motor_settings(launches)
    if len(s_all) < 3 or len(np.unique(s_all, axis=0)) < 3:
        raise DegenerateDesign("need at least three distinct motor settings")
    to_minus_y = rot_z(-np.pi / 2)
    net = np.array([to_minus_y @ canonical_spin(s, psi)[0] for s in s_all])
    design = np.vstack([spin_design(lc.wheel_speeds(s)) for s in s_all])
    if np.linalg.matrix_rank(design) < 3:
        raise DegenerateDesign("wheel-spin design matrix is rank deficient")
    gains, *_ = np.linalg.lstsq(design, net.reshape(-1), rcond=None)
    model = (design @ gains).reshape(-1, 3)
    r = np.array([pearson(net[:, k], model[:, k]) for k in range(3)])
    return SpinFit(float(gains[0]), float(gains[1]), float(gains[2]), r, net, model)


def rescale_spin(omega, k_m: float, mass: float, C_m: float, rho: float, r: float) -> np.ndarray:
    """Physical spin from the learned Magnus coefficient.

    The filter only identifies the product of Magnus coefficient and spin;
    with ``k_m* = C_m rho pi r^2 r / (2 m)`` the spin is ``k_m omega / k_m*``.
    """
    for name, val in (("mass", mass), ("C_m", C_m), ("rho", rho), ("r", r), ("k_m", k_m)):
        if not val > 0.0:
            raise DataError(f"{name} must be > 0, got {val}")
    k_star = C_m * rho * np.pi * r * r * r / (2.0 * mass)
    return k_m * np.asarray(omega, dtype=float) / k_star

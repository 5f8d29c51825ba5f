"""Extended Kalman filter over the ball dynamics.

Beliefs are Gaussian over the 11-dimensional state. The observation model
reads the position, ``H = [I3, 0]``. Covariances are symmetrized after every
prediction and correction; the correction uses the plain ``(I - KH) Sigma``
form with the innovation handled through its Cholesky factor.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky

from . import ballistics as bl
from .data import Measurement
from .errors import InvalidPair, SingularInnovation, TooFewMeasurements
from .spin_net import LaunchInfo, azimuth_from_measurements, initial_spin
from .transforms import inv_softplus_eps, softplus_eps

__all__ = [
    "Belief", "softplus_eps", "inv_softplus_eps", "initialize_belief", "predict",
    "correct", "filter_trajectory", "predict_horizon",
]

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class Belief:
    mu: np.ndarray
    sigma: np.ndarray

    def copy(self) -> "Belief":
        return Belief(self.mu.copy(), self.sigma.copy())


def _sym(a):
    return 0.5 * (a + a.T)


def initialize_belief(m1: Measurement, m2: Measurement, launch: LaunchInfo | None,
                      params, consts: bl.PhysicalConstants,
                      azimuth: str = "launch") -> Belief:
    """Belief at the time of ``m2`` from two available measurements.

    ``azimuth`` selects where the spin rotation gets its total azimuth:
    ``"launch"`` uses ``phi_f + phi_l`` from the launch info,
    ``"measurements"`` infers it from the displacement ``m2 - m1``.
    """
    if not (m1.available and m2.available):
        raise InvalidPair("both initial measurements must be available")
    if m2.index <= m1.index:
        raise InvalidPair(f"indices must increase, got {m1.index} and {m2.index}")
    p = m2.position
    v = (m2.position - m1.position) / (consts.dt * (m2.index - m1.index))
    phi_total = None
    if launch is not None and not launch.after_impact and azimuth == "measurements":
        phi_total = azimuth_from_measurements(m1.position, m2.position)
    elif azimuth not in ("launch", "measurements"):
        raise ValueError(f"unknown azimuth source {azimuth!r}")
    omega, sigma_omega = initial_spin(launch, params.psi_f, params, phi_total)

    mu = bl.make_state(p, v, omega, params.a_d, params.a_m)
    sigma = np.zeros((11, 11))
    sigma[bl.POS, bl.POS] = np.diag(softplus_eps(params.sigma_p_raw))
    sigma[bl.VEL, bl.VEL] = np.diag(softplus_eps(params.sigma_v_raw))
    sigma[bl.SPIN, bl.SPIN] = sigma_omega
    sigma[bl.A_D, bl.A_D] = softplus_eps(params.sigma_a_d_raw)
    sigma[bl.A_M, bl.A_M] = softplus_eps(params.sigma_a_m_raw)
    return Belief(mu, sigma)


def predict(b: Belief, params, consts: bl.PhysicalConstants) -> Belief:
    mu, J = bl.step_with_jacobian(b.mu, params.C, consts)
    sigma = _sym(J @ b.sigma @ J.T + params.Q())
    return Belief(mu, sigma)


def correct(b: Belief, m: Measurement, params) -> tuple[Belief, float]:
    """Kalman update with a position measurement; returns the log-likelihood
    of the measurement under the predicted belief as well."""
    S = b.sigma[:3, :3] + params.R()
    try:
        L = cholesky(S, lower=True)
    except LinAlgError as exc:
        raise SingularInnovation(str(exc)) from exc
    HS = b.sigma[:3, :]
    K = cho_solve((L, True), HS).T
    resid = m.position - b.mu[:3]
    mu = b.mu + K @ resid
    sigma = _sym(b.sigma - K @ HS)
    w = np.linalg.solve(L, resid)
    loglik = -0.5 * (w @ w + 2.0 * np.sum(np.log(np.diag(L))) + 3 * LOG_2PI)
    return Belief(mu, sigma), float(loglik)


def filter_trajectory(meas: Sequence[Measurement], launch: LaunchInfo | None, params,
                      consts: bl.PhysicalConstants, azimuth: str = "launch",
                      return_logliks: bool = False):
    """Filter a measurement sequence.

    Initializes at the second available measurement and returns one belief
    per time step from there to the last measurement, together with the
    summed log-likelihood of all later available measurements.
    """
    avail = [m for m in meas if m.available]
    if len(avail) < 2:
        raise TooFewMeasurements(f"need two available measurements, got {len(avail)}")
    m1, m2 = avail[0], avail[1]
    b = initialize_belief(m1, m2, launch, params, consts, azimuth)
    by_index = {m.index: m for m in avail[2:]}
    beliefs = [b]
    logliks = []
    for n in range(m2.index + 1, meas[-1].index + 1):
        b = predict(b, params, consts)
        m = by_index.get(n)
        if m is not None:
            b, ll = correct(b, m, params)
            logliks.append(ll)
        beliefs.append(b)
    total = float(sum(logliks))
    if return_logliks:
        return beliefs, total, logliks
    return beliefs, total


def predict_horizon(b: Belief, steps: int, params, consts: bl.PhysicalConstants) -> list[Belief]:
    """Open-loop predictions for ``steps`` future time steps."""
    out = []
    for _ in range(steps):
        b = predict(b, params, consts)
        out.append(b)
    return out

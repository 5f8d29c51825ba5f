"""Batched chunk log-likelihood on the differentiation tape.

This is the training-time twin of :mod:`ttekf.ekf`: the same initialization,
prediction and correction formulas, written with :mod:`ttekf.autodiff`
primitives and vectorized over a batch of equal-length chunks. Branches
(table impact, missing measurements, launch-info kind) are resolved per
batch element with ``where`` on concrete values, so the gradient is the
exact gradient of the branch each element actually takes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import params as pm
from .ballistics import PhysicalConstants
from .data import Chunk
from .errors import DataError
from .spin_net import launch_rotation

LOG_2PI = np.log(2.0 * np.pi)

NO_LAUNCH, LAUNCH, AFTER_IMPACT = 0, 1, 2

# skew(a).reshape(9) == a @ _E9
_E9 = np.zeros((3, 9))
for (_i, _j), (_k, _sign) in {
    (0, 1): (2, -1.0), (0, 2): (1, 1.0), (1, 0): (2, 1.0),
    (1, 2): (0, -1.0), (2, 0): (1, -1.0), (2, 1): (0, 1.0),
}.items():
    _E9[_k, 3 * _i + _j] = _sign


@dataclass
class ChunkBatch:
    """Dense arrays for a batch of chunks of one length ``N``."""

    meas: np.ndarray      # (B, N, 3), zeros where unavailable
    avail: np.ndarray     # (B, N) bool
    kind: np.ndarray      # (B,) NO_LAUNCH / LAUNCH / AFTER_IMPACT
    s_m: np.ndarray       # (B, 3)
    rot: np.ndarray       # (B, 3, 3)
    gap: np.ndarray       # (B,) index distance of the two seed samples

    def __len__(self):
        return self.meas.shape[0]

    def take(self, idx) -> "ChunkBatch":
        return ChunkBatch(self.meas[idx], self.avail[idx], self.kind[idx],
                          self.s_m[idx], self.rot[idx], self.gap[idx])


def pack_chunks(chunks: Sequence[Chunk], use_launch_info: bool = True) -> ChunkBatch:
    if not chunks:
        raise DataError("empty batch")
    N = len(chunks[0])
    B = len(chunks)
    meas = np.zeros((B, N, 3))
    avail = np.zeros((B, N), dtype=bool)
    kind = np.full(B, NO_LAUNCH)
    s_m = np.zeros((B, 3))
    rot = np.tile(np.eye(3), (B, 1, 1))
    gap = np.ones(B)
    for b, c in enumerate(chunks):
        if len(c) != N:
            raise DataError("all chunks in a batch need the same length")
        ms = c.measurements
        if not (ms[0].available and ms[1].available):
            raise DataError("chunk must start with two available measurements")
        gap[b] = ms[1].index - ms[0].index
        for n, m in enumerate(ms):
            if m.available:
                meas[b, n] = m.position
                avail[b, n] = True
        if use_launch_info and c.launch is not None:
            if c.launch.after_impact:
                kind[b] = AFTER_IMPACT
            else:
                kind[b] = LAUNCH
                s_m[b] = c.launch.s_m
                rot[b] = launch_rotation(c.launch.phi_total, c.launch.theta_l)
    return ChunkBatch(meas, avail, kind, s_m, rot, gap)


# dynamics on the tape ------------------------------------------------------

def _skew(a):
    B = a.shape[0]
    return ad.reshape(ad.matmul(a, _E9), (B, 3, 3))


class _Parts:
    """Quantities shared by the free-flight map and its Jacobians."""

    def __init__(self, z, consts: PhysicalConstants):
        self.z = z
        self.v = z[:, 3:6]
        self.w = z[:, 6:9]
        self.a_d = z[:, 9]
        self.a_m = z[:, 10]
        self.k_d = self.a_d * self.a_d + consts.eps
        self.k_m = self.a_m * self.a_m + consts.eps
        s2 = ad.sum(self.v * self.v, axis=-1)
        moving = ad.value(s2) > 0.0
        if moving.all():
            self.speed = ad.sqrt(s2)
            self.inv_speed = 1.0 / self.speed
        else:
            safe = ad.sqrt(ad.where(moving, s2, 1.0))
            self.speed = ad.where(moving, safe, 0.0)
            self.inv_speed = ad.where(moving, 1.0 / safe, 0.0)
        self.Sw = _skew(self.w)
        self.Sv = _skew(self.v)
        self.wxv = ad.matvec(self.Sw, self.v)
        self.acc = (-(self.k_d * self.speed)[:, None] * self.v
                    + self.k_m[:, None] * self.wxv + consts.gravity)


def _col(dt):
    return dt[:, None] if isinstance(dt, ad.Var) else dt


def _free(parts: _Parts, dt):
    z, d = parts.z, _col(dt)
    return ad.concat([z[:, 0:3] + d * parts.v, parts.v + d * parts.acc, z[:, 6:11]], axis=-1)


def _vfield(parts: _Parts):
    B = parts.z.shape[0]
    return ad.concat([parts.v, parts.acc, np.zeros((B, 5))], axis=-1)


def _jac_state(parts: _Parts, dt):
    B = parts.z.shape[0]
    I3 = np.eye(3)
    d = _col(dt)
    d3 = dt[:, None, None] if isinstance(dt, ad.Var) else dt
    v = parts.v
    d_drag = parts.speed[:, None, None] * I3 + ad.outer(v, v) * parts.inv_speed[:, None, None]
    Jvv = I3 + d3 * (-parts.k_d[:, None, None] * d_drag + parts.k_m[:, None, None] * parts.Sw)
    Jvw = -(d3 * parts.k_m[:, None, None]) * parts.Sv
    Jvad = (-2.0 * d) * (parts.a_d * parts.speed)[:, None] * v
    Jvam = (2.0 * d) * parts.a_m[:, None] * parts.wxv
    base = np.broadcast_to(np.eye(11), (B, 11, 11))
    blocks = [
        ((slice(None), slice(3, 6), slice(3, 6)), Jvv),
        ((slice(None), slice(3, 6), slice(6, 9)), Jvw),
        ((slice(None), slice(3, 6), 9), Jvad),
        ((slice(None), slice(3, 6), 10), Jvam),
    ]
    if isinstance(dt, ad.Var):
        blocks.append(((slice(None), slice(0, 3), slice(3, 6)), d3 * I3))
    else:
        base = base.copy()
        base[:, 0:3, 3:6] = dt * I3
    return ad.assemble(base, blocks)


def forward_with_jacobian(z, C_lift, consts: PhysicalConstants):
    """Batched forward step and its Jacobian; ``C_lift`` is the 11x11 map."""
    dt = consts.dt
    parts = _Parts(z, consts)
    z_free = _free(parts, dt)
    J_free = _jac_state(parts, dt)
    pen = ad.value(z_free)[:, 2] - consts.r < consts.z_table
    if not pen.any():
        return z_free, J_free

    g = consts.g_z
    v_z = z[:, 5]
    h = -((z[:, 2] - consts.r) - consts.z_table)
    disc = v_z * v_z + 2.0 * g * h
    hit = pen & (ad.value(disc) >= 0.0)
    if not hit.any():
        return z_free, J_free
    root = ad.sqrt(ad.where(hit, disc, 1.0))
    t_raw = -(v_z + root) / g
    tv = ad.value(t_raw)
    low, high = tv < 0.0, tv > dt
    t = ad.where(low, 0.0, ad.where(high, dt, t_raw))
    rem = dt - t

    z_plus = ad.matvec(C_lift, _free(parts, t))
    parts_plus = _Parts(z_plus, consts)
    z_imp = _free(parts_plus, rem)

    B = z.shape[0]
    row = ad.assemble(np.zeros((B, 11)), [
        ((slice(None), 2), 1.0 / root),
        ((slice(None), 5), -(1.0 + v_z / root) / g),
    ])
    row = ad.where((low | high)[:, None], 0.0, row)
    J2 = ad.matmul(C_lift, _jac_state(parts, t) + ad.outer(_vfield(parts), row))
    J_imp = ad.matmul(_jac_state(parts_plus, rem), J2) - ad.outer(_vfield(parts_plus), row)

    return ad.where(hit[:, None], z_imp, z_free), ad.where(hit[:, None, None], J_imp, J_free)


# filter on the tape ----------------------------------------------------------

def _sp(x):
    return ad.softplus(x) + 1e-6


def _sym(S):
    return 0.5 * (S + ad.swap(S))


def tape_parameters(tape: ad.Tape, params: pm.ParameterSet) -> dict[str, ad.Var]:
    return {name: tape.var(pm._get(params, name)) for name, _ in pm.layout(params.hidden)}


def lift(C):
    return ad.assemble(np.eye(11), [((slice(3, 9), slice(3, 9)), C)])


def initial_belief(P, batch: ChunkBatch, consts: PhysicalConstants):
    B = len(batch)
    I3 = np.eye(3)
    m1, m2 = batch.meas[:, 0], batch.meas[:, 1]
    v0 = (m2 - m1) / (consts.dt * batch.gap[:, None])

    launch = batch.kind == LAUNCH
    after = batch.kind == AFTER_IMPACT
    sig_none = I3 * _sp(P["sigma_omega_raw"])
    sig_ai = I3 * _sp(P["sigma_omega_ai_raw"])
    fallback = ad.where(after[:, None, None], sig_ai, sig_none)
    if launch.any():
        hidden = ad.relu(ad.matmul(batch.s_m, ad.swap(P["W1"])))
        out = ad.matmul(hidden, ad.swap(P["W2"]))
        omega = ad.matvec(batch.rot, out[:, 0:3])
        sig_x = I3 * _sp(out[:, 3:6])[:, None, :]
        sig_w = ad.matmul(ad.matmul(batch.rot, sig_x), np.swapaxes(batch.rot, -1, -2))
        omega = ad.where(launch[:, None], omega, 0.0)
        sig_w = ad.where(launch[:, None, None], sig_w, fallback)
    else:
        omega = np.zeros((B, 3))
        sig_w = fallback + np.zeros((B, 1, 1))

    ones = np.ones((B, 1))
    mu = ad.concat([m2, v0, omega, ones * P["a_d"], ones * P["a_m"]], axis=-1)
    sigma = ad.assemble(np.zeros((B, 11, 11)), [
        ((slice(None), slice(0, 3), slice(0, 3)), I3 * _sp(P["sigma_p_raw"])),
        ((slice(None), slice(3, 6), slice(3, 6)), I3 * _sp(P["sigma_v_raw"])),
        ((slice(None), slice(6, 9), slice(6, 9)), sig_w),
        ((slice(None), 9, 9), _sp(P["sigma_a_d_raw"])),
        ((slice(None), 10, 10), _sp(P["sigma_a_m_raw"])),
    ])
    return mu, sigma


_DIAG = (slice(None), np.arange(3), np.arange(3))


def _correct(mu, sigma, m, R):
    S = sigma[:, 0:3, 0:3] + R
    L = ad.cholesky(S)
    HS = sigma[:, 0:3, :]
    K = ad.swap(ad.solve(ad.swap(L), ad.solve(L, HS)))
    resid = m - mu[:, 0:3]
    mu_c = mu + ad.matvec(K, resid)
    sigma_c = _sym(sigma - ad.matmul(K, HS))
    w = ad.solve(L, resid[:, :, None])[:, :, 0]
    logdet = 2.0 * ad.sum(ad.log(L[_DIAG]), axis=-1)
    ll = -0.5 * (ad.sum(w * w, axis=-1) + logdet + 3 * LOG_2PI)
    return mu_c, sigma_c, ll


def batch_loglik(P, batch: ChunkBatch, consts: PhysicalConstants):
    """Per-chunk summed log-likelihood of samples 3..N given samples 1 and 2."""
    mu, sigma = initial_belief(P, batch, consts)
    C_lift = lift(P["C"])
    Q = np.eye(11) * _sp(P["sigma_q_raw"])
    R = np.eye(3) * _sp(P["sigma_r_raw"])
    total = np.zeros(len(batch))
    for n in range(2, batch.meas.shape[1]):
        mu, J = forward_with_jacobian(mu, C_lift, consts)
        sigma = _sym(ad.matmul(ad.matmul(J, sigma), ad.swap(J)) + Q)
        avail = batch.avail[:, n]
        if not avail.any():
            continue
        m = np.where(avail[:, None], batch.meas[:, n], ad.value(mu)[:, 0:3])
        mu_c, sigma_c, ll = _correct(mu, sigma, m, R)
        if avail.all():
            mu, sigma = mu_c, sigma_c
            total = total + ll
        else:
            mu = ad.where(avail[:, None], mu_c, mu)
            sigma = ad.where(avail[:, None, None], sigma_c, sigma)
            total = total + ad.where(avail, ll, 0.0)
    return total


def loss_and_grad(params: pm.ParameterSet, batch: ChunkBatch, consts: PhysicalConstants):
    """Negative mean chunk log-likelihood and its flat gradient."""
    tape = ad.Tape()
    P = tape_parameters(tape, params)
    total = batch_loglik(P, batch, consts)
    loss = -ad.sum(total) / len(batch)
    if not isinstance(loss, ad.Var):
        return float(loss), np.zeros(pm.size(params.hidden))
    names = [name for name, _ in pm.layout(params.hidden)]
    grads = tape.gradient(loss, [P[name] for name in names])
    return float(loss.value), np.concatenate([g.reshape(-1) for g in grads])


def loss_value(params: pm.ParameterSet, batch: ChunkBatch, consts: PhysicalConstants) -> float:
    tape = ad.Tape()
    total = batch_loglik(tape_parameters(tape, params), batch, consts)
    return float(-np.sum(ad.value(total)) / len(batch))

"""Maximum-likelihood learning of the filter parameters.

Trajectories are cut into fixed-length chunks. The loss of a batch is the
negative mean log-likelihood of each chunk's measurements from the third on,
given the first two. Gradients come from the tape objective in
:mod:`ttekf.objective`, and parameters are updated with Adam.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import ekf
from . import objective as ob
from . import params as pm
from .ballistics import PhysicalConstants
from .data import Chunk, Trajectory
from .errors import DataError, NonFiniteGradient, SingularInnovation, TooShort
from .params import ParameterSet, init_parameters

log = logging.getLogger(__name__)

__all__ = [
    "ParameterSet", "init_parameters", "TrainConfig", "make_chunks", "loss", "gradient",
    "loss_and_gradient", "adam_step", "train",
]

CHUNK_LEN = 50


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 5e-3
    steps: int = 20000
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    # global-norm gradient clipping; None disables it
    clip_norm: float | None = 100.0
    chunk_len: int = CHUNK_LEN
    use_launch_info: bool = True
    validate_every: int = 500
    validation_chunks: int = 512
    hidden: int = pm.HIDDEN

    def __post_init__(self):
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if not self.learning_rate > 0.0:
            raise DataError("learning_rate must be > 0")
        if self.steps < 0:
            raise DataError("steps must be >= 0")
        if self.chunk_len < 3:
            raise DataError("chunk_len must be >= 3")


def make_chunks(traj: Trajectory, N: int = CHUNK_LEN) -> list[Chunk]:
    """All length-``N`` windows that start with two available samples.

    A window whose seed sample follows a table impact carries the launch
    info with the after-impact flag set.
    """
    L = len(traj)
    if L < N:
        raise TooShort(f"trajectory has {L} samples, chunks need {N}")
    ms = traj.measurements
    out = []
    for i in range(L + 1 - N):
        if not (ms[i].available and ms[i + 1].available):
            continue
        launch = traj.launch
        if launch is not None:
            launch = launch.with_after_impact(traj.after_impact_at(ms[i + 1].index))
        out.append(Chunk(ms[i:i + N], launch))
    return out


def chunk_dataset(trajs: Sequence[Trajectory], N: int = CHUNK_LEN) -> list[Chunk]:
    chunks = []
    for t in trajs:
        if len(t) >= N:
            chunks.extend(make_chunks(t, N))
        else:
            log.debug("skipping trajectory of length %d", len(t))
    return chunks


def loss(batch: Sequence[Chunk], params: ParameterSet, consts: PhysicalConstants) -> float:
    """Negative mean chunk log-likelihood, evaluated with the plain filter."""
    if not batch:
        raise DataError("empty batch")
    totals = [ekf.filter_trajectory(c.measurements, c.launch, params, consts)[1] for c in batch]
    return -float(np.mean(totals))


def loss_and_gradient(batch, params: ParameterSet, consts: PhysicalConstants):
    """Loss and flat gradient from the tape; ``batch`` is chunks or a packed batch."""
    if not isinstance(batch, ob.ChunkBatch):
        batch = ob.pack_chunks(batch)
    try:
        value, grad = ob.loss_and_grad(params, batch, consts)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation(str(exc)) from exc
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        raise NonFiniteGradient("loss or gradient is not finite")
    return value, grad


def gradient(batch, params: ParameterSet, consts: PhysicalConstants) -> np.ndarray:
    return loss_and_gradient(batch, params, consts)[1]


def adam_step(x, grad, m, v, t: int, cfg: TrainConfig):
    """One bias-corrected Adam update; returns ``(x, m, v)``."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1 ** t)
    v_hat = v / (1.0 - cfg.beta2 ** t)
    return x - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps_adam), m, v


def clip_by_norm(grad: np.ndarray, max_norm: float | None) -> np.ndarray:
    if max_norm is None:
        return grad
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def _batched_loss(params, packed: ob.ChunkBatch, consts, size: int = 256) -> float:
    n = len(packed)
    total = 0.0
    for lo in range(0, n, size):
        idx = np.arange(lo, min(lo + size, n))
        try:
            total += ob.loss_value(params, packed.take(idx), consts) * len(idx)
        except np.linalg.LinAlgError:
            # a checkpoint that breaks the filter is never the best one
            log.warning("validation loss undefined (innovation not positive definite)")
            return np.inf
    out = total / n
    return out if np.isfinite(out) else np.inf


def train(dataset: Sequence[Trajectory], cfg: TrainConfig, consts: PhysicalConstants,
          validation: Sequence[Trajectory] | None = None, init: ParameterSet | None = None,
          callback: Callable[[int, float], None] | None = None):
    """Minibatch Adam on the chunk log-likelihood.

    Returns ``(params, losses)`` with one loss per step. With a validation
    set, the parameters with the best validation loss (checked every
    ``cfg.validate_every`` steps and at the end) are returned.
    """
    params = init if init is not None else init_parameters(cfg.seed, cfg.hidden)
    losses: list[float] = []
    if cfg.steps == 0:
        return params.copy(), losses
    chunks = chunk_dataset(dataset, cfg.chunk_len)
    if not chunks:
        raise DataError("dataset yields no chunks")
    packed = ob.pack_chunks(chunks, cfg.use_launch_info)
    rng = np.random.default_rng(cfg.seed)

    val_packed = None
    if validation:
        val_chunks = chunk_dataset(validation, cfg.chunk_len)
        if val_chunks:
            pick = np.random.default_rng(cfg.seed + 1).permutation(len(val_chunks))
            val_chunks = [val_chunks[i] for i in np.sort(pick[:cfg.validation_chunks])]
            val_packed = ob.pack_chunks(val_chunks, cfg.use_launch_info)
    best_val, best_x = np.inf, None

    hidden = params.hidden
    x = pm.flatten(params)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    order = rng.permutation(len(packed))
    pos = 0
    started = time.perf_counter()
    for step in range(1, cfg.steps + 1):
        if pos + cfg.batch_size > len(order):
            order = rng.permutation(len(packed))
            pos = 0
        idx = order[pos:pos + cfg.batch_size]
        pos += cfg.batch_size
        try:
            value, grad = loss_and_gradient(packed.take(idx), pm.unflatten(x, hidden), consts)
        except NonFiniteGradient as exc:
            raise NonFiniteGradient(f"step {step}: {exc}") from exc
        x, m, v = adam_step(x, clip_by_norm(grad, cfg.clip_norm), m, v, step, cfg)
        losses.append(value)
        if callback is not None:
            callback(step, value)
        if step % 100 == 0:
            log.info("step %d loss %.4f (%.1fs)", step, value, time.perf_counter() - started)
        if val_packed is not None and (step % cfg.validate_every == 0 or step == cfg.steps):
            val = _batched_loss(pm.unflatten(x, hidden), val_packed, consts)
            log.info("step %d validation loss %.4f", step, val)
            if val < best_val:
                best_val, best_x = val, x.copy()
    if best_x is not None:
        x = best_x
    return pm.unflatten(x, hidden), losses

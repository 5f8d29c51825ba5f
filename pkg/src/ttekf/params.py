"""The learnable parameter set and its flat-vector layout."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ballistics import bounce_matrix
from .errors import DataError
from .spin_net import HIDDEN, SpinNetParams
from .transforms import inv_softplus_eps, softplus_eps


@dataclass
class ParameterSet:
    C: np.ndarray
    sigma_q_raw: np.ndarray
    sigma_r_raw: np.ndarray
    sigma_p_raw: np.ndarray
    sigma_v_raw: np.ndarray
    psi_f: SpinNetParams
    sigma_omega_raw: np.ndarray
    sigma_omega_ai_raw: np.ndarray
    a_d: float
    a_m: float
    sigma_a_d_raw: float
    sigma_a_m_raw: float

    @property
    def hidden(self) -> int:
        return self.psi_f.W1.shape[0]

    def copy(self) -> "ParameterSet":
        return unflatten(flatten(self), self.hidden)

    def Q(self) -> np.ndarray:
        return np.diag(softplus_eps(self.sigma_q_raw))

    def R(self) -> np.ndarray:
        return np.diag(softplus_eps(self.sigma_r_raw))


def layout(hidden: int = HIDDEN) -> list[tuple[str, tuple[int, ...]]]:
    """Stable (name, shape) ordering of the flat parameter vector."""
    return [
        ("C", (6, 6)),
        ("sigma_q_raw", (11,)),
        ("sigma_r_raw", (3,)),
        ("sigma_p_raw", (3,)),
        ("sigma_v_raw", (3,)),
        ("W1", (hidden, 3)),
        ("W2", (6, hidden)),
        ("sigma_omega_raw", (3,)),
        ("sigma_omega_ai_raw", (3,)),
        ("a_d", ()),
        ("a_m", ()),
        ("sigma_a_d_raw", ()),
        ("sigma_a_m_raw", ()),
    ]


def block_slices(hidden: int = HIDDEN) -> dict[str, slice]:
    out, start = {}, 0
    for name, shape in layout(hidden):
        size = int(np.prod(shape, dtype=int))
        out[name] = slice(start, start + size)
        start += size
    return out


def size(hidden: int = HIDDEN) -> int:
    return sum(int(np.prod(shape, dtype=int)) for _, shape in layout(hidden))


def _get(params: ParameterSet, name: str):
    if name in ("W1", "W2"):
        return getattr(params.psi_f, name)
    return getattr(params, name)


def flatten(params: ParameterSet) -> np.ndarray:
    return np.concatenate([
        np.asarray(_get(params, name), dtype=float).reshape(-1)
        for name, _ in layout(params.hidden)
    ])


def unflatten(flat: np.ndarray, hidden: int = HIDDEN) -> ParameterSet:
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (size(hidden),):
        raise DataError(f"flat parameter vector has shape {flat.shape}, expected ({size(hidden)},)")
    values = {}
    for (name, shape), sl in zip(layout(hidden), block_slices(hidden).values()):
        chunk = flat[sl].reshape(shape)
        values[name] = float(chunk) if shape == () else chunk.copy()
    psi = SpinNetParams(values.pop("W1"), values.pop("W2"))
    return ParameterSet(psi_f=psi, **values)


def init_parameters(seed: int = 0, hidden: int = HIDDEN) -> ParameterSet:
    """Initial parameters: bounce impact map, fixed variances, random spin net."""
    rng = np.random.default_rng(seed)
    inv = inv_softplus_eps
    sigma_q = np.concatenate([
        np.full(3, 1e-4), np.full(3, 1e-2), np.full(3, 1e-3), [1e-2, 1e-2],
    ])
    return ParameterSet(
        C=bounce_matrix(),
        sigma_q_raw=inv(sigma_q),
        sigma_r_raw=inv(np.full(3, 1e-3)),
        sigma_p_raw=inv(np.full(3, 1e-4)),
        sigma_v_raw=inv(np.full(3, 1e-2)),
        psi_f=SpinNetParams.random(rng, hidden),
        sigma_omega_raw=inv(np.ones(3)),
        sigma_omega_ai_raw=inv(np.ones(3)),
        a_d=float(np.sqrt(0.1)),
        a_m=float(np.sqrt(0.1)),
        sigma_a_d_raw=float(inv(1e-2)),
        sigma_a_m_raw=float(inv(1e-2)),
    )

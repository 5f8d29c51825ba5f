"""Softplus reparameterization used for every learned variance."""
from __future__ import annotations

import numpy as np

SOFTPLUS_FLOOR = 1e-6


def softplus_eps(x):
    """Elementwise ``log(1 + exp(x)) + 1e-6``, safe for large ``x``."""
    return np.logaddexp(0.0, x) + SOFTPLUS_FLOOR


def inv_softplus_eps(y):
    """Inverse of :func:`softplus_eps`; requires ``y > 1e-6``."""
    y = np.asarray(y, dtype=float) - SOFTPLUS_FLOOR
    if np.any(y <= 0.0):
        raise ValueError("inv_softplus_eps is only defined above the 1e-6 floor")
    # log(expm1(y)) without overflow for large y
    return y + np.log(-np.expm1(-y))

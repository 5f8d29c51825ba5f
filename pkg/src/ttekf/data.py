"""Measurement containers: samples, trajectories and training chunks."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError
from .spin_net import LaunchInfo


@dataclass(frozen=True)
class Measurement:
    index: int
    position: np.ndarray | None
    available: bool = True

    def __post_init__(self):
        if self.available:
            if self.position is None:
                raise DataError(f"sample {self.index} is available but has no position")
            pos = np.asarray(self.position, dtype=float).reshape(3)
            object.__setattr__(self, "position", pos)
        else:
            object.__setattr__(self, "position", None)


@dataclass
class Trajectory:
    """A sequence of samples with contiguous indices ``n0, n0+1, ...``.

    ``impacts`` holds the indices of samples that are the first after a
    table impact; ``truth`` optionally stores the ground-truth states.
    """

    measurements: list[Measurement]
    launch: LaunchInfo | None = None
    dt: float = 1.0 / 180.0
    truth: np.ndarray | None = None
    impacts: list[int] = field(default_factory=list)

    def __post_init__(self):
        idx = [m.index for m in self.measurements]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise DataError("measurement indices must be strictly increasing")
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=float)
            if self.truth.shape != (len(self.measurements), 11):
                raise DataError(f"truth must have shape ({len(self.measurements)}, 11)")

    def __len__(self) -> int:
        return len(self.measurements)

    @property
    def indices(self) -> np.ndarray:
        return np.array([m.index for m in self.measurements], dtype=int)

    @property
    def available(self) -> np.ndarray:
        return np.array([m.available for m in self.measurements], dtype=bool)

    def positions(self) -> np.ndarray:
        """``(L, 3)`` measured positions, NaN where unavailable."""
        out = np.full((len(self), 3), np.nan)
        for i, m in enumerate(self.measurements):
            if m.available:
                out[i] = m.position
        return out

    def after_impact_at(self, index: int) -> bool:
        return any(i <= index for i in self.impacts)


@dataclass
class Chunk:
    measurements: list[Measurement]
    launch: LaunchInfo | None

    def __len__(self) -> int:
        return len(self.measurements)


def with_launch(traj: Trajectory, launch: LaunchInfo | None) -> Trajectory:
    return replace(traj, launch=launch)

"""Gray-box filtering and prediction of table-tennis ball flight.

An extended Kalman filter over a drag/Magnus/bounce model whose noise
levels, impact map and launcher-conditioned spin prior are learned by
maximizing the marginal likelihood of recorded (here: simulated)
trajectories.
"""
import os as _os

# must run before numpy loads its BLAS
_threads = _os.environ.get("TTEKF_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .ballistics import PhysicalConstants, forward_step, jac_forward  # noqa: E402
from .data import Chunk, Measurement, Trajectory  # noqa: E402
from .ekf import Belief, filter_trajectory, predict_horizon  # noqa: E402
from .learn import TrainConfig, make_chunks, train  # noqa: E402
from .params import ParameterSet, init_parameters  # noqa: E402
from .spin_net import LaunchInfo  # noqa: E402

__all__ = [
    "PhysicalConstants", "forward_step", "jac_forward", "Chunk", "Measurement", "Trajectory",
    "Belief", "filter_trajectory", "predict_horizon", "TrainConfig", "make_chunks", "train",
    "ParameterSet", "init_parameters", "LaunchInfo",
]
__version__ = "0.1.0"

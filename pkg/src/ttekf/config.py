"""Run configuration: a flat ``key = value`` file with dotted keys.

Lines starting with ``#`` are comments. Every key must be one of
:data:`SCHEMA`; unknown keys are rejected so that typos do not silently
fall back to defaults. Vector values are comma separated.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ballistics import PhysicalConstants
from .errors import DataError
from .learn import TrainConfig
from .simulate import BoundingBox, LauncherConfig, PiecewiseLinearMap, SimSettings, default_impact_matrix


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _knots(s: str) -> tuple[tuple[float, float], ...]:
    """``x:y, x:y, ...``"""
    out = []
    for item in s.split(","):
        x, y = item.split(":")
        out.append((float(x), float(y)))
    return tuple(out)


_defaults = PhysicalConstants()
_launcher = LauncherConfig()
_train = TrainConfig()

# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    "seed": (int, 0),
    "physics.g_z": (float, _defaults.g_z),
    "physics.r": (float, _defaults.r),
    "physics.z_table": (float, _defaults.z_table),
    "physics.dt": (float, _defaults.dt),
    "physics.eps": (float, _defaults.eps),
    "launcher.position": (_floats, tuple(_launcher.position)),
    "launcher.phi_f": (float, _launcher.phi_f),
    "launcher.phi_l_knots": (_knots, tuple(_launcher.phi_l_map.knots)),
    "launcher.theta_l_knots": (_knots, tuple(_launcher.theta_l_map.knots)),
    "launcher.wheel_knots": (_knots, tuple(_launcher.wheel_map.knots)),
    "launcher.alpha": (float, _launcher.alpha),
    "launcher.beta": (float, _launcher.beta),
    "launcher.gamma": (float, _launcher.gamma),
    "launcher.speed_gain": (float, _launcher.speed_gain),
    "launcher.a_d": (float, _launcher.a_d),
    "launcher.a_m": (float, _launcher.a_m),
    "sim.count": (int, 334),
    "sim.steps": (int, 400),
    "sim.meas_std": (float, 1e-3),
    "sim.dropout": (float, 0.05),
    "sim.mode": (str, "default"),
    "sim.fine": (_bool, False),
    "sim.max_impacts": (int, 2),
    "sim.box": (_floats, (3.0, 3.0, 3.0)),
    "sim.split": (_ints, (108, 63, 163)),
    "sim.augment": (int, 0),
    "sim.v_from_spin": (float, 0.02),
    "sim.spin_from_v": (float, 1.0),
    "train.steps": (int, _train.steps),
    "train.batch_size": (int, _train.batch_size),
    "train.learning_rate": (float, _train.learning_rate),
    "train.beta1": (float, _train.beta1),
    "train.beta2": (float, _train.beta2),
    "train.eps_adam": (float, _train.eps_adam),
    "train.clip_norm": (float, _train.clip_norm),
    "train.chunk_len": (int, _train.chunk_len),
    "train.validate_every": (int, _train.validate_every),
    "train.validation_chunks": (int, _train.validation_chunks),
    "train.hidden": (int, _train.hidden),
    "train.use_launch_info": (_bool, True),
    "eval.horizons": (_floats, (1.0,)),
    "eval.azimuth": (str, "launch"),
    "paths.manifest": (str, ""),
    "paths.params": (str, ""),
}


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def with_overrides(self, **kv) -> "RunConfig":
        vals = dict(self.values)
        for k, v in kv.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise DataError(f"unknown configuration key {key!r}")
            vals[key] = v
        return RunConfig(vals)

    def physics(self) -> PhysicalConstants:
        v = self.values
        return PhysicalConstants(v["physics.g_z"], v["physics.r"], v["physics.z_table"],
                                 v["physics.dt"], v["physics.eps"])

    def launcher(self) -> LauncherConfig:
        v = self.values
        if len(v["launcher.position"]) != 3:
            raise DataError("launcher.position needs three values")
        return LauncherConfig(
            position=tuple(v["launcher.position"]), phi_f=v["launcher.phi_f"],
            phi_l_map=PiecewiseLinearMap(v["launcher.phi_l_knots"]),
            theta_l_map=PiecewiseLinearMap(v["launcher.theta_l_knots"]),
            wheel_map=PiecewiseLinearMap(v["launcher.wheel_knots"]),
            alpha=v["launcher.alpha"], beta=v["launcher.beta"], gamma=v["launcher.gamma"],
            speed_gain=v["launcher.speed_gain"], a_d=v["launcher.a_d"], a_m=v["launcher.a_m"],
        )

    def sim_settings(self) -> SimSettings:
        v = self.values
        if len(v["sim.box"]) != 3:
            raise DataError("sim.box needs three values")
        return SimSettings(
            steps=v["sim.steps"], meas_std=v["sim.meas_std"], dropout_prob=v["sim.dropout"],
            mode=v["sim.mode"], fine=v["sim.fine"], max_impacts=v["sim.max_impacts"],
            box=BoundingBox(*v["sim.box"]),
            impact_matrix=default_impact_matrix(v["sim.v_from_spin"], v["sim.spin_from_v"]),
        )

    def train_config(self) -> TrainConfig:
        v = self.values
        clip = v["train.clip_norm"]
        return TrainConfig(
            batch_size=v["train.batch_size"], learning_rate=v["train.learning_rate"],
            steps=v["train.steps"], seed=v["seed"], beta1=v["train.beta1"],
            beta2=v["train.beta2"], eps_adam=v["train.eps_adam"],
            clip_norm=clip if clip and clip > 0 else None, chunk_len=v["train.chunk_len"],
            use_launch_info=v["train.use_launch_info"],
            validate_every=v["train.validate_every"],
            validation_chunks=v["train.validation_chunks"], hidden=v["train.hidden"],
        )


def default_config() -> RunConfig:
    return RunConfig({k: default for k, (_, default) in SCHEMA.items()})


def parse_config(text: str, where: str = "<config>") -> RunConfig:
    values = default_config().values
    for k, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{where}:{k}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise DataError(f"{where}:{k}: unknown configuration key {key!r}")
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise DataError(f"{where}:{k}: bad value for {key}: {exc}") from exc
    return RunConfig(values)


def load_config(path) -> RunConfig:
    if path is None:
        return default_config()
    return parse_config(Path(path).read_text(), str(path))


def format_config(cfg: RunConfig) -> str:
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple):
            if v and isinstance(v[0], tuple):
                return ", ".join(f"{x!r}:{y!r}" for x, y in v)
            return ", ".join(repr(x) for x in v)
        if isinstance(v, float):
            return repr(v)
        return str(v)
    return "".join(f"{k} = {fmt(cfg.values[k])}\n" for k in SCHEMA)

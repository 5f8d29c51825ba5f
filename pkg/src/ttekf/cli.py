"""Command-line interface: ``ttekf <command> [options]``.

Commands::

    simulate   generate a synthetic dataset and manifest
    train      learn parameters on a manifest's training split
    eval       prediction-error reports over horizons
    filter     filter one trajectory file and write the beliefs
    predict    filter a prefix and predict open loop
    spin-eval  fit the wheel-spin model to the spin network

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
The thread count of the numerical libraries can be set with
``TTEKF_THREADS``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import ekf
from . import evaluate as ev
from . import io
from . import learn
from . import simulate as sm
from .config import load_config
from .data import Trajectory
from .errors import DataError, NumericalError, TooShort

log = logging.getLogger("ttekf")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _params_or_init(path, cfg):
    if path:
        return io.read_params(path)
    return learn.init_parameters(cfg["seed"], cfg["train.hidden"])


def cmd_simulate(args, cfg) -> int:
    consts = cfg.physics()
    lc = cfg.launcher()
    settings = cfg.sim_settings()
    if args.mode:
        settings.mode = args.mode
    count = cfg["sim.count"] if args.count is None else args.count
    seed = cfg["seed"] if args.seed is None else args.seed
    augment = cfg["sim.augment"] if args.augment is None else args.augment
    out = io.ensure_dir(args.out)

    trajs = sm.generate_dataset(count, lc, settings, consts, seed)
    split = cfg["sim.split"]
    if len(split) != 3:
        raise DataError("sim.split needs three sizes")
    parts = sm.split_dataset(trajs, split)
    if augment:
        parts["train"] = sm.augment_dataset(parts["train"], augment, seed)
    entries = {}
    for name, items in parts.items():
        entries[name] = []
        for i, t in enumerate(items):
            fname = f"{name}_{i:05d}.jsonl"
            io.write_trajectory(out / fname, t)
            entries[name].append({"file": fname, "launch": io.launch_to_dict(t.launch),
                                  "samples": len(t)})
    io.write_manifest(out / "manifest.json", entries)
    log.info("wrote %s", {k: len(v) for k, v in entries.items()})
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    consts = cfg.physics()
    tc = cfg.train_config()
    if args.steps is not None:
        tc.steps = args.steps
    if args.seed is not None:
        tc.seed = args.seed
    if args.no_launch_info:
        tc.use_launch_info = False
    manifest = args.manifest or cfg["paths.manifest"]
    if not manifest:
        raise UsageError("train needs --manifest")
    train = io.load_split(manifest, "train") if tc.steps > 0 else []
    validation = io.load_split(manifest, "validation") if args.validate and tc.steps > 0 else None
    params, losses = learn.train(train, tc, consts, validation=validation)
    io.write_params(args.out, params)
    loss_csv = args.loss_csv or str(Path(args.out).with_suffix(".loss.csv"))
    io.write_loss_csv(loss_csv, losses)
    if args.plot_data:
        io.write_gnuplot(args.plot_data, {"step": range(1, len(losses) + 1), "loss": losses})
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    consts = cfg.physics()
    manifest = args.manifest or cfg["paths.manifest"]
    if not manifest:
        raise UsageError("eval needs --manifest")
    params = _params_or_init(args.params or cfg["paths.params"], cfg)
    horizons = [float(h) for h in args.horizons.split(",")] if args.horizons else list(cfg["eval.horizons"])
    test = io.load_split(manifest, args.split)
    out = io.ensure_dir(args.out)
    reports = []
    rows = []
    for h in horizons:
        errors, skipped = [], 0
        for i, t in enumerate(test):
            try:
                e = ev.prediction_error(t, params, h, consts, use_launch_info=not args.no_launch_info,
                                        azimuth=cfg["eval.azimuth"])
            except TooShort:
                skipped += 1
                continue
            errors.append(e)
            rows.append((h, i, e))
        reports.append(ev.PredictionReport(h, np.array(errors), skipped))
    with open(out / "errors.csv", "w") as fh:
        fh.write("horizon,trajectory,error\n")
        for h, i, e in rows:
            fh.write(f"{h!r},{i},{e!r}\n")
    with open(out / "summary.json", "w") as fh:
        json.dump({"version": io.VERSION, "reports": [r.summary() for r in reports]}, fh, indent=1)
        fh.write("\n")
    if args.plot_data:
        io.write_gnuplot(out / "horizons.dat", {
            "horizon": [r.horizon for r in reports], "p10": [r.p10 for r in reports],
            "p50": [r.median for r in reports], "p90": [r.p90 for r in reports],
        })
    for r in reports:
        print(f"horizon {r.horizon:g} s: n={r.errors.size} skipped={r.skipped} "
              f"p10={r.p10:.4f} p50={r.median:.4f} p90={r.p90:.4f}")
    return EXIT_OK


def _load_traj(args):
    traj = io.read_trajectory(args.trajectory)
    if args.require_launch_info and traj.launch is None:
        raise DataError(f"{args.trajectory}: no launch information in header")
    if args.no_launch_info:
        traj = Trajectory(traj.measurements, None, traj.dt, traj.truth, traj.impacts)
    return traj


def _belief_record(n, b):
    return {"n": int(n), "mu": b.mu.tolist(), "sigma": b.sigma.tolist()}


def cmd_filter(args, cfg) -> int:
    consts = cfg.physics()
    params = _params_or_init(args.params or cfg["paths.params"], cfg)
    traj = _load_traj(args)
    beliefs, total = ekf.filter_trajectory(traj.measurements, traj.launch, params, consts,
                                           cfg["eval.azimuth"])
    first = int(traj.indices[np.flatnonzero(traj.available)[1]])
    with open(args.out, "w") as fh:
        fh.write(json.dumps({"version": io.VERSION, "kind": "beliefs", "loglik": total}) + "\n")
        for k, b in enumerate(beliefs):
            fh.write(json.dumps(_belief_record(first + k, b)) + "\n")
    return EXIT_OK


def cmd_predict(args, cfg) -> int:
    consts = cfg.physics()
    params = _params_or_init(args.params or cfg["paths.params"], cfg)
    traj = _load_traj(args)
    prefix = len(traj) if args.filter_samples is None else args.filter_samples
    if not 2 <= prefix <= len(traj):
        raise DataError(f"--filter-samples must lie in [2, {len(traj)}]")
    beliefs, _ = ekf.filter_trajectory(traj.measurements[:prefix], traj.launch, params, consts,
                                       cfg["eval.azimuth"])
    last = int(traj.measurements[prefix - 1].index)
    preds = ekf.predict_horizon(beliefs[-1], args.steps, params, consts)
    with open(args.out, "w") as fh:
        fh.write(json.dumps({"version": io.VERSION, "kind": "predictions", "from": last}) + "\n")
        for k, b in enumerate(preds, 1):
            fh.write(json.dumps(_belief_record(last + k, b)) + "\n")
    if args.plot_data:
        io.write_gnuplot(args.plot_data, {
            "n": [last + k for k in range(1, len(preds) + 1)],
            "x": [b.mu[0] for b in preds], "y": [b.mu[1] for b in preds],
            "z": [b.mu[2] for b in preds],
        })
    return EXIT_OK


def cmd_spin_eval(args, cfg) -> int:
    manifest = args.manifest or cfg["paths.manifest"]
    if not manifest:
        raise UsageError("spin-eval needs --manifest")
    params = _params_or_init(args.params or cfg["paths.params"], cfg)
    test = io.load_split(manifest, args.split)
    fit = ev.spin_correlation(test, params.psi_f, cfg.launcher())
    doc = {"version": io.VERSION, "alpha": fit.alpha, "beta": fit.beta, "gamma": fit.gamma,
           "pearson_r": fit.pearson_r.tolist(), "count": len(fit.network_spin)}
    text = json.dumps(doc, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    if args.plot_data:
        io.write_gnuplot(args.plot_data, {
            "net_x": fit.network_spin[:, 0], "net_y": fit.network_spin[:, 1],
            "net_z": fit.network_spin[:, 2], "model_x": fit.model_spin[:, 0],
            "model_y": fit.model_spin[:, 1], "model_z": fit.model_spin[:, 2],
        })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ttekf", description="Learned ball-flight filter toolkit.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="run configuration file")
        return sp

    s = common(sub.add_parser("simulate", help="generate a synthetic dataset"))
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--count", type=int)
    s.add_argument("--mode", choices=["default", "unseen"])
    s.add_argument("--augment", type=int, help="rotated copies per training trajectory")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    s = common(sub.add_parser("train", help="learn parameters"))
    s.add_argument("--manifest")
    s.add_argument("--out", required=True, help="parameter file to write")
    s.add_argument("--loss-csv")
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--no-launch-info", action="store_true")
    s.add_argument("--validate", action="store_true", help="keep the best-validation parameters")
    s.add_argument("--plot-data")
    s.set_defaults(func=cmd_train)

    s = common(sub.add_parser("eval", help="prediction-error reports"))
    s.add_argument("--manifest")
    s.add_argument("--params")
    s.add_argument("--horizons", help="comma-separated seconds")
    s.add_argument("--split", default="test", choices=io.SPLITS)
    s.add_argument("--out", required=True, help="report directory")
    s.add_argument("--no-launch-info", action="store_true")
    s.add_argument("--plot-data", action="store_true")
    s.set_defaults(func=cmd_eval)

    for name, func in (("filter", cmd_filter), ("predict", cmd_predict)):
        s = common(sub.add_parser(name, help=f"{name} one trajectory"))
        s.add_argument("--params")
        s.add_argument("--trajectory", required=True)
        s.add_argument("--out", required=True)
        s.add_argument("--no-launch-info", action="store_true")
        s.add_argument("--require-launch-info", action="store_true")
        if name == "predict":
            s.add_argument("--steps", type=int, required=True)
            s.add_argument("--filter-samples", type=int)
            s.add_argument("--plot-data")
        s.set_defaults(func=func)

    s = common(sub.add_parser("spin-eval", help="fit the wheel-spin model"))
    s.add_argument("--manifest")
    s.add_argument("--params")
    s.add_argument("--split", default="test", choices=io.SPLITS)
    s.add_argument("--out")
    s.add_argument("--plot-data")
    s.set_defaults(func=cmd_spin_eval)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"ttekf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"ttekf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"ttekf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, KeyError) as exc:
        print(f"ttekf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

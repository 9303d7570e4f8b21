"""Command-line entry point: ``qstlab <command> [flags]``.

Option resolution is defaults <- ``--config FILE`` (JSON) <- flags; the fully
resolved options are written to ``<out>/config.json`` and that file is a valid
``--config`` input.  Failures end with one stderr line
``ERROR <code> <kind>: <detail>`` and exit with ``<code>``.

Seeds: ``generate`` and ``train`` use ``--seed`` directly.  ``copysweep``
trains repetition ``k`` with the ``k``-th entry of ``--seeds`` and generates its
data from ``--seed + k * samples`` so repetitions never share a draw.
"""

import argparse
import csv
import json
import os
import shutil
import sys

import numpy as np

from . import datagen, estimators, gradcheck, train
from .errors import (ConfigError, DimensionMismatch, FormatError, GradientMismatch,
                     OutputExists, QSTError, ShapeMismatch, UsageError)
from .model import load_model
from .povm import MeasurementSet

DATA_DEFAULTS = {"qubits": 2, "kind": "pure", "measurement": "cube", "srm_detectors": 5,
                 "samples": 1000, "copies": "10000", "seed": 0}
TRAIN_DEFAULTS = {"data": None, "test_data": None, "test_size": None, "model": "qat",
                  "beta": 0.09, "epochs": 100, "batch": 256, "lr": None, "warmup": 20,
                  "lr_kind": "cosine", "optimizer": "adam", "weight_decay": 0.0, "seed": 0,
                  "eval_every": 5, "d_S": None, "d_L": None, "d_H": None, "d_rate": None,
                  "hidden": None, "depth": None}
DEFAULTS = {
    "generate": {**DATA_DEFAULTS, "jobs": 1},
    "train": dict(TRAIN_DEFAULTS),
    "eval": {"checkpoint": None, "data": None, "test_size": None, "freqs": None, "ops": None,
             "rhos": None},
    "lre": {"data": None, "test_size": None},
    "gradcheck": {"configs": 20, "seed": 0, "tol": gradcheck.DEFAULT_TOL},
    "sweep": {**TRAIN_DEFAULTS, "grid": None, "jobs": 1},
    "copysweep": {**TRAIN_DEFAULTS, **DATA_DEFAULTS, "copies_list": "100,1000,10000",
                  "seeds": "0,1,2", "methods": "qat,lre", "test_size": None, "data": None},
    "lossablation": dict(TRAIN_DEFAULTS),
}
META = {"command", "config", "out", "force"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_copies(value):
    value = str(value).strip().lower()
    if value in ("inf", "infinite", "none"):
        return None
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"copies must be an integer or 'inf', got {value!r}") from None
    return n


def _int_list(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def _add_data_flags(p):
    p.add_argument("--qubits", type=int)
    p.add_argument("--kind", choices=["pure", "mixed"])
    p.add_argument("--measurement", choices=["cube", "srm"])
    p.add_argument("--srm-detectors", dest="srm_detectors", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--copies", help="copies per detector, integer or 'inf'")
    p.add_argument("--seed", type=int)


def _add_train_flags(p, data=True):
    if data:
        p.add_argument("--data")
        p.add_argument("--test-data", dest="test_data")
    p.add_argument("--test-size", dest="test_size", type=int)
    p.add_argument("--model", choices=["qat", "qat-no-oe", "qat_no_oe", "fcn"])
    p.add_argument("--beta", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--warmup", type=int, help="warm-up epochs")
    p.add_argument("--lr-kind", dest="lr_kind", choices=["cosine", "step", "constant"])
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--eval-every", dest="eval_every", type=int)
    for name in ("d_S", "d_L", "d_H", "d_rate", "hidden", "depth"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=int)
    if "--seed" not in p._option_string_actions:
        p.add_argument("--seed", type=int)


def build_parser():
    parser = _Parser(prog="qstlab", description="Neural and linear quantum state tomography.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_text, out_required=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file of options (same schema as config.json)")
        p.add_argument("--out", required=out_required)
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        return p

    p = command("generate", "simulate a dataset")
    _add_data_flags(p)
    p.add_argument("--jobs", type=int)

    p = command("train", "train a reconstruction network")
    _add_train_flags(p)

    p = command("eval", "evaluate a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--test-size", dest="test_size", type=int,
                   help="evaluate only the last N samples (the held-out split)")
    p.add_argument("--freqs", help="CSV with header detector,outcome,frequency (optional sample column)")
    p.add_argument("--ops", help="operator file in ops.c128 layout")
    p.add_argument("--rhos", help="reference states in rhos.c128 layout (optional)")

    p = command("lre", "linear regression estimation baseline")
    p.add_argument("--data")
    p.add_argument("--test-size", dest="test_size", type=int)

    p = command("gradcheck", "finite-difference gradient suite", out_required=False)
    p.add_argument("--configs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)

    p = command("sweep", "grid of training runs (resumable)")
    _add_train_flags(p)
    p.add_argument("--grid", help="JSON: object of lists (cartesian) or list of objects")
    p.add_argument("--jobs", type=int)

    p = command("copysweep", "QAT vs LRE across copy budgets")
    _add_data_flags(p)
    _add_train_flags(p, data=False)
    p.add_argument("--copies-list", dest="copies_list")
    p.add_argument("--seeds")
    p.add_argument("--methods")

    p = command("lossablation", "MSE vs Bures vs integrated loss")
    _add_train_flags(p)
    return parser


def resolve(args):
    """Merge defaults, the optional config file and explicit flags."""
    cmd = args.command
    opts = dict(DEFAULTS[cmd])
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_opts = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        file_opts = {k: v for k, v in file_opts.items() if k not in META}
        unknown = set(file_opts) - set(opts)
        if unknown:
            raise ConfigError(f"unknown options in {args.config}: {sorted(unknown)}")
        opts.update(file_opts)
    for k, v in vars(args).items():
        if k not in META and v is not None:
            opts[k] = v
    if "model" in opts and opts["model"]:
        opts["model"] = opts["model"].replace("-", "_")
    return opts


def _write_resolved(out, cmd, opts):
    os.makedirs(out, exist_ok=True)
    train.write_json(os.path.join(out, "config.json"), {"command": cmd, **opts})


def _guard(out, marker, force):
    if os.path.exists(os.path.join(out, marker)) and not force:
        raise OutputExists(f"{os.path.join(out, marker)} exists (use --force)")


def _train_config(opts):
    return train.TrainConfig(
        data=opts.get("data"), test_data=opts.get("test_data"), test_size=opts.get("test_size"),
        model=opts["model"], beta=opts["beta"], batch_size=opts["batch"], base_lr=opts["lr"],
        epochs=opts["epochs"], warmup_epochs=opts["warmup"], lr_kind=opts["lr_kind"],
        optimizer=opts["optimizer"], weight_decay=opts["weight_decay"], seed=opts["seed"],
        eval_every=opts["eval_every"],
        **{k: opts[k] for k in train.MODEL_DIMS})


def _data_config(opts):
    return datagen.DatasetConfig(
        n_qubits=opts["qubits"], state_kind=opts["kind"], measurement_kind=opts["measurement"],
        n_samples=opts["samples"], copies=_parse_copies(opts["copies"]), seed=opts["seed"],
        srm_detectors=opts["srm_detectors"])


def _tail(ds, test_size):
    if test_size is None:
        return ds
    return ds.split(test_size)[1]


def _print_metrics(metrics, stream=sys.stdout):
    for k in sorted(metrics):
        print(f"{k}: {metrics[k]}", file=stream)


def cmd_generate(opts, out, force):
    _guard(out, "manifest.json", force)
    ds = datagen.build_dataset(_data_config(opts), jobs=opts["jobs"])
    datagen.save_dataset(ds, out, force=force)
    _write_resolved(out, "generate", opts)
    print(f"wrote {ds.n_samples} samples ({ds.n_detectors} detectors, d={ds.dim}) to {out}")


def cmd_train(opts, out, force):
    cfg = _train_config(opts)
    report = train.train(cfg, out=out, force=force,
                         progress=lambda r: print(
                             f"epoch {r['epoch']:4d}  loss {r['train_loss']:.4e}  "
                             f"mse {r['train_mse']:.4e}  bures {r['train_bures']:.4e}  "
                             f"eval_infid {r['eval_infidelity']:.4e}", flush=True))
    _write_resolved(out, "train", opts)
    _print_metrics(report.final)


def read_frequency_csv(path):
    """Frequency tables ``(n, d_G, d)`` from CSV rows ``[sample,]detector,outcome,frequency``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    if not rows or not {"detector", "outcome", "frequency"} <= set(rows[0]):
        raise FormatError(f"{path}: header must contain detector,outcome,frequency")
    try:
        idx = np.array([[int(r.get("sample") or 0), int(r["detector"]), int(r["outcome"])]
                        for r in rows])
        val = np.array([float(r["frequency"]) for r in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if idx.min() < 0:
        raise FormatError(f"{path}: negative index")
    freqs = np.full(tuple(idx.max(axis=0) + 1), np.nan)
    freqs[idx[:, 0], idx[:, 1], idx[:, 2]] = val
    if np.isnan(freqs).any():
        raise ShapeMismatch(f"{path}: table of shape {freqs.shape} has missing entries")
    return freqs


def read_complex_file(path, tail_shape):
    try:
        raw = np.fromfile(path, dtype="<c16")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    size = int(np.prod(tail_shape))
    if raw.size == 0 or raw.size % size:
        raise ShapeMismatch(f"{path}: {raw.size} values is not a multiple of {tail_shape}")
    return raw.reshape((-1,) + tuple(tail_shape)).astype(np.complex128)


def _external_dataset(opts):
    if not opts["ops"]:
        raise ConfigError("--freqs needs --ops")
    freqs = read_frequency_csv(opts["freqs"])
    _, d_G, d = freqs.shape
    ops = read_complex_file(opts["ops"], (d, d, d))
    if ops.shape[0] != d_G:
        raise ShapeMismatch(f"{opts['ops']} holds {ops.shape[0]} detectors of dimension {d}; "
                            f"frequencies need {d_G}")
    ms = MeasurementSet.from_operators(ops)
    rhos = None
    if opts["rhos"]:
        rhos = read_complex_file(opts["rhos"], (d, d))
        if rhos.shape[0] != freqs.shape[0]:
            raise ShapeMismatch(f"{rhos.shape[0]} reference states for {freqs.shape[0]} samples")
    return freqs, ops, ms.n_qubits, rhos


def cmd_eval(opts, out, force):
    _guard(out, "metrics.json", force)
    if not opts["checkpoint"]:
        raise ConfigError("--checkpoint is required")
    model = load_model(opts["checkpoint"])
    if opts["data"]:
        ds = _tail(datagen.load_dataset(opts["data"]), opts["test_size"])
        freqs, ops, n_qubits, rhos = ds.freqs, ds.ops, ds.n_qubits, ds.rhos
    elif opts["freqs"]:
        freqs, ops, n_qubits, rhos = _external_dataset(opts)
    else:
        raise ConfigError("give --data or --freqs/--ops")
    if (model.cfg.n_qubits, model.cfg.d_G) != (n_qubits, ops.shape[0]):
        raise DimensionMismatch(f"checkpoint expects n_qubits={model.cfg.n_qubits}, "
                                f"d_G={model.cfg.d_G}; input has n_qubits={n_qubits}, d_G={ops.shape[0]}")
    view = datagen.Dataset(n_qubits, "", "", None, 0, freqs, None, rhos, ops)
    alpha_hat = train.predict(model, view)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "alphas_pred.f64"), "wb") as fh:
        fh.write(np.ascontiguousarray(alpha_hat, dtype="<f8").tobytes())
    metrics = {"n_samples": int(alpha_hat.shape[0])}
    if rhos is not None:
        metrics = train.evaluate_alphas(alpha_hat, rhos)
    train.write_json(os.path.join(out, "metrics.json"), metrics)
    _write_resolved(out, "eval", opts)
    _print_metrics(metrics)


def cmd_lre(opts, out, force):
    _guard(out, "metrics.json", force)
    if not opts["data"]:
        raise ConfigError("--data is required")
    ds = _tail(datagen.load_dataset(opts["data"]), opts["test_size"])
    est = estimators.lre_estimate(ds.freqs, ds.ops)
    metrics = train.evaluate_rhos(est, ds.rhos)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "rhos_lre.c128"), "wb") as fh:
        fh.write(np.ascontiguousarray(est, dtype="<c16").tobytes())
    train.write_json(os.path.join(out, "metrics.json"), metrics)
    _write_resolved(out, "lre", opts)
    _print_metrics(metrics)


def cmd_gradcheck(opts, out, force):
    results = gradcheck.run_suite(n_configs=opts["configs"], seed=opts["seed"], tol=opts["tol"])
    for r in results:
        status = "PASS" if r["passed"] else "FAIL"
        print(f"{status} {r['case']:<16} configs={r['n_configs']} worst_rel_err={r['worst_error']:.3e}")
    if out:
        _guard(out, "gradcheck.csv", force)
        os.makedirs(out, exist_ok=True)
        train.write_csv(os.path.join(out, "gradcheck.csv"),
                        ("case", "n_configs", "worst_error", "passed"), results)
        _write_resolved(out, "gradcheck", opts)
    failed = [r["case"] for r in results if not r["passed"]]
    if failed:
        raise GradientMismatch(f"gradient check failed for: {', '.join(failed)}")


def cmd_sweep(opts, out, force):
    grid = opts["grid"]
    if grid is None:
        raise ConfigError("--grid is required")
    if isinstance(grid, str):
        if os.path.exists(grid):
            with open(grid, encoding="utf-8") as fh:
                grid = json.load(fh)
        else:
            try:
                grid = json.loads(grid)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"--grid is neither a file nor valid JSON: {exc}") from None
    if force and os.path.exists(os.path.join(out, "cells")):
        shutil.rmtree(os.path.join(out, "cells"))
    rows, ran = train.sweep(_train_config(opts), grid, out, jobs=opts["jobs"])
    _write_resolved(out, "sweep", opts)
    print(f"{len(rows)} cells ({ran} trained, {len(rows) - ran} reused); wrote {out}/sweep.csv")


def cmd_copysweep(opts, out, force):
    _guard(out, "copysweep.csv", force)
    copies = [_parse_copies(c) for c in str(opts["copies_list"]).split(",")]
    seeds = _int_list(opts["seeds"])
    methods = [m.strip().replace("-", "_") for m in opts["methods"].split(",")]
    rows, runs = train.copy_sweep(_data_config(opts), _train_config(opts), copies, seeds,
                                  opts["test_size"], methods,
                                  progress=lambda r: print(r, flush=True))
    os.makedirs(out, exist_ok=True)
    train.write_csv(os.path.join(out, "copysweep.csv"), tuple(rows[0]), rows)
    train.write_csv(os.path.join(out, "copysweep_runs.csv"), tuple(runs[0]), runs)
    _write_resolved(out, "copysweep", opts)


def cmd_lossablation(opts, out, force):
    _guard(out, "ablation.csv", force)
    cfg = _train_config(opts)
    tr, te = train._load_split(cfg)
    rows, _ = train.loss_ablation(cfg, tr, te, out=out, force=force)
    _write_resolved(out, "lossablation", opts)
    for r in rows:
        print(f"{r['loss']:<11} beta={r['beta']:<5} mean_infidelity={r['mean_infidelity']:.4e}")


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "lre": cmd_lre,
            "gradcheck": cmd_gradcheck, "sweep": cmd_sweep, "copysweep": cmd_copysweep,
            "lossablation": cmd_lossablation}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        opts = resolve(args)
        COMMANDS[args.command](opts, args.out, args.force)
    except QSTError as exc:
        print(f"ERROR {exc.exit_code} {exc.kind}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"ERROR 30 IOError: {exc}", file=sys.stderr)
        return 30
    except KeyboardInterrupt:
        print("ERROR 130 Interrupted: stopped by user", file=sys.stderr)
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())

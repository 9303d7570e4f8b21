"""Training loop, evaluation and the experiment drivers built on top of them.

Output directory of a training run::

    train_config.json    fully resolved TrainConfig
    report.csv           one row per epoch (columns: REPORT_COLUMNS)
    summary.json         final test metrics, best epoch, parameter count
    timing.csv           epoch, seconds (wall-clock kept apart so the other
                         files are byte-reproducible)
    checkpoint_best/     parameters at the best evaluated infidelity
    checkpoint_last/     parameters and Adam state after the final epoch

Epochs with no evaluation carry ``nan`` in the eval columns.
"""

import csv
import hashlib
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import autodiff as ad
from . import datagen, estimators, loss, qcore
from .errors import ConfigError, DimensionMismatch, NonFiniteLoss, OutputExists
from .model import build_model, load_model, save_model
from .povm import make_rng

SHUFFLE_STREAM = 0x5348
EVAL_BATCH = 1024
DEFAULT_LR = {"qat": 0.005, "qat_no_oe": 0.005, "fcn": 1e-4}
REPORT_COLUMNS = ("epoch", "train_mse", "train_bures", "train_loss",
                  "eval_infidelity", "eval_log_infidelity", "lr")
MODEL_DIMS = ("d_S", "d_L", "d_H", "d_rate", "hidden", "depth")


@dataclass
class TrainConfig:
    data: str | None = None
    test_data: str | None = None
    test_size: int | None = None
    model: str = "qat"
    beta: float = loss.DEFAULT_BETA
    batch_size: int = 256
    base_lr: float | None = None
    epochs: int = 100
    warmup_epochs: int = 20
    lr_kind: str = "cosine"
    optimizer: str = "adam"
    weight_decay: float = 0.0
    seed: int = 0
    eval_every: int = 5
    d_S: int | None = None
    d_L: int | None = None
    d_H: int | None = None
    d_rate: int | None = None
    hidden: int | None = None
    depth: int | None = None

    def __post_init__(self):
        self.model = self.model.replace("-", "_")

    @property
    def lr(self):
        return DEFAULT_LR[self.model] if self.base_lr is None else self.base_lr

    def validate(self):
        if self.model not in DEFAULT_LR:
            raise ConfigError(f"model must be one of {sorted(DEFAULT_LR)}, got {self.model!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ConfigError("warmup_epochs must lie in [0, epochs]")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be adam|sgd, got {self.optimizer!r}")
        if self.lr_kind not in ("cosine", "step", "constant"):
            raise ConfigError(f"lr_kind must be cosine|step|constant, got {self.lr_kind!r}")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")
        loss.LossConfig(self.beta)

    def model_dims(self):
        return {k: getattr(self, k) for k in MODEL_DIMS if getattr(self, k) is not None}

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    best_epoch: int | None = None
    best_infidelity: float = math.inf
    seconds: list = field(default_factory=list)
    model: object = None

    def column(self, name):
        return np.array([r[name] for r in self.records])


def _summary_stats(f, n_zero):
    f = np.asarray(f, dtype=np.float64)
    return {
        "n_samples": int(f.size),
        "n_zero_trace": int(n_zero),
        "mean_fidelity": float(np.mean(f)),
        "min_fidelity": float(np.min(f)),
        "max_fidelity": float(np.max(f)),
        "var_fidelity": float(np.var(f)),
        "mean_infidelity": float(np.mean(1.0 - f)),
        "mean_log_infidelity": float(np.mean(qcore.log10_infidelity_from_fidelity(f))),
    }


def evaluate_rhos(rho_hat, rhos):
    """Fidelity statistics of estimates against reference states."""
    return _summary_stats(qcore.fidelity(rho_hat, rhos), 0)


def evaluate_alphas(alpha_hat, rhos):
    """Fidelity statistics of predicted alpha vectors against reference states.

    An all-zero prediction has no density matrix; it is scored as fidelity 0
    and counted in ``n_zero_trace`` instead of aborting the evaluation.
    """
    alpha_hat = np.asarray(alpha_hat, dtype=np.float64)
    rhos = np.asarray(rhos)
    zero = np.max(np.abs(alpha_hat), axis=-1) == 0.0
    f = np.zeros(alpha_hat.shape[0])
    if np.any(~zero):
        f[~zero] = np.atleast_1d(qcore.fidelity(qcore.alpha_to_rho(alpha_hat[~zero]), rhos[~zero]))
    return _summary_stats(f, int(zero.sum()))


def predict(model, dataset, batch=EVAL_BATCH):
    """Alpha predictions for every sample, computed without recording a graph."""
    out = []
    with ad.no_grad():
        for a in range(0, dataset.n_samples, batch):
            out.append(model(dataset.freqs[a:a + batch], dataset.ops).data)
    return np.concatenate(out)


def evaluate(model, dataset, batch=EVAL_BATCH):
    """Metrics of ``model`` (or a checkpoint path) on ``dataset``."""
    if isinstance(model, (str, os.PathLike)):
        model = load_model(model)
    _check_model_data(model, dataset)
    return evaluate_alphas(predict(model, dataset, batch), dataset.rhos)


def lre_evaluate(dataset):
    return evaluate_rhos(estimators.lre_estimate(dataset.freqs, dataset.ops), dataset.rhos)


def _check_model_data(model, dataset):
    cfg = model.cfg
    if (cfg.n_qubits, cfg.d_G) != (dataset.n_qubits, dataset.n_detectors):
        raise DimensionMismatch(
            f"model expects n_qubits={cfg.n_qubits}, d_G={cfg.d_G}; dataset has "
            f"n_qubits={dataset.n_qubits}, d_G={dataset.n_detectors}")


def _load_split(cfg):
    if cfg.data is None:
        raise ConfigError("no training data given")
    ds = datagen.load_dataset(cfg.data)
    if cfg.test_data is not None:
        return ds, datagen.load_dataset(cfg.test_data)
    test_size = cfg.test_size if cfg.test_size is not None else max(1, ds.n_samples // 10)
    if test_size == 0:
        return ds, None
    return ds.split(test_size)


def _check_pair(train_set, test_set):
    if test_set is None:
        return
    if (train_set.n_qubits, train_set.n_detectors) != (test_set.n_qubits, test_set.n_detectors):
        raise DimensionMismatch("train and test datasets differ in qubits or detector count")
    if not np.array_equal(train_set.ops, test_set.ops):
        raise DimensionMismatch("train and test datasets use different measurement operators")


def _prepare_out(out, force):
    if out is None:
        return
    if os.path.exists(os.path.join(out, "summary.json")) and not force:
        raise OutputExists(f"{out} already holds a training run (use force)")
    os.makedirs(out, exist_ok=True)


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def train(cfg, train_set=None, test_set=None, out=None, force=False, progress=None):
    """Fit a model per ``cfg`` and return a :class:`TrainReport`.

    Datasets are read from ``cfg.data`` / ``cfg.test_data`` unless passed in.
    All randomness (initialisation, shuffling) derives from ``cfg.seed``.
    ``progress``, if given, is called with each epoch record.
    """
    cfg.validate()
    if train_set is None:
        train_set, loaded_test = _load_split(cfg)
        test_set = loaded_test if test_set is None else test_set
    _check_pair(train_set, test_set)
    _prepare_out(out, force)
    if out is not None:
        write_json(os.path.join(out, "train_config.json"), cfg.to_dict())

    model = build_model(cfg.model, train_set.n_qubits, train_set.n_detectors, cfg.seed,
                        **cfg.model_dims())
    loss_cfg = loss.LossConfig(cfg.beta)
    params = model.params
    state = (ad.AdamState(weight_decay=cfg.weight_decay) if cfg.optimizer == "adam"
             else ad.SGDState(weight_decay=cfg.weight_decay))
    step_fn = ad.adam_step if cfg.optimizer == "adam" else ad.sgd_step

    n = train_set.n_samples
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    warmup_steps = cfg.warmup_epochs * steps_per_epoch
    rng = make_rng(cfg.seed, SHUFFLE_STREAM)
    ops = train_set.ops
    report = TrainReport()
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        sums = np.zeros(3)
        lr = 0.0
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            lr = ad.lr_schedule(step, total_steps, cfg.lr, warmup_steps, cfg.lr_kind)
            pred = model(train_set.freqs[idx], ops)
            total, ups, mu = loss.integrated_loss(pred, train_set.alphas[idx], loss_cfg, parts=True)
            values = np.array([mu.item(), ups.item(), total.item()])
            if not np.all(np.isfinite(values)):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}, batch {b}",
                                    batch_index=b, epoch=epoch)
            sums += values * len(idx)
            total.backward()
            grads = {k: p.grad for k, p in params.items() if p.grad is not None}
            for p in params.values():
                p.zero_grad()
            step_fn(params, grads, state, lr)
            step += 1
        mse, bures, total_loss = sums / n
        rec = {"epoch": epoch, "train_mse": mse, "train_bures": bures, "train_loss": total_loss,
               "eval_infidelity": math.nan, "eval_log_infidelity": math.nan, "lr": lr}
        if test_set is not None and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            metrics = evaluate(model, test_set)
            rec["eval_infidelity"] = metrics["mean_infidelity"]
            rec["eval_log_infidelity"] = metrics["mean_log_infidelity"]
            if metrics["mean_infidelity"] < report.best_infidelity:
                report.best_infidelity = metrics["mean_infidelity"]
                report.best_epoch = epoch
                if out is not None:
                    save_model(model, os.path.join(out, "checkpoint_best"), extra={"epoch": epoch})
        report.records.append(rec)
        report.seconds.append(time.perf_counter() - t0)
        if progress is not None:
            progress(rec)

    report.model = model
    report.final = evaluate(model, test_set) if test_set is not None else {}
    if out is not None:
        adam = state if cfg.optimizer == "adam" else None
        save_model(model, os.path.join(out, "checkpoint_last"), adam, extra={"epoch": cfg.epochs})
        write_csv(os.path.join(out, "report.csv"), REPORT_COLUMNS, report.records)
        write_csv(os.path.join(out, "timing.csv"), ("epoch", "seconds"),
                  [{"epoch": i + 1, "seconds": s} for i, s in enumerate(report.seconds)])
        write_json(os.path.join(out, "summary.json"), summary_dict(report))
    return report


def summary_dict(report):
    last = report.records[-1]
    return {
        "epochs": len(report.records),
        "parameter_count": int(report.model.parameter_count()),
        "best_epoch": report.best_epoch,
        "best_infidelity": None if report.best_epoch is None else report.best_infidelity,
        "final_train_mse": last["train_mse"],
        "final_train_bures": last["train_bures"],
        "final_train_loss": last["train_loss"],
        "test": report.final,
    }


def _data_seed(base, k, n_samples):
    # seeds are per-sample offsets, so stride by the dataset size to keep draws disjoint
    return base + k * n_samples


def copy_sweep(data_cfg, train_cfg, copies_list, seeds=(0,), test_size=None,
               methods=("qat", "lre"), progress=None):
    """Log-infidelity per (copy budget, method), averaged over ``seeds``.

    For every seed and budget a fresh dataset is generated (same states across
    budgets, resampled frequencies) and the network is retrained from scratch.
    Returns ``(rows, runs)``: one aggregate row per budget and method, and the
    per-seed results.
    """
    if test_size is None:
        test_size = max(1, data_cfg.n_samples // 10)
    runs = []
    for k, seed in enumerate(seeds):
        for copies in copies_list:
            dc = replace(data_cfg, copies=copies, seed=_data_seed(data_cfg.seed, k, data_cfg.n_samples))
            tr, te = datagen.build_dataset(dc).split(test_size)
            for method in methods:
                if method == "lre":
                    metrics = lre_evaluate(te)
                else:
                    tc = replace(train_cfg, model=method, seed=seed, data=None, test_data=None)
                    metrics = train(tc, tr, te).final
                run = {"copies": copies, "method": method, "seed": seed,
                       "mean_infidelity": metrics["mean_infidelity"],
                       "mean_log_infidelity": metrics["mean_log_infidelity"]}
                runs.append(run)
                if progress is not None:
                    progress(run)
    rows = []
    for copies in copies_list:
        for method in methods:
            sel = [r for r in runs if r["copies"] == copies and r["method"] == method]
            rows.append({"copies": "inf" if copies is None else copies, "method": method,
                         "n_seeds": len(sel),
                         "mean_infidelity": float(np.mean([r["mean_infidelity"] for r in sel])),
                         "mean_log_infidelity": float(np.mean([r["mean_log_infidelity"] for r in sel]))})
    return rows, runs


ABLATION_BETAS = ((0.0, "mse"), (1.0, "bures"), (loss.DEFAULT_BETA, "integrated"))


def loss_ablation(train_cfg, train_set, test_set, betas=ABLATION_BETAS, out=None, force=False):
    """Train one model per loss weighting on identical data and seed.

    ``betas`` holds ``(beta, label)`` pairs; β multiplies the Bures term, so
    β=0 trains on MSE alone and β=1 on the approximated Bures distance alone.
    Returns ``(rows, reports)`` with reports keyed by label.
    """
    rows, reports = [], {}
    for beta, label in betas:
        tc = replace(train_cfg, beta=beta)
        run_out = None if out is None else os.path.join(out, label)
        rep = train(tc, train_set, test_set, out=run_out, force=force)
        reports[label] = rep
        rows.append({"loss": label, "beta": beta,
                     "mean_infidelity": rep.final["mean_infidelity"],
                     "mean_log_infidelity": rep.final["mean_log_infidelity"],
                     "final_train_mse": rep.records[-1]["train_mse"],
                     "final_train_bures": rep.records[-1]["train_bures"]})
    if out is not None:
        write_csv(os.path.join(out, "ablation.csv"), tuple(rows[0]), rows)
    return rows, reports


SWEEP_ALIASES = {"lr": "base_lr", "batch": "batch_size"}
SWEEP_COLUMNS = ("cell", "mean_infidelity", "mean_log_infidelity", "min_fidelity",
                 "max_fidelity", "var_fidelity", "parameter_count", "best_epoch")


def expand_grid(grid):
    """Cells of a sweep: a dict of lists gives the cartesian product, a list of dicts is explicit."""
    if isinstance(grid, dict):
        keys = list(grid)
        cells = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    else:
        cells = [dict(c) for c in grid]
    return [{SWEEP_ALIASES.get(k, k): v for k, v in c.items()} for c in cells]


def cell_hash(cfg):
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _run_cell(args):
    cfg, cell_dir, train_set, test_set = args
    rep = train(cfg, train_set, test_set, out=cell_dir, force=True)
    return summary_dict(rep)


def sweep(base_cfg, grid, out, train_set=None, test_set=None, jobs=1):
    """Train every grid cell (resumable) and write ``sweep.csv`` under ``out``.

    Each cell lives in ``out/cells/<hash>`` where the hash covers the fully
    resolved config; cells whose ``summary.json`` exists are not retrained.
    """
    cells = expand_grid(grid)
    cfgs = []
    for c in cells:
        unknown = set(c) - {f.name for f in fields(TrainConfig)}
        if unknown:
            raise ConfigError(f"unknown sweep keys: {sorted(unknown)}")
        cfg = replace(base_cfg, **c)
        cfg.validate()
        cfgs.append(cfg)
    if train_set is None:
        train_set, test_set = _load_split(base_cfg)
    os.makedirs(os.path.join(out, "cells"), exist_ok=True)
    todo = []
    for cfg in cfgs:
        cell_dir = os.path.join(out, "cells", cell_hash(cfg))
        if not os.path.exists(os.path.join(cell_dir, "summary.json")):
            todo.append((cfg, cell_dir, train_set, test_set))
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_run_cell, todo))
    else:
        for task in todo:
            _run_cell(task)
    rows = []
    for cell, cfg in zip(cells, cfgs):
        h = cell_hash(cfg)
        with open(os.path.join(out, "cells", h, "summary.json"), encoding="utf-8") as fh:
            s = json.load(fh)
        row = {"cell": h, **{k: cell[k] for k in cell}}
        row.update({k: s["test"].get(k) for k in SWEEP_COLUMNS[1:6]})
        row["parameter_count"] = s["parameter_count"]
        row["best_epoch"] = s["best_epoch"]
        rows.append(row)
    keys = sorted({k for c in cells for k in c})
    write_csv(os.path.join(out, "sweep.csv"), ("cell",) + tuple(keys) + SWEEP_COLUMNS[1:],
              [{**{k: "" for k in keys}, **r} for r in rows])
    return rows, len(todo)

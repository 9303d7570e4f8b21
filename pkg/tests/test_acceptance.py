"""The nine acceptance criteria, each at its stated tolerance.

Every test records a PASS/FAIL line (shown in the terminal summary).  The
training criteria are slow: the desk run takes roughly a quarter of an hour
on one CPU core and the reduced-scale copy sweep and ablation a few minutes.
"""

import os
import time

import numpy as np
import pytest

from qstlab import datagen, gradcheck, model, qcore, train
from qstlab.cli import main
from qstlab.estimators import lre_estimate
from qstlab.povm import born_probabilities, cube_measurement, make_rng, sample_frequencies

from test_model import naive_attention, random_attention_draw

DESK_THRESHOLD = 2e-3  # pilot reached 1.08e-3; the stated target is 1e-2

# reduced scale for the trend and ablation criteria: 1800 train / 200 test, one layer
REDUCED = dict(d_L=1, d_S=32, d_H=16, d_rate=8, epochs=30, warmup_epochs=6, eval_every=30,
               batch_size=32)


def adversarial_alphas(rng, d, n):
    m = d * d
    kinds = [
        lambda: rng.standard_normal(m),
        lambda: rng.standard_normal(m) * 1e150,
        lambda: rng.standard_normal(m) * 1e-150,
        lambda: rng.standard_normal(m) * 10.0 ** rng.integers(-8, 9, size=m),
        lambda: np.eye(1, m, int(rng.integers(m)))[0] * rng.choice([-1, 1]),
        lambda: np.concatenate([np.zeros(d), rng.standard_normal(m - d)]),
        lambda: np.concatenate([rng.standard_normal(1), np.zeros(m - 1)]),
        lambda: rng.integers(-3, 4, size=m).astype(float) + (rng.random(m) < 0.05),
        lambda: rng.standard_cauchy(m),
    ]
    out = np.array([kinds[i % len(kinds)]() for i in range(n)])
    out[np.max(np.abs(out), axis=1) == 0, 0] = 1.0
    return out


@pytest.mark.slow
def test_criterion_1_gradient_suite(criterion):
    t0 = time.perf_counter()
    results = gradcheck.run_suite(n_configs=20, seed=0, tol=1e-4, h=1e-5)
    seconds = time.perf_counter() - t0
    worst = max(results, key=lambda r: r["worst_error"])
    failed = [r["case"] for r in results if not r["passed"]]
    ok = not failed and seconds < 60 and all(r["n_configs"] >= 20 for r in results)
    criterion(1, ok, f"{len(results)} cases x 20 configs, worst rel err {worst['worst_error']:.2e} "
                     f"({worst['case']}), failed={failed}, {seconds:.1f}s")
    assert ok


def test_criterion_2_physicality(criterion):
    t0 = time.perf_counter()
    rng = make_rng(2)
    bad = 0
    for d in (2, 4, 8, 16):
        rhos = qcore.alpha_to_rho(adversarial_alphas(rng, d, 2500))
        bad += sum(bool(qcore.check_density_matrix(r)) for r in rhos)
    worst_rt = 0.0
    for d in (4, 8, 16):
        pure = np.array([datagen.haar_pure_state(d, rng) for _ in range(500)])
        mixed = np.array([datagen.ginibre_mixed_state(d, rng) for _ in range(500)])
        rhos = np.concatenate([pure, mixed])
        f = qcore.fidelity(qcore.alpha_to_rho(qcore.rho_to_alpha(rhos)), rhos)
        worst_rt = max(worst_rt, float(np.max(1 - f)))
    seconds = time.perf_counter() - t0
    ok = bad == 0 and worst_rt <= 1e-7 and seconds < 60
    criterion(2, ok, f"10000 adversarial alphas, {bad} invalid; round-trip worst infidelity "
                     f"{worst_rt:.1e} over 3000 states; {seconds:.1f}s")
    assert ok


def test_criterion_3_measurements(criterion):
    rng = make_rng(3)
    problems = []
    for n in range(1, 5):
        ms = cube_measurement(n)
        problems += [p for det in ms.detectors for p in det.check(tol=1e-9)]
    srm = datagen.random_srm_measurement(2, 200, rng)
    problems += [p for det in srm.detectors for p in det.check(tol=1e-9)]
    row_err = 0.0
    exceed = {}
    for ms in (cube_measurement(2), srm):
        rhos = np.array([datagen.ginibre_mixed_state(4, rng) for _ in range(200)])
        probs = born_probabilities(rhos, ms)
        row_err = max(row_err, float(np.max(np.abs(probs.sum(-1) - 1))))
        for copies in (10 ** 3, 10 ** 6):
            f = sample_frequencies(probs, copies, rng)
            sigma = np.sqrt(probs * (1 - probs) / copies)
            rate = float(np.mean(np.abs(f - probs) > 3 * sigma + 1e-15))
            exceed[copies] = max(exceed.get(copies, 0.0), rate)
    ok = not problems and row_err <= 1e-12 and all(r < 0.01 for r in exceed.values())
    criterion(3, ok, f"{81 + 27 + 9 + 3 + 200} detectors, {len(problems)} violations; Born row "
                     f"error {row_err:.1e}; 3-sigma exceedance {exceed}")
    assert ok


def test_criterion_4_lre_oracle(criterion):
    t0 = time.perf_counter()
    rng = make_rng(4)
    ms = cube_measurement(2)
    rhos = np.array([datagen.haar_pure_state(4, rng) for _ in range(500)]
                    + [datagen.ginibre_mixed_state(4, rng) for _ in range(500)])
    est = lre_estimate(born_probabilities(rhos, ms), ms)
    worst = float(np.max(1 - qcore.fidelity(est, rhos)))
    seconds = time.perf_counter() - t0
    ok = worst <= 1e-8 and seconds < 120
    criterion(4, ok, f"1000 states (500 pure, 500 mixed), worst infidelity {worst:.1e}, {seconds:.1f}s")
    assert ok


def test_criterion_5_attention_oracle(criterion):
    rng = make_rng(5)
    worst = 0.0
    for _ in range(50):
        x, q, ws, heads = random_attention_draw(rng)
        fast = model.attention_block(x, q, *ws, heads).data
        worst = max(worst, float(np.max(np.abs(fast - naive_attention(x, q, *ws, heads)))))
    ok = worst <= 1e-10
    criterion(5, ok, f"50 draws, max abs deviation {worst:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_6_desk_training(criterion):
    t0 = time.perf_counter()
    ds = datagen.build_dataset(datagen.DatasetConfig(n_samples=11000, copies=10000, seed=0))
    tr, te = ds.split(1000)
    cfg = train.TrainConfig(d_L=2, d_S=32, d_H=16, d_rate=8, epochs=100, beta=0.09, seed=0)
    rep = train.train(cfg, tr, te)
    minutes = (time.perf_counter() - t0) / 60
    inf = rep.final["mean_infidelity"]
    lre = train.lre_evaluate(te)["mean_infidelity"]
    ok = inf <= DESK_THRESHOLD and minutes < 30
    criterion(6, ok, f"mean test infidelity {inf:.3e} (threshold {DESK_THRESHOLD:.0e}; "
                     f"LRE {lre:.3e}), {minutes:.1f} min")
    assert ok


@pytest.mark.slow
def test_criterion_7_copy_trend(criterion):
    dc = datagen.DatasetConfig(n_samples=2000, seed=100)
    rows, _ = train.copy_sweep(dc, train.TrainConfig(**REDUCED), [100, 1000, 10000],
                               seeds=(0, 1, 2), test_size=200)
    curve = {m: [r["mean_log_infidelity"] for r in rows if r["method"] == m] for m in ("qat", "lre")}
    monotone = all(np.all(np.diff(c) < 0) for c in curve.values())
    ok = monotone and curve["qat"][0] <= curve["lre"][0]
    fmt = {m: [round(v, 3) for v in c] for m, c in curve.items()}
    criterion(7, ok, f"mean log10 infidelity at N_t=100/1000/10000 over 3 seeds: {fmt}")
    assert ok


@pytest.mark.slow
def test_criterion_8_loss_ablation(criterion):
    tr, te = datagen.build_dataset(datagen.DatasetConfig(n_samples=2000, seed=200)).split(200)
    rows, reps = train.loss_ablation(train.TrainConfig(**REDUCED), tr, te)
    worst_identity = max(
        abs(r["train_loss"] - (rep_beta * r["train_bures"] + (1 - rep_beta) * r["train_mse"]))
        for label, rep_beta in (("mse", 0.0), ("bures", 1.0), ("integrated", 0.09))
        for r in reps[label].records)
    mse_of_bures = reps["bures"].column("train_mse")
    mse_of_mse = reps["mse"].column("train_mse")
    signature = bool(np.all(mse_of_bures > mse_of_mse))
    final = {r["loss"]: r["mean_infidelity"] for r in rows}
    ok = (worst_identity <= 1e-10 and signature
          and final["integrated"] <= max(final["mse"], final["bures"]))
    criterion(8, ok, f"logged-loss identity error {worst_identity:.1e}; Bures-run MSE above "
                     f"MSE-run MSE at all epochs: {signature} (final {mse_of_bures[-1]:.3g} vs "
                     f"{mse_of_mse[-1]:.3g}); final infidelity "
                     + ", ".join(f"{k} {v:.3e}" for k, v in final.items()))
    assert ok


def _tree_bytes(root):
    out = {}
    for base, _, files in os.walk(root):
        for name in files:
            if name == "timing.csv":
                continue  # wall-clock, deliberately kept out of the reports
            path = os.path.join(base, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


def test_criterion_9_determinism(criterion, tmp_path, monkeypatch):
    tiny = ["--d-S", "8", "--d-L", "1", "--d-H", "2", "--d-rate", "2", "--batch", "16",
            "--epochs", "3", "--warmup", "1", "--eval-every", "1", "--seed", "5"]
    cmds = [
        ["generate", "--samples", "50", "--copies", "500", "--seed", "11", "--out", "data"],
        ["generate", "--measurement", "srm", "--srm-detectors", "6", "--kind", "mixed",
         "--samples", "20", "--seed", "12", "--out", "srm"],
        ["train", "--data", "data", "--test-size", "10", *tiny, "--out", "train"],
        ["eval", "--checkpoint", "train/checkpoint_best", "--data", "data", "--out", "eval"],
        ["lre", "--data", "data", "--out", "lre"],
        ["lossablation", "--data", "data", "--test-size", "10", *tiny, "--out", "abl"],
        ["sweep", "--data", "data", "--test-size", "10", *tiny, "--grid", '{"lr": [0.001, 0.01]}',
         "--out", "sweep"],
    ]
    # relative paths, so resolved configs and sweep cell hashes can match too
    for rep in ("a", "b"):
        (tmp_path / rep).mkdir()
        monkeypatch.chdir(tmp_path / rep)
        codes = [main(c) for c in cmds]
        assert codes == [0] * len(cmds)
    a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
    differing = sorted(k for k in a if a[k] != b.get(k))
    ok = set(a) == set(b) and not differing
    criterion(9, ok, f"{len(a)} output files from 7 commands run twice; differing: {differing}")
    assert ok

"""What the Bures term does to training.

Trains the same model three times on identical data: MSE only (beta=0),
approximated Bures only (beta=1) and the 0.09 mix.  Every run logs all three
metrics, so the Bures-only run shows its alpha magnitudes drifting (large MSE)
while its fidelity stays good.  Writes CSVs under ``demo_out/loss_curves``.

    python3 demos/loss_curves.py
"""

import os

from qstlab import datagen, train

out = os.path.join("demo_out", "loss_curves")
train_set, test_set = datagen.build_dataset(
    datagen.DatasetConfig(n_samples=1200, copies=10000, seed=3)).split(200)
cfg = train.TrainConfig(d_L=1, d_S=32, d_H=16, d_rate=8, epochs=15, warmup_epochs=3,
                        batch_size=32, eval_every=5)
rows, reports = train.loss_ablation(cfg, train_set, test_set, out=out, force=True)

print(f"{'epoch':>5} " + " ".join(f"{label + ' mse':>16}" for label in reports))
for e in range(cfg.epochs):
    print(f"{e + 1:>5} " + " ".join(f"{rep.records[e]['train_mse']:>16.3e}" for rep in reports.values()))
print()
for r in rows:
    print(f"{r['loss']:<11} beta={r['beta']:<5} test infidelity {r['mean_infidelity']:.3e}")
print(f"\nper-run report.csv files and ablation.csv are in {out}/")

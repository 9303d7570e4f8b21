"""Two-qubit tomography in about ten seconds.

Generates noisy cube-measurement data for Haar-random pure states, trains a
small quantum-aware transformer, and compares it with linear regression
estimation on the held-out states.

    python3 demos/quickstart.py
"""

import numpy as np

from qstlab import datagen, qcore, train
from qstlab.estimators import lre_estimate

# 1500 states; each of the 9 detectors is measured with 1000 copies
data = datagen.build_dataset(datagen.DatasetConfig(n_qubits=2, n_samples=1500, copies=1000, seed=1))
train_set, test_set = data.split(300)
print(f"train {train_set.n_samples}, test {test_set.n_samples}, detectors {data.n_detectors}")
print("first frequency table (rows: zz, zy, ..., xx):")
print(np.round(test_set.freqs[0], 3))

cfg = train.TrainConfig(d_L=1, d_S=32, d_H=16, d_rate=8, epochs=15, warmup_epochs=3,
                        batch_size=32, eval_every=5)
report = train.train(cfg, train_set, test_set,
                     progress=lambda r: print(f"epoch {r['epoch']:3d}  loss {r['train_loss']:.3e}  "
                                              f"eval infidelity {r['eval_infidelity']:.3e}"))

qat = report.final
lre = train.lre_evaluate(test_set)
print(f"\nQAT  mean infidelity {qat['mean_infidelity']:.3e}  (log10 {qat['mean_log_infidelity']:.2f})")
print(f"LRE  mean infidelity {lre['mean_infidelity']:.3e}  (log10 {lre['mean_log_infidelity']:.2f})")

# a single reconstruction, end to end
alpha = train.predict(report.model, test_set.subset(slice(0, 1)))[0]
rho_hat = qcore.alpha_to_rho(alpha)
rho_lre = lre_estimate(test_set.freqs[0], test_set.ops)
print(f"\nsample 0: F(QAT) = {qcore.fidelity(rho_hat, test_set.rhos[0]):.5f}, "
      f"F(LRE) = {qcore.fidelity(rho_lre, test_set.rhos[0]):.5f}, "
      f"purity of QAT estimate {qcore.purity(rho_hat):.4f}")

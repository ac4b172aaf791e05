"""
Training the unfolded network
=============================

Trains the five-layer network on noiseless data, then repeats the
accuracy and run-time comparison against ISTA. The full desk-scale run
(10^5 samples, 50 epochs, 1000 test trials) takes a few minutes on one
core; pass a smaller budget on the command line for a quick look::

    python demos/02_train_and_compare.py 20000 10 200
"""

import logging
import sys
from dataclasses import replace

from ddunfold.experiments import ExperimentConfig, cmd_bench, cmd_train
from ddunfold.training import TrainConfig

logging.basicConfig(level=logging.INFO, format="%(message)s")

n_samples, epochs, trials = (int(a) for a in (sys.argv[1:] or ["100000", "50", "1000"]))
cfg = ExperimentConfig(trials=trials, output_dir="demo_results")
cfg = replace(cfg, train=TrainConfig(n_samples=n_samples, epochs=epochs))

# Epoch 0 is the untrained network; its validation error equals 5 ISTA steps
net, log = cmd_train(cfg, force=True)
print(f"validation: epoch 0 {log.rows[0]['val_mse_db']:.2f} dB, best {min(r['val_mse_db'] for r in log.rows):.2f} dB")

# Both estimators on the same seeded test instances, one thread, timers around estimation only
ista, udnn = cmd_bench(cfg, net=net, force=True)
print(f"{'method':6s} {'MSE dB':>8s} {'per-entry':>10s} {'iters':>8s} {'time s':>9s}")
for r in (ista, udnn):
    print(f"{r.method:6s} {r.mse_db:8.2f} {r.mse_db_per_entry:10.2f} {r.mean_iterations_or_layers:8.0f} {r.wall_time_s:9.3f}")
print(f"speed-up {ista.wall_time_s / udnn.wall_time_s:.0f}x")

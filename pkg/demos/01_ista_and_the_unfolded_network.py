"""
ISTA and its unfolded network
=============================

One noiseless channel with two paths is estimated by ISTA run to
convergence and by the five-layer network built from ISTA's own matrices.
Before any training the network is exactly five ISTA iterations.
"""

import numpy as np

from ddunfold.experiments import ExperimentConfig, build_model, evaluation_set
from ddunfold.ista import IstaConfig, ista_k_steps, ista_solve
from ddunfold.network import forward, init_from_ista

cfg = ExperimentConfig()
model = build_model(cfg)
print(f"A is {model.n} x {model.m}, L = {model.lipschitz:.6f}")

# One seeded test instance: two on-grid paths, gains uniform in the unit square
sample = evaluation_set(model, cfg, n=1)[0]
print("true support:", np.flatnonzero(sample.x.to_complex()))

# ISTA with the small noiseless weight factor, run until the iterate settles
res = ista_solve(sample.y, model, IstaConfig.for_model(model, 0.01))
x_ista = res.x_hat.to_complex()
print(f"ISTA stopped after {res.iterations} iterations")

# The network initialized with lambda = 1 reproduces 5 ISTA steps at that lambda
net = init_from_ista(model, k_layers=5, lam=1.0)
x_net = forward(net, sample.y).to_complex()
x_5 = ista_k_steps(sample.y, model, IstaConfig.for_model(model, 1.0), 5).to_complex()
print(f"max |network - 5 ISTA steps| = {np.max(np.abs(x_net - x_5)):.1e}")

x_true = sample.x.to_complex()
for name, est in (("ISTA", x_ista), ("network at init", x_net)):
    err = np.sum(np.abs(est - x_true) ** 2) / np.sum(np.abs(x_true) ** 2)
    print(f"{name:16s} normalized error {10 * np.log10(err):7.2f} dB")

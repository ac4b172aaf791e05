"""
Error against SNR
=================

Uses the network trained by ``02_train_and_compare.py`` (or the untrained
one, with a warning) and sweeps SNR from 0 to 30 dB. ISTA gets the
noise-scaled weight factor ``sigma_w * sqrt(2 ln N)`` for every instance.
The network was trained without noise, so it only pulls ahead once the
noise is small.
"""

from ddunfold.experiments import ExperimentConfig, cmd_snr_sweep

cfg = ExperimentConfig(trials=500, output_dir="demo_results")
records, report = cmd_snr_sweep(cfg, model_path="demo_results/model.udnn", force=True)

print(f"{'SNR dB':>7s} {'ISTA':>8s} {'network':>8s}")
for snr in cfg.snr_list_db:
    row = {r.method: r.mse_db for r in records if r.snr_db == snr}
    print(f"{snr:7.1f} {row['ista']:8.2f} {row['udnn']:8.2f}")
for method, info in report["methods"].items():
    print(f"{method}: monotone in SNR = {info['monotone']} (largest rise {info['max_rise_db']:.2f} dB)")

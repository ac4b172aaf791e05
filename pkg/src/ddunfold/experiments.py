"""End-to-end experiments: worked example, accuracy/speed table, SNR sweep.

Each ``cmd_*`` function does the work and writes its files under
``cfg.output_dir``; ``ddunfold.cli`` wraps them as subcommands.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from .complex_core import SplitComplexMatrix, SplitComplexVector, cmul_mat_vec, hermitian, largest_eigenvalue_gram
from .errors import IntegrityError
from .ista import IstaConfig, ista_k_steps, ista_solve, lasso_objective, select_lambda
from .network import (
    UdnnModel,
    forward,
    forward_arrays,
    forward_traced,
    init_from_ista,
    load_model,
    reference_forward_complex,
    replay_trace,
    save_model,
)
from .signal_model import (
    MeasurementModel,
    OfdmConfig,
    build_grid,
    build_measurement_model,
    matched_filter_closed_form,
    matched_filter_oracle,
)
from .training import (
    AdamState,
    Dataset,
    TrainConfig,
    TrainingLog,
    TrainState,
    evaluate_mse_db,
    finite_difference_check,
    generate_dataset,
    make_splits,
    train,
)

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "ResultRecord",
    "load_config",
    "build_model",
    "evaluation_set",
    "cmd_example",
    "cmd_train",
    "cmd_bench",
    "cmd_snr_sweep",
    "cmd_validate",
    "OutputDirectory",
]

DEFAULT_SNRS = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]


@dataclass(frozen=True)
class ExperimentConfig:
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    grid: tuple[int, int] = (6, 6)
    j_paths: int = 2
    trials: int = 1000
    snr_list_db: tuple | str = tuple(DEFAULT_SNRS)
    seed: int = 0
    ista: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "results"

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.snr_list_db != "noiseless":
            snrs = tuple(float(s) for s in self.snr_list_db)
            if not snrs:
                raise ValueError("snr_list_db must be nonempty or 'noiseless'")
            object.__setattr__(self, "snr_list_db", snrs)
        object.__setattr__(self, "grid", tuple(int(g) for g in self.grid))

    @property
    def ista_tol(self) -> float:
        return float(self.ista.get("tol", 1e-6))

    @property
    def ista_max_iter(self) -> int:
        return int(self.ista.get("max_iter", 100_000))

    @property
    def ista_lambda(self) -> float:
        return float(self.ista.get("lambda", select_lambda("noiseless")))

    def to_dict(self) -> dict:
        return {
            "ofdm": self.ofdm.to_dict(),
            "grid": list(self.grid),
            "j_paths": self.j_paths,
            "trials": self.trials,
            "snr_list_db": self.snr_list_db if self.snr_list_db == "noiseless" else list(self.snr_list_db),
            "seed": self.seed,
            "ista": dict(self.ista),
            "train": self.train.to_dict(),
            "output_dir": self.output_dir,
        }

    def fingerprint(self) -> str:
        doc = self.to_dict()
        doc.pop("output_dir")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc or {})
        kw = {}
        if "ofdm" in doc:
            kw["ofdm"] = OfdmConfig(**doc.pop("ofdm"))
        if "train" in doc:
            kw["train"] = TrainConfig(**doc.pop("train"))
        if "snr_list_db" in doc:
            s = doc.pop("snr_list_db")
            kw["snr_list_db"] = s if s == "noiseless" else tuple(s)
        unknown = set(doc) - {"grid", "j_paths", "trials", "seed", "ista", "output_dir"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw.update(doc)
        return cls(**kw)

    def with_overrides(self, seed=None, trials=None, output_dir=None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = seed
            changes["train"] = replace(self.train, seed=seed)
        if trials is not None:
            changes["trials"] = trials
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        return replace(self, **changes)


def load_config(path) -> ExperimentConfig:
    """Read a YAML experiment file; unspecified keys keep their defaults."""
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(yaml.safe_load(fh))


@dataclass(frozen=True)
class ResultRecord:
    method: str
    snr_db: float | None
    mse_db: float
    mean_iterations_or_layers: float
    wall_time_s: float
    trials: int
    config_fingerprint: str
    mse_db_per_entry: float = float("nan")


class OutputDirectory:
    """Output folder tagged with the fingerprint of the config that fills it.

    Re-use with the same fingerprint is allowed; a different one raises
    unless ``force``.
    """

    def __init__(self, cfg: ExperimentConfig, force: bool = False):
        self.path = Path(cfg.output_dir)
        self.fingerprint = cfg.fingerprint()
        self.path.mkdir(parents=True, exist_ok=True)
        manifest = self.path / "manifest.json"
        if manifest.exists() and not force:
            old = json.loads(manifest.read_text()).get("config_fingerprint")
            if old != self.fingerprint:
                raise IntegrityError(f"{self.path} holds results of config {old}; pass force to overwrite")
        manifest.write_text(json.dumps({"config_fingerprint": self.fingerprint, "config": cfg.to_dict()}, indent=2))

    def __truediv__(self, name) -> Path:
        return self.path / name


def build_model(cfg: ExperimentConfig) -> MeasurementModel:
    return build_measurement_model(cfg.ofdm, build_grid(*cfg.grid))


def evaluation_set(model: MeasurementModel, cfg: ExperimentConfig, n: int | None = None, snr_db=None, noise_stream: int = 0) -> Dataset:
    """The evaluation instances: fixed path count, test seed stream."""
    tc = replace(cfg.train, seed=cfg.seed, j_max=max(cfg.j_paths, 1))
    return generate_dataset(
        model,
        tc,
        n_samples=cfg.trials if n is None else n,
        split="test",
        j_fixed=cfg.j_paths,
        noise_mode="noiseless" if snr_db is None else snr_db,
        noise_stream=noise_stream,
    )


def _ista_cfg(model: MeasurementModel, cfg: ExperimentConfig, lam: float) -> IstaConfig:
    return IstaConfig.for_model(model, lam, tol=cfg.ista_tol, max_iter=cfg.ista_max_iter)


def _load_or_init(model: MeasurementModel, model_path, cfg: ExperimentConfig) -> UdnnModel:
    if model_path is not None and Path(model_path).exists():
        return load_model(model_path, expected_fingerprint=model.fingerprint())
    warnings.warn("no trained model found; using the ISTA-initialized network", RuntimeWarning, stacklevel=3)
    return init_from_ista(model, cfg.train.k_layers, cfg.train.init_lambda)


def _write_csv(path: Path, header, rows, fingerprint: str | None = None):
    buf = io.StringIO()
    if fingerprint:
        buf.write(f"# config_fingerprint={fingerprint}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _support(vec_re, vec_im, rel: float = 0.1) -> list[int]:
    mag = np.hypot(vec_re, vec_im)
    if not np.any(mag):
        return []
    return sorted(int(i) for i in np.flatnonzero(mag > rel * mag.max()))


# -- example -------------------------------------------------------------------------


def cmd_example(cfg: ExperimentConfig, model_path=None, force: bool = False) -> dict:
    """One noiseless instance estimated by both methods, written for a stem plot."""
    out = OutputDirectory(cfg, force)
    model = build_model(cfg)
    net = _load_or_init(model, model_path, cfg)
    ds = evaluation_set(model, cfg, n=1)
    s = ds[0]
    ista_x = ista_solve(s.y, model, _ista_cfg(model, cfg, cfg.ista_lambda)).x_hat
    udnn_x = forward(net, s.y)

    rows = []
    for m in range(model.m):
        tau, f = model.grid.column_coords(m)
        rows.append([m, tau, f, s.x.re[m], s.x.im[m], ista_x.re[m], ista_x.im[m], udnn_x.re[m], udnn_x.im[m]])
    header = ["grid_index", "delay_point", "doppler_point", "true_re", "true_im", "ista_re", "ista_im", "udnn_re", "udnn_im"]
    _write_csv(out / "example.csv", header, rows, out.fingerprint)
    return {
        "true_support": _support(s.x.re, s.x.im),
        "ista_support": _support(ista_x.re, ista_x.im),
        "udnn_support": _support(udnn_x.re, udnn_x.im),
        "csv": str(out / "example.csv"),
        "rows": len(rows),
    }


# -- training ----------------------------------------------------------------------------


def cmd_train(cfg: ExperimentConfig, resume: bool = False, force: bool = False) -> tuple[UdnnModel, TrainingLog]:
    """Generate data, initialize from ISTA, train, and save the best network.

    After every epoch the running state goes to ``checkpoint/`` so an
    interrupted run can continue with ``resume=True``.
    """
    out = OutputDirectory(cfg, force)
    model = build_model(cfg)
    tc = replace(cfg.train, seed=cfg.seed)
    train_set, val_set = make_splits(model, tc)
    net = init_from_ista(model, tc.k_layers, tc.init_lambda)
    net = UdnnModel(net.layers, {**net.meta, "config_fingerprint": out.fingerprint})
    ckpt = out / "checkpoint"
    ckpt.mkdir(exist_ok=True)

    state = None
    if resume and (ckpt / "state.json").exists():
        state = _load_state(ckpt, net.meta)
        log.info("resuming after epoch %d", state.epoch)

    def persist(st: TrainState):
        save_model(UdnnModel.from_arrays(st.params, net.meta), ckpt / "last.udnn")
        save_model(UdnnModel.from_arrays(st.best_params, net.meta), ckpt / "best.udnn")
        st.adam.save(ckpt / "adam.npz")
        st.log.to_csv(ckpt / "log.csv")
        (ckpt / "state.json").write_text(
            json.dumps({"epoch": st.epoch, "best_val_db": st.best_val_db, "best_epoch": st.best_epoch})
        )
        log.info("epoch %d train_loss %.6g val %.2f dB", st.epoch, st.log.rows[-1]["train_loss"], st.log.rows[-1]["val_mse_db"])

    try:
        trained, train_log = train(net, train_set, tc, model, val_set, state=state, on_epoch=persist)
    except OSError as exc:
        raise RuntimeError(f"training interrupted; resume from {ckpt}") from exc
    save_model(trained, out / "model.udnn")
    train_log.to_csv(out / "training_log.csv", fingerprint=out.fingerprint)
    return trained, train_log


def _load_state(ckpt: Path, meta: dict) -> TrainState:
    info = json.loads((ckpt / "state.json").read_text())
    last = load_model(ckpt / "last.udnn", expected_fingerprint=meta.get("grid_fingerprint"))
    best = load_model(ckpt / "best.udnn", expected_fingerprint=meta.get("grid_fingerprint"))
    params = [tuple(np.array(a) for a in layer) for layer in last.to_arrays()]
    best_params = [tuple(np.array(a) for a in layer) for layer in best.to_arrays()]
    return TrainState(
        int(info["epoch"]),
        params,
        AdamState.load(ckpt / "adam.npz"),
        best_params,
        float(info["best_val_db"]),
        int(info["best_epoch"]),
        TrainingLog.from_csv(ckpt / "log.csv"),
    )


# -- benchmark -----------------------------------------------------------------------------


def run_ista_trials(ds: Dataset, model: MeasurementModel, cfg: ExperimentConfig, lams) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Solve every instance; returns estimates, iteration counts and total time."""
    hr = np.empty_like(ds.x_re)
    hi = np.empty_like(ds.x_im)
    iters = np.empty(len(ds), dtype=np.int64)
    cfgs = [_ista_cfg(model, cfg, float(lam)) for lam in np.broadcast_to(lams, (len(ds),))]
    ys = [SplitComplexVector(ds.y_re[p], ds.y_im[p]) for p in range(len(ds))]
    t0 = time.perf_counter()
    for p in range(len(ds)):
        res = ista_solve(ys[p], model, cfgs[p])
        hr[p], hi[p] = res.x_hat.re, res.x_hat.im
        iters[p] = res.iterations
    return hr, hi, iters, time.perf_counter() - t0


def run_udnn_trials(ds: Dataset, net: UdnnModel) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-instance forward passes, timed as a total."""
    hr = np.empty_like(ds.x_re)
    hi = np.empty_like(ds.x_im)
    ys = [SplitComplexVector(ds.y_re[p], ds.y_im[p]) for p in range(len(ds))]
    forward(net, ys[0])  # warm the cached weight views
    t0 = time.perf_counter()
    for p in range(len(ds)):
        est = forward(net, ys[p])
        hr[p], hi[p] = est.re, est.im
    return hr, hi, time.perf_counter() - t0


def cmd_bench(cfg: ExperimentConfig, model_path=None, force: bool = False, net: UdnnModel | None = None) -> tuple[ResultRecord, ResultRecord]:
    """Noiseless accuracy, iteration count and single-threaded run time of both methods."""
    out = OutputDirectory(cfg, force)
    model = build_model(cfg)
    if net is None:
        if model_path is None or not Path(model_path).exists():
            raise FileNotFoundError(f"bench needs a trained model, got {model_path!r}")
        net = load_model(model_path, expected_fingerprint=model.fingerprint())
    elif net.meta.get("grid_fingerprint") != model.fingerprint():
        raise IntegrityError("network was built for a different measurement model")
    ds = evaluation_set(model, cfg)
    _ = model.a_hermitian  # prebuilt before any timer starts

    with threadpool_limits(limits=1):
        ir, ii, iters, t_ista = run_ista_trials(ds, model, cfg, cfg.ista_lambda)
        ur, ui, t_udnn = run_udnn_trials(ds, net)

    fp = cfg.fingerprint()
    ista_rec = ResultRecord(
        "ista", None, evaluate_mse_db(None, ds, estimates=(ir, ii)), float(np.mean(iters)), t_ista, len(ds), fp,
        evaluate_mse_db(None, ds, "per_entry", estimates=(ir, ii)),
    )
    udnn_rec = ResultRecord(
        "udnn", None, evaluate_mse_db(None, ds, estimates=(ur, ui)), float(net.k_layers), t_udnn, len(ds), fp,
        evaluate_mse_db(None, ds, "per_entry", estimates=(ur, ui)),
    )
    _write_records(out / "bench.csv", [ista_rec, udnn_rec])
    return ista_rec, udnn_rec


def _write_records(path: Path, records):
    header = list(asdict(records[0]).keys())
    rows = [["" if v is None else v for v in asdict(r).values()] for r in records]
    _write_csv(path, header, rows)


# -- SNR sweep ---------------------------------------------------------------------------------


def _noisy_lambdas(ds: Dataset, model: MeasurementModel) -> np.ndarray:
    # same per-instance noise level the generator used
    return np.array([select_lambda("noisy", s, model.n) for s in ds.meta["sigma_w"]])


def _chunked_ista(args):
    ds, model, cfg, lams = args
    hr, hi, iters, _ = run_ista_trials(ds, model, cfg, lams)
    return hr, hi, iters


def cmd_snr_sweep(
    cfg: ExperimentConfig, model_path=None, force: bool = False, net: UdnnModel | None = None, threads: int = 1
) -> tuple[list[ResultRecord], dict]:
    """MSE of both methods against SNR; ISTA uses the noise-scaled weight factor."""
    out = OutputDirectory(cfg, force)
    model = build_model(cfg)
    if net is None:
        net = _load_or_init(model, model_path, cfg)
    if net.meta.get("grid_fingerprint") != model.fingerprint():
        raise IntegrityError("network was built for a different measurement model")
    snrs = [None] if cfg.snr_list_db == "noiseless" else list(cfg.snr_list_db)
    fp = cfg.fingerprint()
    records = []
    for i, snr in enumerate(snrs):
        ds = evaluation_set(model, cfg, snr_db=snr, noise_stream=i + 1)
        lams = cfg.ista_lambda if snr is None else _noisy_lambdas(ds, model)
        t0 = time.perf_counter()
        if threads > 1:
            ir, ii, iters = _parallel_ista(ds, model, cfg, lams, threads)
        else:
            ir, ii, iters, _ = run_ista_trials(ds, model, cfg, lams)
        t_ista = time.perf_counter() - t0
        t0 = time.perf_counter()
        ur, ui, _ = forward_arrays(net.to_arrays(), ds.y_re, ds.y_im)
        t_udnn = time.perf_counter() - t0
        for method, (hr, hi), its, tt in (("ista", (ir, ii), float(np.mean(iters)), t_ista), ("udnn", (ur, ui), float(net.k_layers), t_udnn)):
            records.append(
                ResultRecord(method, snr, evaluate_mse_db(None, ds, estimates=(hr, hi)), its, max(tt, 1e-9), len(ds), fp,
                             evaluate_mse_db(None, ds, "per_entry", estimates=(hr, hi)))
            )
    report = monotonicity_report(records)
    _write_csv(
        out / "snr_sweep.csv",
        ["snr_db", "method", "mse_db", "mse_db_per_entry", "mean_iterations_or_layers", "trials", "config_fingerprint"],
        [["" if r.snr_db is None else r.snr_db, r.method, r.mse_db, r.mse_db_per_entry, r.mean_iterations_or_layers, r.trials, r.config_fingerprint] for r in records],
    )
    (out / "snr_sweep_report.json").write_text(json.dumps({"config_fingerprint": fp, **report}, indent=2))
    return records, report


def _parallel_ista(ds, model, cfg, lams, workers):
    lams = np.broadcast_to(lams, (len(ds),))
    chunks = np.array_split(np.arange(len(ds)), workers)
    jobs = [(ds.subset(c), model, cfg, lams[c]) for c in chunks if c.size]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_chunked_ista, jobs))
    return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]), np.concatenate([p[2] for p in parts]))


def monotonicity_report(records, slack_db: float = 0.5) -> dict:
    """Whether each method's MSE never rises by more than ``slack_db`` as SNR grows."""
    report = {"slack_db": slack_db, "methods": {}}
    for method in sorted({r.method for r in records}):
        pts = sorted((r.snr_db, r.mse_db) for r in records if r.method == method and r.snr_db is not None)
        rises = [b[1] - a[1] for a, b in zip(pts, pts[1:])]
        report["methods"][method] = {
            "snr_db": [p[0] for p in pts],
            "mse_db": [p[1] for p in pts],
            "max_rise_db": max(rises) if rises else 0.0,
            "monotone": all(r <= slack_db for r in rises),
        }
    return report


# -- validation suite ---------------------------------------------------------------------------


def _check(name, passed, **detail):
    return {"name": name, "passed": bool(passed), **{k: (float(v) if isinstance(v, (np.floating, float)) else v) for k, v in detail.items()}}


def cmd_validate(cfg: ExperimentConfig, perturb_init: float = 0.0, fd_pairs: int = 1, write: bool = True) -> dict:
    """Seeded cross-module invariant checks; ``report['passed']`` is the verdict.

    ``perturb_init`` adds that much noise to the initialized network's first
    weight block, as a negative control for the initialization check.
    """
    rng = np.random.default_rng(cfg.seed)
    model = build_model(cfg)
    checks = []

    # split vs native complex arithmetic
    A = rng.standard_normal((5, 7)) + 1j * rng.standard_normal((5, 7))
    v = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    got = cmul_mat_vec(SplitComplexMatrix.from_complex(A), SplitComplexVector.from_complex(v)).to_complex()
    err = np.max(np.abs(got - A @ v)) / np.max(np.abs(A @ v))
    checks.append(_check("complex_equivalence", err <= 1e-12, max_rel_error=err))

    Am = SplitComplexMatrix.from_complex(A)
    checks.append(_check("hermitian_involution", hermitian(hermitian(Am)) == Am))

    B = SplitComplexMatrix.from_complex(rng.standard_normal((16, 36)) + 1j * rng.standard_normal((16, 36)))
    lam_pi = largest_eigenvalue_gram(B)
    lam_eig = float(np.linalg.eigvalsh(hermitian(B).to_complex() @ B.to_complex()).max())
    checks.append(_check("power_iteration_vs_eigh", abs(lam_pi - lam_eig) <= 1e-8 * lam_eig, power=lam_pi, eigh=lam_eig))

    net = init_from_ista(model, cfg.train.k_layers, cfg.train.init_lambda)
    if perturb_init:
        arrays = net.to_arrays()
        w1r = arrays[0][0] + perturb_init * rng.standard_normal(arrays[0][0].shape)
        arrays[0] = (w1r,) + tuple(arrays[0][1:])
        net = UdnnModel.from_arrays(arrays, net.meta)
    ds = evaluation_set(model, cfg, n=20)
    icfg = IstaConfig.for_model(model, cfg.train.init_lambda)
    worst = 0.0
    for p in range(len(ds)):
        s = ds[p]
        a = forward(net, s.y)
        b = ista_k_steps(s.y, model, icfg, net.k_layers)
        worst = max(worst, float(np.max(np.abs(a.re - b.re))), float(np.max(np.abs(a.im - b.im))))
    checks.append(_check("init_equivalence", worst <= 1e-12, max_abs_error=worst))

    rand_net = _random_network(model, cfg.train.k_layers, rng)
    s = ds[0]
    ref = reference_forward_complex(rand_net, s.y.to_complex())
    split = forward(rand_net, s.y).to_complex()
    err = float(np.max(np.abs(ref - split)))
    checks.append(_check("network_complex_equivalence", err <= 1e-12, max_abs_error=err))

    x_hat, trace = forward_traced(rand_net, s.y)
    try:
        replay_ok = replay_trace(rand_net, s.y, trace) == x_hat
    except IntegrityError:
        replay_ok = False
    checks.append(_check("trace_replay", replay_ok))

    fd_worst = 0.0
    for p in range(fd_pairs):
        s = ds[p]
        res = finite_difference_check(_random_network(model, cfg.train.k_layers, rng), s.y, s.x)
        fd_worst = max(fd_worst, res["max_rel_error"])
    checks.append(_check("gradient_finite_differences", fd_worst <= 1e-5, max_rel_error=fd_worst, pairs=fd_pairs))

    s = ds[1]
    icfg = IstaConfig.for_model(model, 0.01)
    objs = []
    ista_solve(s.y, model, icfg, callback=lambda k, x: objs.append(lasso_objective(x, s.y, model, 0.01)) if k <= 500 else None)
    rise = max(np.diff(objs).max(), 0.0)
    checks.append(_check("ista_objective_monotone", rise <= 1e-10, max_rise=rise))

    mf = _check_matched_filter(cfg.ofdm)
    checks.append(_check("matched_filter_zero_doppler", mf["zero_doppler_error"] <= 1e-8, **mf))
    checks.append(_check("matched_filter_quadrature_convergence", mf["refinement_change"] < 1e-6, refinement_change=mf["refinement_change"]))

    report = {"config_fingerprint": cfg.fingerprint(), "checks": checks, "passed": all(c["passed"] for c in checks)}
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "validate.json").write_text(json.dumps(report, indent=2, default=str))
    return report


def _random_network(model: MeasurementModel, k: int, rng: np.random.Generator) -> UdnnModel:
    base = init_from_ista(model, k, 1.0)
    arrays = []
    for layer in base.to_arrays():
        w = [a + 0.02 * rng.standard_normal(a.shape) for a in layer[:4]]
        arrays.append((*w, np.array([float(layer[4][0]) * rng.uniform(0.5, 1.5)])))
    return UdnnModel.from_arrays(arrays, base.meta)


def _check_matched_filter(ofdm: OfdmConfig) -> dict:
    T = ofdm.sample_period
    B = np.ones((ofdm.n_blocks, ofdm.n_data))
    still = [(0.8 - 0.3j, 0.0, 0.0)]
    zero = np.max(np.abs(matched_filter_oracle(still, ofdm, B, 256) - matched_filter_closed_form(still, ofdm, B)))
    moving = [(1.0, 0.0, 0.1 / (ofdm.n_units * T))]
    coarse = matched_filter_oracle(moving, ofdm, B, 512)
    fine = matched_filter_oracle(moving, ofdm, B, 1024)
    change = np.linalg.norm(fine - coarse) / np.linalg.norm(fine)
    return {"zero_doppler_error": float(zero), "refinement_change": float(change)}

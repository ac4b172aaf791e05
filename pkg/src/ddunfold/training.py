"""Training data, loss, reverse-mode gradients and Adam for the unfolded network."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import struct
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .complex_core import SplitComplexVector
from .errors import DomainError, IntegrityError, ShapeError
from .network import ForwardTrace, UdnnModel, forward_arrays
from .signal_model import MeasurementModel, snr_to_sigma

__all__ = [
    "TrainConfig",
    "TrainingSample",
    "Dataset",
    "GradientSet",
    "AdamState",
    "TrainingLog",
    "TrainState",
    "generate_dataset",
    "make_splits",
    "loss_mse_split",
    "batch_loss",
    "backward",
    "batch_gradients",
    "finite_difference_check",
    "adam_step",
    "train",
    "evaluate_mse_db",
    "normalized_errors",
    "save_dataset",
    "load_dataset",
    "MSE_FLOOR_DB",
]

MSE_FLOOR_DB = -300.0

# seed-stream tags, kept distinct so splits never share random draws
_SPLIT_TAGS = {"train": 0, "val": 1, "test": 2}
_SHUFFLE_TAG = 7


@dataclass(frozen=True)
class TrainConfig:
    """Training knobs. ``noise_mode`` is ``"noiseless"`` or an SNR in dB."""

    n_samples: int = 100_000
    epochs: int = 50
    batch_size: int = 256
    j_max: int = 2
    noise_mode: str | float = "noiseless"
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_fraction: float = 0.05
    k_layers: int = 5
    init_lambda: float = 1.0

    def __post_init__(self):
        if min(self.n_samples, self.epochs, self.batch_size, self.j_max, self.k_layers) < 1:
            raise DomainError("counts must be at least 1")
        if not self.lr >= 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or not self.eps > 0:
            raise DomainError(f"invalid optimizer settings: lr={self.lr} betas=({self.beta1}, {self.beta2}) eps={self.eps}")
        if not 0 < self.val_fraction < 1:
            raise DomainError("val_fraction must lie in (0, 1)")
        if self.noise_mode != "noiseless":
            object.__setattr__(self, "noise_mode", float(self.noise_mode))

    @property
    def noisy(self) -> bool:
        return self.noise_mode != "noiseless"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class TrainingSample:
    y: SplitComplexVector
    x: SplitComplexVector
    meta: dict


@dataclass(frozen=True, eq=False)
class Dataset:
    """Paired measurements and sparse ground truths, one row per sample."""

    y_re: np.ndarray
    y_im: np.ndarray
    x_re: np.ndarray
    x_im: np.ndarray
    j_paths: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.y_re.shape[0]
        if self.y_re.shape != self.y_im.shape or self.x_re.shape != self.x_im.shape:
            raise ShapeError("real and imaginary blocks must match")
        if self.x_re.shape[0] != p or self.j_paths.shape != (p,):
            raise ShapeError("all blocks need one row per sample")

    def __len__(self) -> int:
        return self.y_re.shape[0]

    @property
    def n(self) -> int:
        return self.y_re.shape[1]

    @property
    def m(self) -> int:
        return self.x_re.shape[1]

    def __getitem__(self, i: int) -> TrainingSample:
        meta = {
            "seed": [self.meta.get("seed"), self.meta.get("split_tag"), int(i)],
            "snr_db": self.meta.get("noise_mode"),
            "j_paths": int(self.j_paths[i]),
        }
        return TrainingSample(
            SplitComplexVector(self.y_re[i], self.y_im[i]),
            SplitComplexVector(self.x_re[i], self.x_im[i]),
            meta,
        )

    def subset(self, idx) -> "Dataset":
        meta = dict(self.meta)
        if "sigma_w" in meta:
            meta["sigma_w"] = np.asarray(meta["sigma_w"])[idx].tolist()
        return Dataset(self.y_re[idx], self.y_im[idx], self.x_re[idx], self.x_im[idx], self.j_paths[idx], meta)


def _draw_sample(rng: np.random.Generator, m: int, j_max: int, j_fixed: int | None):
    j = int(j_fixed) if j_fixed is not None else int(rng.integers(1, j_max + 1))
    support = rng.choice(m, size=j, replace=False)
    gains = rng.uniform(-1.0, 1.0, size=j) + 1j * rng.uniform(-1.0, 1.0, size=j)
    x = np.zeros(m, dtype=np.complex128)
    x[support] = gains
    return j, x


def generate_dataset(
    model: MeasurementModel,
    cfg: TrainConfig,
    n_samples: int | None = None,
    split: str = "train",
    j_fixed: int | None = None,
    noise_mode=None,
    noise_stream: int = 0,
) -> Dataset:
    """Random on-grid sparse channels and their measurements.

    Sample ``p`` of ``split`` is drawn from the generator seeded with
    ``(cfg.seed, split_tag, p)``: path count uniform on ``1..j_max``
    (or ``j_fixed``), distinct uniform grid columns, and gains whose real
    and imaginary parts are uniform on ``[-1, 1]``. With an SNR noise mode
    the noise level is set per sample from its own noiseless power, and the
    noise comes from a separate generator seeded with
    ``(cfg.seed, split_tag, p, 1, noise_stream)`` so that one channel can be
    paired with independent noise draws.
    """
    p_total = cfg.n_samples if n_samples is None else int(n_samples)
    noise_mode = cfg.noise_mode if noise_mode is None else noise_mode
    j_top = cfg.j_max if j_fixed is None else j_fixed
    if j_top > model.m:
        raise DomainError(f"cannot place {j_top} paths on {model.m} grid columns")
    if j_fixed is not None and j_fixed < 0:
        raise DomainError("j_fixed must be nonnegative")
    tag = _SPLIT_TAGS[split]
    A = model.a_matrix.to_complex()

    X = np.zeros((p_total, model.m), dtype=np.complex128)
    W = np.zeros((p_total, model.n), dtype=np.complex128)
    js = np.zeros(p_total, dtype=np.int64)
    sigmas = np.zeros(p_total)
    for p in range(p_total):
        rng = np.random.default_rng((cfg.seed, tag, p))
        js[p], X[p] = _draw_sample(rng, model.m, cfg.j_max, j_fixed)
        if noise_mode != "noiseless" and js[p] > 0:
            clean = A @ X[p]
            sigmas[p] = snr_to_sigma(float(noise_mode), float(np.mean(np.abs(clean) ** 2)))
            nrng = np.random.default_rng((cfg.seed, tag, p, 1, noise_stream))
            scale = sigmas[p] / math.sqrt(2.0)
            W[p] = scale * (nrng.standard_normal(model.n) + 1j * nrng.standard_normal(model.n))
    Y = X @ A.T + W
    meta = {
        "seed": cfg.seed,
        "split": split,
        "split_tag": tag,
        "noise_mode": noise_mode,
        "j_max": cfg.j_max,
        "j_fixed": j_fixed,
        "grid_fingerprint": model.fingerprint(),
    }
    if noise_mode != "noiseless":
        meta["noise_stream"] = noise_stream
        meta["sigma_w"] = sigmas.tolist()
    return Dataset(Y.real.copy(), Y.imag.copy(), X.real.copy(), X.imag.copy(), js, meta)


def make_splits(model: MeasurementModel, cfg: TrainConfig) -> tuple[Dataset, Dataset]:
    """Training and validation sets; validation takes ``val_fraction`` of the budget."""
    n_val = max(1, int(round(cfg.n_samples * cfg.val_fraction)))
    n_train = max(1, cfg.n_samples - n_val)
    return generate_dataset(model, cfg, n_train, "train"), generate_dataset(model, cfg, n_val, "val")


# -- dataset files --------------------------------------------------------------
#
# layout: b"UDDS" | uint32 LE header length | JSON header | payload
# payload: y_re, y_im (P x N), x_re, x_im (P x M) as little-endian float64,
# then j_paths (P) as little-endian int64

_DS_MAGIC = b"UDDS"


def save_dataset(ds: Dataset, path) -> Path:
    path = Path(path)
    blocks = [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in (ds.y_re, ds.y_im, ds.x_re, ds.x_im)]
    blocks.append(np.ascontiguousarray(ds.j_paths, dtype="<i8").tobytes())
    payload = b"".join(blocks)
    header = {
        "format": "ddunfold.dataset",
        "version": 1,
        "n": ds.n,
        "m": ds.m,
        "p": len(ds),
        "meta": ds.meta,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_DS_MAGIC + struct.pack("<I", len(hb)) + hb + payload)
    return path


def load_dataset(path, expected_fingerprint: str | None = None) -> Dataset:
    data = Path(path).read_bytes()
    if data[:4] != _DS_MAGIC or len(data) < 8:
        raise IntegrityError(f"{path} is not a dataset file")
    (hlen,) = struct.unpack("<I", data[4:8])
    try:
        header = json.loads(data[8 : 8 + hlen])
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"{path} has a corrupt header") from exc
    if header.get("format") != "ddunfold.dataset" or header.get("version") != 1:
        raise IntegrityError("unsupported dataset format/version")
    payload = data[8 + hlen :]
    n, m, p = header["n"], header["m"], header["p"]
    if len(payload) != 8 * p * (2 * n + 2 * m + 1):
        raise IntegrityError("dataset payload has the wrong size")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise IntegrityError("dataset payload digest mismatch")
    meta = header["meta"]
    if expected_fingerprint is not None and meta.get("grid_fingerprint") != expected_fingerprint:
        raise IntegrityError("dataset was generated for a different measurement model")
    floats = np.frombuffer(payload[: 8 * p * (2 * n + 2 * m)], dtype="<f8")
    sizes = [p * n, p * n, p * m, p * m]
    parts, pos = [], 0
    for size, cols in zip(sizes, (n, n, m, m)):
        parts.append(floats[pos : pos + size].reshape(p, cols).copy())
        pos += size
    js = np.frombuffer(payload[8 * p * (2 * n + 2 * m) :], dtype="<i8").astype(np.int64)
    return Dataset(*parts, js, meta)


# -- loss and gradients ------------------------------------------------------------


def loss_mse_split(x_hat: SplitComplexVector, x: SplitComplexVector) -> float:
    """Squared error of the real line plus squared error of the imaginary line."""
    if x_hat.re.shape != x.re.shape:
        raise ShapeError(f"shapes differ: {x_hat.re.shape} vs {x.re.shape}")
    dr, di = x_hat.re - x.re, x_hat.im - x.im
    return float(np.sum(dr * dr) + np.sum(di * di))


def batch_loss(params, yr, yi, xr, xi) -> float:
    """Mean per-sample loss over a batch."""
    hr, hi, _ = forward_arrays(params, yr, yi)
    return float((np.sum((hr - xr) ** 2) + np.sum((hi - xi) ** 2)) / yr.shape[0])


@dataclass(frozen=True, eq=False)
class GradientSet:
    """Per-layer ``(dW1R, dW1I, dW2R, dW2I, dtheta)`` with the parameter shapes."""

    layers: tuple

    def __len__(self) -> int:
        return len(self.layers)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.ravel(g) for layer in self.layers for g in layer])


def _backward_arrays(params, records, gr, gi, yr, yi):
    """Reverse sweep given the loss gradient ``(gr, gi)`` at the network output."""
    grads = [None] * len(params)
    for k in range(len(params) - 1, -1, -1):
        w1r, w1i, w2r, w2i, th = params[k]
        theta = float(th[0])
        ar, ai, zr, zi = records[k]
        # S_theta passes gradient where |z| > theta, blocks it elsewhere (kink included)
        gzr = gr * (np.abs(zr) > theta)
        gzi = gi * (np.abs(zi) > theta)
        dth = -(np.sum(np.sign(zr) * gzr) + np.sum(np.sign(zi) * gzi))
        d_w2r = gzr.T @ ar + gzi.T @ ai
        d_w2i = gzi.T @ ar - gzr.T @ ai
        d_w1r = gzr.T @ yr + gzi.T @ yi
        d_w1i = gzi.T @ yr - gzr.T @ yi
        grads[k] = (d_w1r, d_w1i, d_w2r, d_w2i, np.array([dth]))
        if k > 0:
            gr, gi = gzr @ w2r + gzi @ w2i, gzi @ w2r - gzr @ w2i
    return grads


def batch_gradients(params, yr, yi, xr, xi) -> tuple[float, list]:
    """Mean loss over the batch and its gradient for every parameter."""
    p = yr.shape[0]
    hr, hi, records = forward_arrays(params, yr, yi, record=True)
    er, ei = hr - xr, hi - xi
    loss = float((np.sum(er * er) + np.sum(ei * ei)) / p)
    return loss, _backward_arrays(params, records, 2.0 * er / p, 2.0 * ei / p, yr, yi)


def backward(model: UdnnModel, trace: ForwardTrace, y: SplitComplexVector, x_true: SplitComplexVector) -> GradientSet:
    """Gradient of ``loss_mse_split(forward(model, y), x_true)`` from a recorded trace."""
    params = model.to_arrays()
    if len(trace) != model.k_layers:
        raise IntegrityError(f"trace has {len(trace)} records, model has {model.k_layers} layers")
    if y.length != model.n or x_true.length != model.m:
        raise ShapeError("y or x_true does not match the model dimensions")
    first = trace.records[0]
    w1r, w1i = params[0][0], params[0][1]
    if np.any(first.x_input.re) or np.any(first.x_input.im) or not np.allclose(
        first.z_pre_threshold.re, w1r @ y.re - w1i @ y.im, rtol=1e-12, atol=1e-12
    ):
        raise IntegrityError("trace was not produced by this model on this input")
    records = [
        (r.x_input.re[None], r.x_input.im[None], r.z_pre_threshold.re[None], r.z_pre_threshold.im[None])
        for r in trace.records
    ]
    gr = 2.0 * (trace.x_hat.re - x_true.re)[None]
    gi = 2.0 * (trace.x_hat.im - x_true.im)[None]
    grads = _backward_arrays(params, records, gr, gi, y.re[None], y.im[None])
    return GradientSet(tuple(grads))


def _complex_loss_and_pattern(w1s, w2s, thetas, y, x_true):
    # independent forward on native complex arrays
    x = np.zeros(w2s[0].shape[0], dtype=np.complex128)
    active = []
    for w1, w2, th in zip(w1s, w2s, thetas):
        z = w2 @ x + w1 @ y
        ar, ai = np.abs(z.real) > th, np.abs(z.imag) > th
        active.append(ar)
        active.append(ai)
        x = np.sign(z.real) * np.maximum(np.abs(z.real) - th, 0.0) + 1j * np.sign(z.imag) * np.maximum(np.abs(z.imag) - th, 0.0)
    e = x - x_true
    return float(np.sum(e.real**2) + np.sum(e.imag**2)), np.concatenate(active)


def finite_difference_check(model: UdnnModel, y: SplitComplexVector, x_true: SplitComplexVector, h: float = 1e-5, floor_rel: float = 1e-4):
    """Compare ``backward`` against central differences for every parameter.

    The differences are taken on a complex-arithmetic forward pass that
    shares no code with the split-line implementation. A component is
    skipped when moving it by ``+-10 h`` changes which pre-threshold values
    clear their threshold, i.e. a kink lies within reach. Relative error is
    ``|g - fd| / max(|g|, |fd|, floor_rel * max|g|)``; the floor keeps
    components far below the roundoff of the difference quotient from
    dominating. Returns the maximum relative error, checked and skipped
    counts, and the worst offender ``(layer, block, index, g, fd)``.
    """
    from .network import forward_traced

    _, trace = forward_traced(model, y)
    analytic = backward(model, trace, y, x_true).layers
    floor = floor_rel * max(float(np.max(np.abs(g))) for layer in analytic for g in layer)
    w1s = [layer.w1.to_complex() for layer in model.layers]
    w2s = [layer.w2.to_complex() for layer in model.layers]
    thetas = [layer.theta for layer in model.layers]
    yc, xc = y.to_complex(), x_true.to_complex()
    _, base = _complex_loss_and_pattern(w1s, w2s, thetas, yc, xc)

    def evaluate(k, b, idx, delta):
        if b == 4:
            saved = thetas[k]
            thetas[k] = saved + delta
            out = _complex_loss_and_pattern(w1s, w2s, thetas, yc, xc)
            thetas[k] = saved
            return out
        mats = w1s if b < 2 else w2s
        step = delta if b % 2 == 0 else 1j * delta
        saved = mats[k][idx]
        mats[k][idx] = saved + step
        out = _complex_loss_and_pattern(w1s, w2s, thetas, yc, xc)
        mats[k][idx] = saved
        return out

    max_err, checked, skipped, worst = 0.0, 0, 0, None
    for k in range(model.k_layers):
        for b in range(5):
            shape = analytic[k][b].shape
            for idx in np.ndindex(shape):
                cidx = idx if b < 4 else None
                if any(not np.array_equal(evaluate(k, b, cidx, s * 10 * h)[1], base) for s in (1, -1)):
                    skipped += 1
                    continue
                lp, _ = evaluate(k, b, cidx, h)
                lm, _ = evaluate(k, b, cidx, -h)
                fd = (lp - lm) / (2 * h)
                g = float(analytic[k][b][idx])
                err = abs(g - fd) / max(abs(g), abs(fd), floor)
                checked += 1
                if err > max_err:
                    max_err, worst = err, (k, b, idx, g, fd)
    return {"max_rel_error": max_err, "checked": checked, "skipped": skipped, "worst": worst}


# -- Adam ------------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        m = [tuple(np.zeros_like(a, dtype=float) for a in layer) for layer in params]
        v = [tuple(np.zeros_like(a, dtype=float) for a in layer) for layer in params]
        return cls(m, v, 0, lr, beta1, beta2, eps)

    def save(self, path) -> None:
        arrays = {}
        for k, (ml, vl) in enumerate(zip(self.m, self.v)):
            for b, (ma, va) in enumerate(zip(ml, vl)):
                arrays[f"m_{k}_{b}"] = ma
                arrays[f"v_{k}_{b}"] = va
        hyper = np.array([self.t, self.lr, self.beta1, self.beta2, self.eps, len(self.m)], dtype=float)
        np.savez(path, hyper=hyper, **arrays)

    @classmethod
    def load(cls, path) -> "AdamState":
        with np.load(path) as z:
            t, lr, b1, b2, eps, k = z["hyper"]
            blocks = [sum(1 for name in z.files if name.startswith(f"m_{i}_")) for i in range(int(k))]
            m = [tuple(z[f"m_{i}_{b}"] for b in range(nb)) for i, nb in enumerate(blocks)]
            v = [tuple(z[f"v_{i}_{b}"] for b in range(nb)) for i, nb in enumerate(blocks)]
        return cls(m, v, int(t), float(lr), float(b1), float(b2), float(eps))


def adam_step(params: Sequence, grads, state: AdamState):
    """One bias-corrected Adam update; thresholds are clipped to be nonnegative.

    ``grads`` may be a ``GradientSet`` or a list of per-layer tuples.
    Returns the new parameter list and the (updated) state.
    """
    layers = grads.layers if isinstance(grads, GradientSet) else grads
    if len(layers) != len(params):
        raise ShapeError("gradient and parameter layer counts differ")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    new_params, new_m, new_v = [], [], []
    for p_layer, g_layer, m_layer, v_layer in zip(params, layers, state.m, state.v):
        ps, ms, vs = [], [], []
        for b, (p, g, m, v) in enumerate(zip(p_layer, g_layer, m_layer, v_layer)):
            g = np.asarray(g, dtype=float)
            if g.shape != np.shape(p):
                raise ShapeError(f"gradient block shape {g.shape} != parameter shape {np.shape(p)}")
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * (g * g)
            p = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
            if b == 4:
                p = np.maximum(p, 0.0)
            ps.append(p)
            ms.append(m)
            vs.append(v)
        new_params.append(tuple(ps))
        new_m.append(tuple(ms))
        new_v.append(tuple(vs))
    state.m, state.v = new_m, new_v
    return new_params, state


# -- evaluation ----------------------------------------------------------------------------


def _estimate_all(estimator, ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(estimator, UdnnModel):
        hr, hi, _ = forward_arrays(estimator.to_arrays(), ds.y_re, ds.y_im)
        return hr, hi
    hr = np.empty_like(ds.x_re)
    hi = np.empty_like(ds.x_im)
    for p in range(len(ds)):
        est = estimator(SplitComplexVector(ds.y_re[p], ds.y_im[p]))
        hr[p], hi[p] = est.re, est.im
    return hr, hi


def normalized_errors(x_hat_re, x_hat_im, ds: Dataset) -> tuple[np.ndarray, int]:
    """Per-sample error energy over signal energy, dropping all-zero ground truths."""
    err = np.sum((x_hat_re - ds.x_re) ** 2, axis=1) + np.sum((x_hat_im - ds.x_im) ** 2, axis=1)
    energy = np.sum(ds.x_re**2, axis=1) + np.sum(ds.x_im**2, axis=1)
    keep = energy > 0
    return err[keep] / energy[keep], int(np.count_nonzero(~keep))


def _to_db(value: float) -> float:
    if value <= 0:
        return MSE_FLOOR_DB
    return max(10.0 * math.log10(value), MSE_FLOOR_DB)


def evaluate_mse_db(estimator, test_set: Dataset, convention: str = "normalized", estimates=None) -> float:
    """MSE of an estimator over a test set, in dB.

    ``estimator`` is a ``UdnnModel`` or any callable mapping a measurement
    ``SplitComplexVector`` to an estimate. ``convention="normalized"``
    averages ``||x_hat - x||^2 / ||x||^2`` over samples (0 dB is the all-zero
    estimator); ``"per_entry"`` averages ``||x_hat - x||^2 / M``.
    Precomputed ``estimates=(re, im)`` skip the estimation pass.
    """
    if len(test_set) == 0:
        raise DomainError("empty test set")
    hr, hi = estimates if estimates is not None else _estimate_all(estimator, test_set)
    if convention == "normalized":
        ratios, dropped = normalized_errors(hr, hi, test_set)
        if dropped:
            warnings.warn(f"{dropped} samples with zero ground truth were excluded", RuntimeWarning, stacklevel=2)
        if ratios.size == 0:
            raise DomainError("no sample has a nonzero ground truth")
        return _to_db(float(np.mean(ratios)))
    if convention == "per_entry":
        err = np.sum((hr - test_set.x_re) ** 2, axis=1) + np.sum((hi - test_set.x_im) ** 2, axis=1)
        return _to_db(float(np.mean(err)) / test_set.m)
    raise DomainError(f"unknown MSE convention {convention!r}")


# -- training loop -------------------------------------------------------------------------


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)

    FIELDS = ("epoch", "train_loss", "val_mse_db", "wall_time_s")

    def append(self, epoch, train_loss, val_mse_db, wall_time_s):
        self.rows.append(
            {"epoch": int(epoch), "train_loss": float(train_loss), "val_mse_db": float(val_mse_db), "wall_time_s": float(wall_time_s)}
        )

    def to_csv(self, path=None, fingerprint: str | None = None) -> str:
        buf = io.StringIO()
        if fingerprint:
            buf.write(f"# config_fingerprint={fingerprint}\n")
        writer = csv.DictWriter(buf, fieldnames=self.FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, path) -> "TrainingLog":
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
        log = cls()
        for row in csv.DictReader(lines):
            log.append(int(row["epoch"]), float(row["train_loss"]), float(row["val_mse_db"]), float(row["wall_time_s"]))
        return log


@dataclass
class TrainState:
    """Everything needed to continue a run after ``epoch``."""

    epoch: int
    params: list
    adam: AdamState
    best_params: list
    best_val_db: float
    best_epoch: int
    log: TrainingLog


def _val_db(params, meta, ds: Dataset) -> float:
    model = UdnnModel.from_arrays(params, meta)
    return evaluate_mse_db(model, ds)


def train(
    model: UdnnModel,
    dataset: Dataset,
    cfg: TrainConfig,
    measurement: MeasurementModel,
    val_set: Dataset | None = None,
    state: TrainState | None = None,
    on_epoch: Callable[[TrainState], None] | None = None,
) -> tuple[UdnnModel, TrainingLog]:
    """Mini-batch Adam on the mean split-MSE loss.

    Epoch 0 logs the untouched model. Each later epoch visits the training
    set in the order drawn from ``(cfg.seed, epoch)``, then logs the full
    training loss and, when ``val_set`` is given, the normalized validation
    MSE. Returns the parameters with the best validation MSE (the final ones
    without a validation set) and the log. Passing ``state`` resumes a run;
    ``on_epoch`` receives the state after every epoch.
    """
    if len(dataset) == 0:
        raise DomainError("empty training set")
    if (model.n, model.m) != (measurement.n, measurement.m) or (dataset.n, dataset.m) != (model.n, model.m):
        raise ShapeError("model, measurement model and dataset dimensions disagree")
    fp = measurement.fingerprint()
    if model.meta.get("grid_fingerprint", fp) != fp or dataset.meta.get("grid_fingerprint", fp) != fp:
        raise IntegrityError("model or dataset was built for a different measurement model")

    meta = dict(model.meta)
    yr, yi, xr, xi = dataset.y_re, dataset.y_im, dataset.x_re, dataset.x_im
    n_rows = len(dataset)
    t0 = time.perf_counter()

    if state is None:
        params = [tuple(np.array(a, dtype=float) for a in layer) for layer in model.to_arrays()]
        adam = AdamState.for_params(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        val0 = _val_db(params, meta, val_set) if val_set is not None else float("nan")
        log = TrainingLog()
        log.append(0, batch_loss(params, yr, yi, xr, xi), val0, 0.0)
        state = TrainState(0, params, adam, params, val0, 0, log)
        if on_epoch is not None:
            on_epoch(state)

    for epoch in range(state.epoch + 1, cfg.epochs + 1):
        order = np.random.default_rng((cfg.seed, _SHUFFLE_TAG, epoch)).permutation(n_rows)
        params = state.params
        for start in range(0, n_rows, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grads = batch_gradients(params, yr[idx], yi[idx], xr[idx], xi[idx])
            params, _ = adam_step(params, grads, state.adam)
        state.params = params
        val = _val_db(params, meta, val_set) if val_set is not None else float("nan")
        if val_set is not None and val < state.best_val_db:
            state.best_params, state.best_val_db, state.best_epoch = params, val, epoch
        state.epoch = epoch
        state.log.append(epoch, batch_loss(params, yr, yi, xr, xi), val, time.perf_counter() - t0)
        if on_epoch is not None:
            on_epoch(state)

    chosen = state.best_params if val_set is not None else state.params
    meta["trained_epochs"] = state.epoch
    meta["best_epoch"] = state.best_epoch if val_set is not None else state.epoch
    return UdnnModel.from_arrays(chosen, meta), state.log

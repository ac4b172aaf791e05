"""The unfolded ISTA network.

Each of the K layers maps ``(x, y)`` to ``S_theta(W2 x + W1 y)`` where the
complex products are carried out on separate real and imaginary lines and
``S_theta`` shrinks each line independently. With ``W1 = A^H / L``,
``W2 = I - A^H A / L`` and ``theta = lambda / L`` every layer is one ISTA
iteration.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .complex_core import SplitComplexMatrix, SplitComplexVector, cmat_mul
from .errors import DomainError, IntegrityError, ShapeError
from .signal_model import MeasurementModel

__all__ = [
    "LayerParams",
    "UdnnModel",
    "LayerRecord",
    "ForwardTrace",
    "init_from_ista",
    "forward",
    "forward_traced",
    "forward_arrays",
    "replay_trace",
    "save_model",
    "load_model",
    "read_header",
    "reference_forward_complex",
]

MAGIC = b"UDNN"
FORMAT_VERSION = 1
BLOCK_ORDER = ("W1R", "W1I", "W2R", "W2I", "theta")


@dataclass(frozen=True, eq=False)
class LayerParams:
    w1: SplitComplexMatrix  # M x N
    w2: SplitComplexMatrix  # M x M
    theta: float

    def __post_init__(self):
        m, n = self.w1.shape
        if self.w2.shape != (m, m):
            raise ShapeError(f"w2 must be {(m, m)}, got {self.w2.shape}")
        object.__setattr__(self, "theta", float(self.theta))
        if not self.theta >= 0:
            raise DomainError("theta must be nonnegative")

    def arrays(self) -> tuple[np.ndarray, ...]:
        return self.w1.re, self.w1.im, self.w2.re, self.w2.im, np.array([self.theta])

    def __eq__(self, other) -> bool:
        if not isinstance(other, LayerParams):
            return NotImplemented
        return self.w1 == other.w1 and self.w2 == other.w2 and self.theta == other.theta


@dataclass(frozen=True, eq=False)
class UdnnModel:
    layers: tuple[LayerParams, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DomainError("a model needs at least one layer")
        m, n = layers[0].w1.shape
        for k, layer in enumerate(layers):
            if layer.w1.shape != (m, n):
                raise ShapeError(f"layer {k} has w1 shape {layer.w1.shape}, expected {(m, n)}")
        meta = dict(self.meta)
        meta.setdefault("n", n)
        meta.setdefault("m", m)
        meta["k_layers"] = len(layers)
        if meta["n"] != n or meta["m"] != m:
            raise ShapeError("metadata dimensions disagree with the weights")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "meta", meta)

    @property
    def n(self) -> int:
        return self.meta["n"]

    @property
    def m(self) -> int:
        return self.meta["m"]

    @property
    def k_layers(self) -> int:
        return len(self.layers)

    @classmethod
    def from_arrays(cls, arrays, meta=None) -> "UdnnModel":
        """Inverse of ``to_arrays``: one ``(W1R, W1I, W2R, W2I, theta)`` tuple per layer."""
        layers = [
            LayerParams(SplitComplexMatrix(w1r, w1i), SplitComplexMatrix(w2r, w2i), float(np.asarray(th).reshape(-1)[0]))
            for w1r, w1i, w2r, w2i, th in arrays
        ]
        return cls(tuple(layers), meta or {})

    def to_arrays(self) -> list[tuple[np.ndarray, ...]]:
        return list(self._arrays)

    @cached_property
    def _arrays(self) -> tuple:
        return tuple(layer.arrays() for layer in self.layers)

    def __eq__(self, other) -> bool:
        if not isinstance(other, UdnnModel):
            return NotImplemented
        return self.layers == other.layers and self.meta == other.meta


def init_from_ista(model: MeasurementModel, k_layers: int = 5, lam: float = 1.0) -> UdnnModel:
    """K identical layers that reproduce K ISTA iterations with step ``1/L``."""
    if k_layers < 1:
        raise DomainError("k_layers must be at least 1")
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    L = model.lipschitz
    if not L > 0:
        raise DomainError("the measurement model needs a positive Lipschitz constant")
    ah = model.a_hermitian
    gram = cmat_mul(ah, model.a_matrix)
    w1 = SplitComplexMatrix(ah.re / L, ah.im / L)
    w2 = SplitComplexMatrix(np.eye(model.m) - gram.re / L, -gram.im / L)
    layer = LayerParams(w1, w2, lam / L)
    meta = {
        "n": model.n,
        "m": model.m,
        "init_lambda": float(lam),
        "init_lipschitz": float(L),
        "grid_fingerprint": model.fingerprint(),
    }
    return UdnnModel(tuple([layer] * k_layers), meta)


def _shrink(v: np.ndarray, theta: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def forward_arrays(params, yr: np.ndarray, yi: np.ndarray, record: bool = False):
    """Forward pass on raw arrays.

    ``params`` is a sequence of ``(W1R, W1I, W2R, W2I, theta)``; ``yr``/``yi``
    have shape ``(N,)`` or ``(P, N)``. Returns ``(xr, xi, records)`` where
    ``records`` lists ``(xr_in, xi_in, zr, zi)`` per layer when ``record``.
    """
    m = params[0][0].shape[0]
    xr = np.zeros(yr.shape[:-1] + (m,))
    xi = np.zeros_like(xr)
    records = [] if record else None
    for w1r, w1i, w2r, w2i, th in params:
        theta = float(np.asarray(th).reshape(-1)[0])
        zr = xr @ w2r.T - xi @ w2i.T + yr @ w1r.T - yi @ w1i.T
        zi = xi @ w2r.T + xr @ w2i.T + yi @ w1r.T + yr @ w1i.T
        if record:
            records.append((xr, xi, zr, zi))
        xr, xi = _shrink(zr, theta), _shrink(zi, theta)
    return xr, xi, records


def _check_input(model: UdnnModel, y: SplitComplexVector):
    if y.length != model.n:
        raise ShapeError(f"network expects y of length {model.n}, got {y.length}")


def forward(model: UdnnModel, y: SplitComplexVector) -> SplitComplexVector:
    _check_input(model, y)
    xr, xi, _ = forward_arrays(model.to_arrays(), y.re, y.im)
    return SplitComplexVector(xr, xi)


@dataclass(frozen=True, eq=False)
class LayerRecord:
    x_input: SplitComplexVector
    z_pre_threshold: SplitComplexVector
    x_output: SplitComplexVector


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    records: tuple[LayerRecord, ...]
    x_hat: SplitComplexVector

    def __len__(self) -> int:
        return len(self.records)


def forward_traced(model: UdnnModel, y: SplitComplexVector) -> tuple[SplitComplexVector, ForwardTrace]:
    """Forward pass that also keeps every layer's input, pre-threshold and output."""
    _check_input(model, y)
    params = model.to_arrays()
    xr, xi, raw = forward_arrays(params, y.re, y.im, record=True)
    records = []
    for k, (ar, ai, zr, zi) in enumerate(raw):
        if k + 1 < len(raw):
            out = SplitComplexVector(raw[k + 1][0], raw[k + 1][1])
        else:
            out = SplitComplexVector(xr, xi)
        records.append(LayerRecord(SplitComplexVector(ar, ai), SplitComplexVector(zr, zi), out))
    x_hat = SplitComplexVector(xr, xi)
    return x_hat, ForwardTrace(tuple(records), x_hat)


def replay_trace(model: UdnnModel, y: SplitComplexVector, trace: ForwardTrace) -> SplitComplexVector:
    """Re-run each layer from its recorded input; raises if the chain breaks."""
    if len(trace) != model.k_layers:
        raise IntegrityError(f"trace has {len(trace)} records for a {model.k_layers}-layer model")
    x = SplitComplexVector.zeros(model.m)
    for k, (layer, rec) in enumerate(zip(model.to_arrays(), trace.records)):
        if x != rec.x_input:
            raise IntegrityError(f"layer {k} input does not match the previous output")
        xr, xi = _one_layer(layer, rec.x_input, y)
        x = SplitComplexVector(xr, xi)
        if x != rec.x_output:
            raise IntegrityError(f"layer {k} output does not reproduce")
    return x


def _one_layer(layer, x: SplitComplexVector, y: SplitComplexVector):
    w1r, w1i, w2r, w2i, th = layer
    theta = float(th[0])
    zr = x.re @ w2r.T - x.im @ w2i.T + y.re @ w1r.T - y.im @ w1i.T
    zi = x.im @ w2r.T + x.re @ w2i.T + y.im @ w1r.T + y.re @ w1i.T
    return _shrink(zr, theta), _shrink(zi, theta)


# -- checkpoint files ---------------------------------------------------------
#
# layout: MAGIC | uint32 LE header length | UTF-8 JSON header | payload
# payload: per layer, W1R W1I W2R W2I theta as little-endian float64, row-major


def _payload(model: UdnnModel) -> bytes:
    parts = []
    for arrays in model.to_arrays():
        for a in arrays:
            parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(parts)


def save_model(model: UdnnModel, path) -> Path:
    path = Path(path)
    payload = _payload(model)
    header = {
        "format": "ddunfold.udnn",
        "version": FORMAT_VERSION,
        "meta": model.meta,
        "block_order": list(BLOCK_ORDER),
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(payload)
    tmp.replace(path)
    return path


def _read(path) -> tuple[dict, bytes]:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != MAGIC:
        raise IntegrityError(f"{path} is not a model checkpoint")
    (hlen,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + hlen:
        raise IntegrityError(f"{path} is truncated inside the header")
    try:
        header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"{path} has a corrupt header") from exc
    return header, data[8 + hlen :]


def read_header(path) -> dict:
    header, _ = _read(path)
    return header


def load_model(path, expected_fingerprint: str | None = None) -> UdnnModel:
    """Load a checkpoint, checking version, size, digest and layout.

    When ``expected_fingerprint`` is given it must match the measurement
    model fingerprint the network was built against.
    """
    header, payload = _read(path)
    if header.get("format") != "ddunfold.udnn" or header.get("version") != FORMAT_VERSION:
        raise IntegrityError(f"unsupported checkpoint format/version: {header.get('format')} v{header.get('version')}")
    if tuple(header.get("block_order", ())) != BLOCK_ORDER:
        raise IntegrityError("unexpected weight block order")
    meta = header["meta"]
    n, m, k = int(meta["n"]), int(meta["m"]), int(meta["k_layers"])
    per_layer = 2 * m * n + 2 * m * m + 1
    if len(payload) != header["payload_bytes"] or len(payload) != 8 * k * per_layer:
        raise IntegrityError(f"payload holds {len(payload)} bytes, expected {8 * k * per_layer}")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise IntegrityError("payload digest mismatch")
    if expected_fingerprint is not None and meta.get("grid_fingerprint") != expected_fingerprint:
        raise IntegrityError(
            f"checkpoint was built for grid {meta.get('grid_fingerprint')}, not {expected_fingerprint}"
        )

    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    arrays, pos = [], 0
    for _ in range(k):
        blocks = []
        for shape in ((m, n), (m, n), (m, m), (m, m), (1,)):
            size = int(np.prod(shape))
            blocks.append(flat[pos : pos + size].reshape(shape).copy())
            pos += size
        arrays.append(tuple(blocks))
    return UdnnModel.from_arrays(arrays, meta)


def reference_forward_complex(model: UdnnModel, y: np.ndarray) -> np.ndarray:
    """Same network with native complex arithmetic; used as a cross-check."""
    x = np.zeros(model.m, dtype=np.complex128)
    for layer in model.layers:
        z = layer.w2.to_complex() @ x + layer.w1.to_complex() @ y
        x = _shrink(z.real, layer.theta) + 1j * _shrink(z.imag, layer.theta)
    return x

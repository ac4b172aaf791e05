"""Delay-Doppler measurement model for a multi-block OFDM link.

The received matched-filter outputs of ``n_blocks`` OFDM symbols over
``n_data`` sub-carriers are vectorized column-major (sub-carrier major), so
entry ``k * n_blocks + n`` belongs to block ``n`` and sub-carrier ``k``.
Each path contributes ``c * exp(i2pi(n f - k tau))`` at that entry.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import simpson

from .complex_core import (
    SplitComplexMatrix,
    SplitComplexVector,
    cmul_mat_vec,
    hermitian,
    largest_eigenvalue_gram,
)
from .errors import DomainError, NumericError, ShapeError

__all__ = [
    "OfdmConfig",
    "PathSet",
    "FrequencyGrid",
    "MeasurementModel",
    "steering_doppler",
    "steering_delay",
    "atom",
    "build_grid",
    "build_measurement_model",
    "synthesize_ground_truth_x",
    "synthesize_measurement",
    "synthesize_measurement_offgrid",
    "matched_filter_closed_form",
    "matched_filter_oracle",
    "snr_to_sigma",
    "signal_power",
]

COLUMN_ORDERING = "delay-major"
_GRID_ATOL = 1e-12


@dataclass(frozen=True)
class OfdmConfig:
    """OFDM frame layout.

    ``n_cp`` defaults to ``n_data`` so that the cyclic prefix covers the full
    normalized delay range ``[0, 1)``.
    """

    n_data: int = 4
    n_blocks: int = 4
    n_cp: int | None = None
    sample_period: float = 1e-6

    def __post_init__(self):
        if self.n_cp is None:
            object.__setattr__(self, "n_cp", self.n_data)
        if self.n_data < 1 or self.n_blocks < 1 or self.n_cp < 0:
            raise DomainError(f"invalid OFDM dimensions: {self}")
        if not self.sample_period > 0:
            raise DomainError("sample_period must be positive")

    @property
    def n_units(self) -> int:
        return self.n_data + self.n_cp

    @property
    def n(self) -> int:
        """Length of the vectorized measurement."""
        return self.n_data * self.n_blocks

    def normalize(self, raw_delay: float, raw_doppler: float) -> tuple[float, float]:
        """Map (seconds, hertz) to normalized (delay, Doppler)."""
        return (
            raw_delay / (self.n_data * self.sample_period),
            raw_doppler * self.n_units * self.sample_period,
        )

    def denormalize(self, tau: float, f: float) -> tuple[float, float]:
        return (
            tau * self.n_data * self.sample_period,
            f / (self.n_units * self.sample_period),
        )

    def to_dict(self) -> dict:
        return {
            "n_data": self.n_data,
            "n_blocks": self.n_blocks,
            "n_cp": self.n_cp,
            "sample_period": self.sample_period,
        }


def _check_unit_interval(value, name):
    v = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(v)) or np.any(v < 0.0) or np.any(v >= 1.0):
        raise DomainError(f"{name} must lie in [0, 1), got {value!r}")


@dataclass(frozen=True, eq=False)
class PathSet:
    """Ground-truth paths: complex gains with normalized delays and Dopplers."""

    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray

    def __post_init__(self):
        gains = np.atleast_1d(np.asarray(self.gains, dtype=np.complex128))
        delays = np.atleast_1d(np.asarray(self.delays, dtype=float))
        dopplers = np.atleast_1d(np.asarray(self.dopplers, dtype=float))
        if not (gains.shape == delays.shape == dopplers.shape) or gains.ndim != 1:
            raise ShapeError("gains, delays and dopplers must be 1-D of equal length")
        _check_unit_interval(delays, "delays")
        _check_unit_interval(dopplers, "dopplers")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "dopplers", dopplers)

    @classmethod
    def empty(cls) -> "PathSet":
        return cls(np.zeros(0, complex), np.zeros(0), np.zeros(0))

    @classmethod
    def from_raw(cls, paths_raw, config: OfdmConfig) -> "PathSet":
        """Build from ``(gain, delay_seconds, doppler_hz)`` triples."""
        gains, delays, dopplers = [], [], []
        for gain, raw_delay, raw_doppler in paths_raw:
            tau, f = config.normalize(raw_delay, raw_doppler)
            gains.append(gain)
            delays.append(tau)
            dopplers.append(f)
        return cls(np.array(gains, complex), np.array(delays), np.array(dopplers))

    @property
    def j(self) -> int:
        return self.gains.shape[0]

    def __len__(self) -> int:
        return self.j


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    delay_points: np.ndarray
    doppler_points: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delay_points, dtype=float)
        f = np.asarray(self.doppler_points, dtype=float)
        for name, pts in (("delay_points", d), ("doppler_points", f)):
            if pts.ndim != 1 or pts.size == 0:
                raise ShapeError(f"{name} must be a nonempty 1-D array")
            _check_unit_interval(pts, name)
            if np.any(np.diff(pts) <= 0):
                raise DomainError(f"{name} must be strictly increasing")
        object.__setattr__(self, "delay_points", d)
        object.__setattr__(self, "doppler_points", f)

    @property
    def g_delay(self) -> int:
        return self.delay_points.size

    @property
    def g_doppler(self) -> int:
        return self.doppler_points.size

    @property
    def m(self) -> int:
        return self.g_delay * self.g_doppler

    def column_index(self, i_delay: int, j_doppler: int) -> int:
        return i_delay * self.g_doppler + j_doppler

    def column_coords(self, m: int) -> tuple[float, float]:
        """(delay, Doppler) of dictionary column ``m``."""
        i, j = divmod(int(m), self.g_doppler)
        return float(self.delay_points[i]), float(self.doppler_points[j])

    def locate(self, tau: float, f: float) -> int:
        """Column index of an on-grid point; DomainError when off the grid."""
        i = np.flatnonzero(np.abs(self.delay_points - tau) <= _GRID_ATOL)
        j = np.flatnonzero(np.abs(self.doppler_points - f) <= _GRID_ATOL)
        if i.size == 0 or j.size == 0:
            raise DomainError(f"point (tau={tau}, f={f}) is not on the grid")
        return self.column_index(int(i[0]), int(j[0]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrequencyGrid):
            return NotImplemented
        return np.array_equal(self.delay_points, other.delay_points) and np.array_equal(
            self.doppler_points, other.doppler_points
        )


def steering_doppler(f: float, n_blocks: int) -> SplitComplexVector:
    """``[1, e^{i2pi f}, ..., e^{i2pi (n_blocks-1) f}]``."""
    _check_unit_interval(f, "f")
    phase = 2.0 * np.pi * f * np.arange(n_blocks)
    return SplitComplexVector(np.cos(phase), np.sin(phase))


def steering_delay(tau: float, n_data: int) -> SplitComplexVector:
    _check_unit_interval(tau, "tau")
    phase = 2.0 * np.pi * tau * np.arange(n_data)
    return SplitComplexVector(np.cos(phase), np.sin(phase))


def _atoms(taus, fs, config: OfdmConfig) -> np.ndarray:
    """Complex matrix whose columns are conj(d(tau)) kron s(f)."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    fs = np.atleast_1d(np.asarray(fs, dtype=float))
    k = np.repeat(np.arange(config.n_data), config.n_blocks)
    n = np.tile(np.arange(config.n_blocks), config.n_data)
    phase = 2.0 * np.pi * (np.outer(n, fs) - np.outer(k, taus))
    return np.exp(1j * phase)


def atom(tau: float, f: float, config: OfdmConfig) -> SplitComplexVector:
    """2-D sinusoid ``conj(d(tau)) kron s(f)`` of length ``n_data * n_blocks``."""
    d = steering_delay(tau, config.n_data)
    s = steering_doppler(f, config.n_blocks)
    re = np.kron(d.re, s.re) + np.kron(d.im, s.im)
    im = np.kron(d.re, s.im) - np.kron(d.im, s.re)
    return SplitComplexVector(re, im)


def build_grid(g_delay: int, g_doppler: int) -> FrequencyGrid:
    if g_delay < 1 or g_doppler < 1:
        raise DomainError("grid sizes must be at least 1")
    return FrequencyGrid(np.arange(g_delay) / g_delay, np.arange(g_doppler) / g_doppler)


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    config: OfdmConfig
    grid: FrequencyGrid
    symbols: SplitComplexVector
    dictionary: SplitComplexMatrix
    a_matrix: SplitComplexMatrix
    lipschitz: float
    ordering: str = field(default=COLUMN_ORDERING)

    @property
    def n(self) -> int:
        return self.a_matrix.rows

    @property
    def m(self) -> int:
        return self.a_matrix.cols

    @cached_property
    def a_hermitian(self) -> SplitComplexMatrix:
        return hermitian(self.a_matrix)

    def fingerprint(self) -> str:
        """Digest of everything that determines the dictionary and A."""
        h = hashlib.sha256()
        h.update(json.dumps(self.config.to_dict(), sort_keys=True).encode())
        h.update(self.ordering.encode())
        for arr in (self.grid.delay_points, self.grid.doppler_points, self.symbols.re, self.symbols.im):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def to_json(self) -> str:
        doc = {
            "format": "ddunfold.measurement",
            "version": 1,
            "config": self.config.to_dict(),
            "n": self.n,
            "m": self.m,
            "ordering": self.ordering,
            "delay_points": self.grid.delay_points.tolist(),
            "doppler_points": self.grid.doppler_points.tolist(),
            "symbols_re": self.symbols.re.tolist(),
            "symbols_im": self.symbols.im.tolist(),
            "lipschitz": self.lipschitz,
            "fingerprint": self.fingerprint(),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MeasurementModel":
        doc = json.loads(text)
        if doc.get("format") != "ddunfold.measurement" or doc.get("version") != 1:
            raise ValueError("not a version-1 measurement model document")
        if doc.get("ordering", COLUMN_ORDERING) != COLUMN_ORDERING:
            raise ValueError(f"unsupported column ordering {doc['ordering']!r}")
        grid = FrequencyGrid(doc["delay_points"], doc["doppler_points"])
        symbols = SplitComplexVector(doc["symbols_re"], doc["symbols_im"])
        return build_measurement_model(OfdmConfig(**doc["config"]), grid, symbols)


def build_measurement_model(
    config: OfdmConfig, grid: FrequencyGrid, symbols: SplitComplexVector | None = None
) -> MeasurementModel:
    """Dictionary of grid atoms and ``A = diag(symbols) Phi``.

    Column ``i * g_doppler + j`` holds the atom at
    ``(delay_points[i], doppler_points[j])``. Symbols default to all ones.
    """
    n = config.n
    if symbols is None:
        symbols = SplitComplexVector(np.ones(n), np.zeros(n))
    if symbols.re.shape != (n,):
        raise ShapeError(f"expected {n} symbols, got shape {symbols.re.shape}")

    taus = np.repeat(grid.delay_points, grid.g_doppler)
    fs = np.tile(grid.doppler_points, grid.g_delay)
    phi = SplitComplexMatrix.from_complex(_atoms(taus, fs, config))

    br, bi = symbols.re[:, None], symbols.im[:, None]
    a = SplitComplexMatrix(br * phi.re - bi * phi.im, br * phi.im + bi * phi.re)
    return MeasurementModel(config, grid, symbols, phi, a, largest_eigenvalue_gram(a))


def synthesize_ground_truth_x(paths: PathSet, grid: FrequencyGrid) -> SplitComplexVector:
    """Sparse grid vector holding each on-grid path's gain at its column."""
    x = np.zeros(grid.m, dtype=np.complex128)
    used = set()
    for c, tau, f in zip(paths.gains, paths.delays, paths.dopplers):
        col = grid.locate(tau, f)
        if col in used:
            raise DomainError(f"two paths share grid column {col}")
        used.add(col)
        x[col] = c
    return SplitComplexVector.from_complex(x)


def _noise(shape, sigma_w: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    scale = sigma_w / np.sqrt(2.0)
    return scale * rng.standard_normal(shape), scale * rng.standard_normal(shape)


def synthesize_measurement(
    x: SplitComplexVector, model: MeasurementModel, sigma_w: float, rng_seed
) -> SplitComplexVector:
    """``A x + w`` with circular Gaussian noise of total variance ``sigma_w**2``.

    ``rng_seed`` is an integer seed or a ``numpy.random.Generator``.
    """
    if sigma_w < 0:
        raise DomainError("sigma_w must be nonnegative")
    if x.length != model.m:
        raise ShapeError(f"x has length {x.length}, model expects {model.m}")
    y = cmul_mat_vec(model.a_matrix, x)
    if sigma_w == 0:
        return y
    rng = np.random.default_rng(rng_seed)
    wr, wi = _noise(y.re.shape, sigma_w, rng)
    return SplitComplexVector(y.re + wr, y.im + wi)


def synthesize_measurement_offgrid(
    paths: PathSet, model: MeasurementModel, sigma_w: float, rng_seed
) -> SplitComplexVector:
    """Measurement straight from the path atoms, with no grid snapping."""
    if sigma_w < 0:
        raise DomainError("sigma_w must be nonnegative")
    phi = _atoms(paths.delays, paths.dopplers, model.config) @ paths.gains
    y = model.symbols.to_complex() * phi
    if sigma_w > 0:
        wr, wi = _noise(y.shape, sigma_w, np.random.default_rng(rng_seed))
        y = y + wr + 1j * wi
    return SplitComplexVector.from_complex(y)


def matched_filter_closed_form(paths_raw, config: OfdmConfig, symbols_block) -> np.ndarray:
    """Block-by-sub-carrier outputs under the constant-phase Doppler approximation."""
    B = np.asarray(symbols_block, dtype=np.complex128)
    n = np.arange(config.n_blocks)[:, None]
    k = np.arange(config.n_data)[None, :]
    Y = np.zeros((config.n_blocks, config.n_data), dtype=np.complex128)
    for gain, raw_delay, raw_doppler in paths_raw:
        tau, f = config.normalize(raw_delay, raw_doppler)
        Y += gain * np.exp(2j * np.pi * (n * f - k * tau))
    return B * Y


def matched_filter_oracle(paths_raw, config: OfdmConfig, symbols_block, n_quad: int = 1024) -> np.ndarray:
    """Matched-filter outputs by composite Simpson quadrature.

    Keeps the time-varying Doppler phase inside the integral over each
    block's data window, so inter-carrier leakage is included.
    """
    if n_quad < 64:
        raise DomainError("n_quad must be at least 64")
    B = np.asarray(symbols_block, dtype=np.complex128)
    if B.shape != (config.n_blocks, config.n_data):
        raise ShapeError(f"symbols_block must be {(config.n_blocks, config.n_data)}, got {B.shape}")
    T = config.sample_period
    nd_t = config.n_data * T
    cp_t = config.n_cp * T
    for _, raw_delay, _ in paths_raw:
        if raw_delay < 0 or (raw_delay > 0 and raw_delay >= cp_t):
            raise DomainError(f"raw delay {raw_delay} s must be in [0, CP duration {cp_t} s)")

    n_quad += n_quad % 2
    s = np.linspace(0.0, 1.0, n_quad + 1)
    q = np.arange(config.n_data)
    Y = np.zeros((config.n_blocks, config.n_data), dtype=np.complex128)
    for n in range(config.n_blocks):
        t = n * config.n_units * T + s * nd_t
        # kernel[k, t] = sum_q b_n(q) exp(i2pi q (t - delay)/(N_d T)) exp(-i2pi k t/(N_d T))
        carrier = np.exp(-2j * np.pi * np.outer(q, t) / nd_t)
        for gain, raw_delay, raw_doppler in paths_raw:
            tx = (B[n][:, None] * np.exp(2j * np.pi * np.outer(q, t - raw_delay) / nd_t)).sum(axis=0)
            integrand = gain * np.exp(2j * np.pi * raw_doppler * t) * tx * carrier
            Y[n] += simpson(integrand, x=t, axis=-1) / nd_t
    if not np.all(np.isfinite(Y)):
        raise NumericError("quadrature produced non-finite values")
    return Y


def signal_power(y: SplitComplexVector) -> float:
    """Mean squared magnitude per entry."""
    return float(np.mean(y.re**2 + y.im**2))


def snr_to_sigma(snr_db: float, signal_power: float) -> float:
    if not signal_power > 0:
        raise DomainError("signal power must be positive")
    return float(np.sqrt(signal_power / 10.0 ** (snr_db / 10.0)))

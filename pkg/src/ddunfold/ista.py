"""ISTA for the complex LASSO with a per-part soft threshold.

The l1 penalty is taken over the stacked real and imaginary parts,
``||x||_1 = sum(|Re x_i| + |Im x_i|)``, which is the penalty whose proximal
map is the per-part soft threshold used by the unfolded network.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .complex_core import SplitComplexVector, cmul_mat_vec
from .errors import DomainError, ShapeError
from .signal_model import MeasurementModel

__all__ = [
    "IstaConfig",
    "IstaResult",
    "soft_threshold",
    "ista_step",
    "ista_solve",
    "ista_k_steps",
    "lasso_objective",
    "select_lambda",
    "kkt_violation",
    "NOISELESS_LAMBDA",
]

NOISELESS_LAMBDA = 0.01


@dataclass(frozen=True)
class IstaConfig:
    lam: float
    step: float
    tol: float = 1e-6
    max_iter: int = 100_000

    def __post_init__(self):
        if self.lam < 0:
            raise DomainError("lambda must be nonnegative")
        if not self.step > 0 or not self.tol > 0 or self.max_iter < 1:
            raise DomainError(f"invalid ISTA settings: {self}")

    @classmethod
    def for_model(cls, model: MeasurementModel, lam: float, **kw) -> "IstaConfig":
        """Step ``1/L`` from the model's Lipschitz constant."""
        return cls(lam=lam, step=1.0 / model.lipschitz, **kw)

    @property
    def theta(self) -> float:
        return self.lam * self.step


@dataclass(frozen=True, eq=False)
class IstaResult:
    x_hat: SplitComplexVector
    iterations: int
    converged: bool
    final_objective: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "x_hat_re": self.x_hat.re.tolist(),
                "x_hat_im": self.x_hat.im.tolist(),
                "iterations": self.iterations,
                "converged": self.converged,
                "final_objective": self.final_objective,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "IstaResult":
        d = json.loads(text)
        return cls(
            SplitComplexVector(d["x_hat_re"], d["x_hat_im"]),
            int(d["iterations"]),
            bool(d["converged"]),
            float(d["final_objective"]),
        )


def _shrink(v: np.ndarray, theta: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def soft_threshold(z: SplitComplexVector, theta: float) -> SplitComplexVector:
    """Shrink real and imaginary parts independently by ``theta``."""
    if theta < 0:
        raise DomainError("theta must be nonnegative")
    return SplitComplexVector(_shrink(z.re, theta), _shrink(z.im, theta))


def lasso_objective(x: SplitComplexVector, y: SplitComplexVector, model: MeasurementModel, lam: float) -> float:
    r = cmul_mat_vec(model.a_matrix, x)
    rr, ri = y.re - r.re, y.im - r.im
    fit = 0.5 * (np.sum(rr * rr) + np.sum(ri * ri))
    return float(fit + lam * (np.sum(np.abs(x.re)) + np.sum(np.abs(x.im))))


def _check_shapes(x: SplitComplexVector, y: SplitComplexVector, model: MeasurementModel):
    if x.length != model.m or y.length != model.n:
        raise ShapeError(f"expected x of length {model.m} and y of length {model.n}, got {x.length} and {y.length}")


def _step_arrays(xr, xi, yr, yi, Ar, Ai, Ahr, Ahi, step, theta):
    # residual A x - y
    rr = Ar @ xr - Ai @ xi - yr
    ri = Ar @ xi + Ai @ xr - yi
    zr = xr - step * (Ahr @ rr - Ahi @ ri)
    zi = xi - step * (Ahr @ ri + Ahi @ rr)
    return _shrink(zr, theta), _shrink(zi, theta)


def ista_step(x_prev: SplitComplexVector, y: SplitComplexVector, model: MeasurementModel, cfg: IstaConfig) -> SplitComplexVector:
    """One gradient step on the quadratic followed by the soft threshold."""
    _check_shapes(x_prev, y, model)
    A, Ah = model.a_matrix, model.a_hermitian
    xr, xi = _step_arrays(x_prev.re, x_prev.im, y.re, y.im, A.re, A.im, Ah.re, Ah.im, cfg.step, cfg.theta)
    return SplitComplexVector(xr, xi)


def ista_k_steps(y: SplitComplexVector, model: MeasurementModel, cfg: IstaConfig, k: int) -> SplitComplexVector:
    """Exactly ``k`` ISTA iterations from zero, with no stopping test."""
    x = SplitComplexVector.zeros(model.m)
    for _ in range(k):
        x = ista_step(x, y, model, cfg)
    return x


def ista_solve(y: SplitComplexVector, model: MeasurementModel, cfg: IstaConfig, callback=None) -> IstaResult:
    """Run ISTA from zero until the relative iterate change drops below ``cfg.tol``.

    Stops when ``||x_k - x_{k-1}|| <= tol * max(||x_{k-1}||, 1e-12)``.
    ``callback(k, x_k)`` is invoked after every iteration when given.
    """
    _check_shapes(SplitComplexVector.zeros(model.m), y, model)
    A, Ah = model.a_matrix, model.a_hermitian
    Ar, Ai, Ahr, Ahi = A.re, A.im, Ah.re, Ah.im
    yr, yi = y.re, y.im
    step, theta, tol = cfg.step, cfg.theta, cfg.tol

    xr = np.zeros(model.m)
    xi = np.zeros(model.m)
    prev_norm = 0.0
    converged = False
    it = 0
    while it < cfg.max_iter:
        it += 1
        nr, ni = _step_arrays(xr, xi, yr, yi, Ar, Ai, Ahr, Ahi, step, theta)
        dr, di = nr - xr, ni - xi
        change = math.sqrt(float(dr @ dr + di @ di))
        xr, xi = nr, ni
        if callback is not None:
            callback(it, SplitComplexVector(xr, xi))
        if change <= tol * max(prev_norm, 1e-12):
            converged = True
            break
        prev_norm = math.sqrt(float(xr @ xr + xi @ xi))

    x_hat = SplitComplexVector(xr, xi)
    return IstaResult(x_hat, it, converged, lasso_objective(x_hat, y, model, cfg.lam))


def kkt_violation(x: SplitComplexVector, y: SplitComplexVector, model: MeasurementModel, lam: float) -> dict:
    """Largest breach of the per-part LASSO optimality conditions at ``x``.

    With ``g = A^H (A x - y)`` split into real and imaginary lines: a nonzero
    part needs ``g + lam * sign(x) = 0`` (``active``), a zero part needs
    ``|g| <= lam`` (``inactive`` is how far ``|g|`` exceeds ``lam``, or 0).
    """
    _check_shapes(x, y, model)
    r = cmul_mat_vec(model.a_matrix, x)
    g = cmul_mat_vec(model.a_hermitian, SplitComplexVector(r.re - y.re, r.im - y.im))
    active = inactive = 0.0
    for gp, xp in ((g.re, x.re), (g.im, x.im)):
        on = xp != 0
        if on.any():
            active = max(active, float(np.max(np.abs(gp[on] + lam * np.sign(xp[on])))))
        if (~on).any():
            inactive = max(inactive, float(np.max(np.abs(gp[~on]))) - lam)
    return {"active": active, "inactive": max(inactive, 0.0)}


def select_lambda(mode: str, sigma_w: float = 0.0, n: int = 16) -> float:
    """Weight factor: 0.01 without noise, ``sigma_w * sqrt(2 ln n)`` with noise."""
    if n < 2:
        raise DomainError("n must be at least 2")
    if sigma_w < 0:
        raise DomainError("sigma_w must be nonnegative")
    if mode == "noiseless":
        return NOISELESS_LAMBDA
    if mode == "noisy":
        return float(sigma_w * math.sqrt(2.0 * math.log(n)))
    raise DomainError(f"unknown mode {mode!r}")

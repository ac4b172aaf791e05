"""Complex linear algebra on split real/imaginary storage.

Every complex array is held as two real float64 arrays of the same shape.
Vectors may carry leading batch axes; the last axis is the vector index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, NumericError, ShapeError

__all__ = [
    "SplitComplexVector",
    "SplitComplexMatrix",
    "cmul_mat_vec",
    "hermitian",
    "cmat_mul",
    "largest_eigenvalue_gram",
    "cvec_axpby",
    "norm2",
]


def _as_real(a) -> np.ndarray:
    # read-only view; no copy when the input is already float64
    arr = np.asarray(a, dtype=np.float64).view()
    if not np.isfinite(arr).all():
        raise NumericError("non-finite entry in complex storage")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class SplitComplexVector:
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re, im = _as_real(self.re), _as_real(self.im)
        if re.shape != im.shape:
            raise ShapeError(f"re shape {re.shape} != im shape {im.shape}")
        if re.ndim < 1:
            raise ShapeError("a vector needs at least one axis")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def from_complex(cls, z) -> "SplitComplexVector":
        z = np.asarray(z, dtype=np.complex128)
        return cls(z.real, z.imag)

    @classmethod
    def zeros(cls, n: int) -> "SplitComplexVector":
        return cls(np.zeros(n), np.zeros(n))

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    @property
    def length(self) -> int:
        return self.re.shape[-1]

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other) -> bool:
        if not isinstance(other, SplitComplexVector):
            return NotImplemented
        return np.array_equal(self.re, other.re) and np.array_equal(self.im, other.im)

    def __repr__(self) -> str:
        return f"SplitComplexVector(length={self.length})"


@dataclass(frozen=True, eq=False)
class SplitComplexMatrix:
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re, im = _as_real(self.re), _as_real(self.im)
        if re.shape != im.shape:
            raise ShapeError(f"re shape {re.shape} != im shape {im.shape}")
        if re.ndim != 2:
            raise ShapeError(f"a matrix needs exactly two axes, got {re.ndim}")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def from_complex(cls, z) -> "SplitComplexMatrix":
        z = np.asarray(z, dtype=np.complex128)
        return cls(z.real, z.imag)

    @classmethod
    def identity(cls, n: int) -> "SplitComplexMatrix":
        return cls(np.eye(n), np.zeros((n, n)))

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    @property
    def shape(self) -> tuple[int, int]:
        return self.re.shape

    @property
    def rows(self) -> int:
        return self.re.shape[0]

    @property
    def cols(self) -> int:
        return self.re.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SplitComplexMatrix):
            return NotImplemented
        return np.array_equal(self.re, other.re) and np.array_equal(self.im, other.im)

    def __repr__(self) -> str:
        return f"SplitComplexMatrix(shape={self.shape})"


def cmul_mat_vec(A: SplitComplexMatrix, v: SplitComplexVector) -> SplitComplexVector:
    """Complex matrix-vector product ``A v``.

    A batched ``v`` of shape ``(..., cols)`` returns shape ``(..., rows)``.
    """
    if A.cols != v.length:
        raise ShapeError(f"matrix has {A.cols} columns, vector has length {v.length}")
    re = v.re @ A.re.T - v.im @ A.im.T
    im = v.im @ A.re.T + v.re @ A.im.T
    return SplitComplexVector(re, im)


def cmat_mul(A: SplitComplexMatrix, B: SplitComplexMatrix) -> SplitComplexMatrix:
    if A.cols != B.rows:
        raise ShapeError(f"cannot multiply {A.shape} by {B.shape}")
    return SplitComplexMatrix(A.re @ B.re - A.im @ B.im, A.re @ B.im + A.im @ B.re)


def hermitian(A: SplitComplexMatrix) -> SplitComplexMatrix:
    """Conjugate transpose."""
    return SplitComplexMatrix(A.re.T, -A.im.T)


def cvec_axpby(alpha, x: SplitComplexVector, beta, y: SplitComplexVector) -> SplitComplexVector:
    """``alpha*x + beta*y`` with complex scalars given as ``(re, im)`` pairs."""
    if x.re.shape != y.re.shape:
        raise ShapeError(f"vector shapes differ: {x.re.shape} vs {y.re.shape}")
    ar, ai = alpha
    br, bi = beta
    re = ar * x.re - ai * x.im + br * y.re - bi * y.im
    im = ar * x.im + ai * x.re + br * y.im + bi * y.re
    return SplitComplexVector(re, im)


def norm2(x: SplitComplexVector) -> float:
    return float(np.sqrt(np.sum(x.re * x.re) + np.sum(x.im * x.im)))


def largest_eigenvalue_gram(
    A: SplitComplexMatrix, tol: float = 1e-10, max_iter: int = 5000, seed: int = 0
) -> float:
    """Largest eigenvalue of ``A^H A`` by power iteration.

    Iterates ``u <- A^H A u / ||A^H A u||`` and stops once the relative
    change between successive Rayleigh quotients drops below ``tol``.
    The start vector is drawn from ``seed`` so the result is reproducible.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    if not (np.any(A.re) or np.any(A.im)):
        raise DomainError("power iteration needs a nonzero matrix")

    Ah = hermitian(A)
    rng = np.random.default_rng(seed)
    u = SplitComplexVector(rng.standard_normal(A.cols), rng.standard_normal(A.cols))
    u = cvec_axpby((1.0 / norm2(u), 0.0), u, (0.0, 0.0), u)

    prev = None
    for _ in range(max_iter):
        Au = cmul_mat_vec(A, u)
        # Rayleigh quotient u^H A^H A u with ||u|| = 1
        rq = norm2(Au) ** 2
        w = cmul_mat_vec(Ah, Au)
        wn = norm2(w)
        if wn == 0.0:
            # start vector fell in the null space
            u = SplitComplexVector(rng.standard_normal(A.cols), rng.standard_normal(A.cols))
            u = cvec_axpby((1.0 / norm2(u), 0.0), u, (0.0, 0.0), u)
            prev = None
            continue
        u = SplitComplexVector(w.re / wn, w.im / wn)
        if prev is not None and abs(rq - prev) <= tol * max(abs(rq), np.finfo(float).tiny):
            return float(rq)
        prev = rq
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations", last=prev
    )

import json

import numpy as np
import pytest

from conftest import crandn
from ddunfold.complex_core import SplitComplexVector, cmul_mat_vec
from ddunfold.errors import DomainError, ShapeError
from ddunfold.ista import (
    IstaConfig,
    IstaResult,
    ista_k_steps,
    ista_solve,
    ista_step,
    kkt_violation,
    lasso_objective,
    select_lambda,
    soft_threshold,
)


def sparse_x(rng, j=2, m=36):
    x = np.zeros(m, complex)
    x[rng.choice(m, j, replace=False)] = rng.uniform(-1, 1, j) + 1j * rng.uniform(-1, 1, j)
    return x


def measure(model, x):
    return cmul_mat_vec(model.a_matrix, SplitComplexVector.from_complex(x))


def real_lasso_cd(A, y, lam, sweeps=20000, tol=1e-14):
    """Coordinate descent on the stacked real form [[Ar, -Ai], [Ai, Ar]]."""
    R = np.block([[A.real, -A.imag], [A.imag, A.real]])
    b = np.concatenate([y.real, y.imag])
    x = np.zeros(R.shape[1])
    col_sq = (R * R).sum(axis=0)
    r = b.copy()
    for _ in range(sweeps):
        biggest = 0.0
        for j in range(R.shape[1]):
            old = x[j]
            rho = R[:, j] @ r + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            if new != old:
                r -= R[:, j] * (new - old)
                x[j] = new
                biggest = max(biggest, abs(new - old))
        if biggest < tol:
            break
    m = R.shape[1] // 2
    return x[:m] + 1j * x[m:]


def test_soft_threshold_examples():
    out = soft_threshold(SplitComplexVector([1.2], [-0.3]), 0.5)
    assert out.re[0] == pytest.approx(0.7) and out.im[0] == 0.0
    z = SplitComplexVector([0.4, -2.0], [1.0, -0.1])
    assert soft_threshold(z, 0.0) == z
    assert soft_threshold(SplitComplexVector([0.2, -0.3], [0.3, 0.0]), 0.3) == SplitComplexVector.zeros(2)
    with pytest.raises(DomainError):
        soft_threshold(z, -1.0)


def test_config_from_model(model):
    cfg = IstaConfig.for_model(model, 0.01)
    assert cfg.step * model.lipschitz <= 1 + 1e-9
    assert cfg.theta == pytest.approx(0.01 / model.lipschitz)
    with pytest.raises(DomainError):
        IstaConfig(lam=-1.0, step=0.1)
    with pytest.raises(DomainError):
        IstaConfig(lam=1.0, step=0.0)


def test_one_step_annihilation(model, rng):
    y = measure(model, sparse_x(rng))
    ahy = cmul_mat_vec(model.a_hermitian, y)
    big = 1.01 * max(np.abs(ahy.re).max(), np.abs(ahy.im).max())
    cfg = IstaConfig.for_model(model, big)
    assert ista_step(SplitComplexVector.zeros(36), y, model, cfg) == SplitComplexVector.zeros(36)


def test_step_without_threshold(model, rng):
    y = measure(model, sparse_x(rng))
    cfg = IstaConfig.for_model(model, 0.0)
    got = ista_step(SplitComplexVector.zeros(36), y, model, cfg).to_complex()
    np.testing.assert_allclose(got, cfg.step * model.a_matrix.to_complex().conj().T @ y.to_complex(), atol=1e-15)


def test_step_matches_scalar_loop(model, rng):
    A = model.a_matrix.to_complex()
    x0, y = crandn(rng, 36) * 0.1, crandn(rng, 16)
    cfg = IstaConfig.for_model(model, 0.3)
    got = ista_step(SplitComplexVector.from_complex(x0), SplitComplexVector.from_complex(y), model, cfg).to_complex()

    def shrink(v, t):
        return np.sign(v) * max(abs(v) - t, 0.0)

    for i in range(36):
        grad = sum(np.conj(A[r, i]) * (sum(A[r, j] * x0[j] for j in range(36)) - y[r]) for r in range(16))
        z = x0[i] - cfg.step * grad
        want = shrink(z.real, cfg.theta) + 1j * shrink(z.imag, cfg.theta)
        assert abs(got[i] - want) <= 1e-12


def test_shape_errors(model):
    cfg = IstaConfig.for_model(model, 0.01)
    with pytest.raises(ShapeError):
        ista_step(SplitComplexVector.zeros(5), SplitComplexVector.zeros(16), model, cfg)
    with pytest.raises(ShapeError):
        ista_solve(SplitComplexVector.zeros(15), model, cfg)


def test_zero_measurement(model):
    res = ista_solve(SplitComplexVector.zeros(16), model, IstaConfig.for_model(model, 0.01))
    assert res.x_hat == SplitComplexVector.zeros(36)
    assert res.iterations == 1 and res.converged


def test_single_path_support(model):
    rng = np.random.default_rng(11)
    for _ in range(5):
        x = sparse_x(rng, j=1)
        res = ista_solve(measure(model, x), model, IstaConfig.for_model(model, 0.01))
        xh = res.x_hat.to_complex()
        mag = np.abs(xh)
        assert set(np.flatnonzero(mag > 0.1 * mag.max())) == set(np.flatnonzero(x))
        assert np.max(np.abs(xh - x)) <= 0.01 * 36 / model.lipschitz * 2


def test_matches_coordinate_descent(model):
    rng = np.random.default_rng(3)
    A = model.a_matrix.to_complex()
    for lam in (0.05, 0.5):
        x = sparse_x(rng, j=2)
        w = 0.05 * crandn(rng, 16)
        y = A @ x + w
        cfg = IstaConfig.for_model(model, lam, tol=1e-12)
        res = ista_solve(SplitComplexVector.from_complex(y), model, cfg)
        oracle = real_lasso_cd(A, y, lam)
        ys = SplitComplexVector.from_complex(y)
        best = lasso_objective(SplitComplexVector.from_complex(oracle), ys, model, lam)
        assert abs(res.final_objective - best) <= 1e-10 * best
        # minimizers need not be unique on this dictionary, but the fit A x is
        assert np.max(np.abs(A @ res.x_hat.to_complex() - A @ oracle)) <= 1e-6


def test_result_bookkeeping(model, rng):
    y = measure(model, sparse_x(rng))
    cfg = IstaConfig.for_model(model, 0.01, max_iter=50)
    res = ista_solve(y, model, cfg)
    assert res.iterations == 50 and not res.converged
    assert res.final_objective == pytest.approx(lasso_objective(res.x_hat, y, model, 0.01), abs=1e-10)
    back = IstaResult.from_json(res.to_json())
    assert back.x_hat == res.x_hat and back.iterations == 50
    assert json.loads(res.to_json())["converged"] is False


def test_stopping_rule_holds_at_exit(model, rng):
    y = measure(model, sparse_x(rng))
    cfg = IstaConfig.for_model(model, 0.01)
    xs = []
    res = ista_solve(y, model, cfg, callback=lambda k, x: xs.append(x.to_complex()))
    assert res.converged and len(xs) == res.iterations
    assert np.linalg.norm(xs[-1] - xs[-2]) <= cfg.tol * np.linalg.norm(xs[-2])


def test_objective_never_increases(model, rng):
    y = measure(model, sparse_x(rng))
    objs = []
    ista_solve(y, model, IstaConfig.for_model(model, 0.01, max_iter=400), callback=lambda k, x: objs.append(lasso_objective(x, y, model, 0.01)))
    assert np.all(np.diff(objs) <= 1e-12)


def test_k_steps_is_plain_iteration(model, rng):
    y = measure(model, sparse_x(rng))
    cfg = IstaConfig.for_model(model, 1.0)
    x = SplitComplexVector.zeros(36)
    for _ in range(3):
        x = ista_step(x, y, model, cfg)
    assert ista_k_steps(y, model, cfg, 3) == x
    assert ista_k_steps(y, model, cfg, 0) == SplitComplexVector.zeros(36)


def test_select_lambda():
    assert select_lambda("noiseless") == 0.01
    assert select_lambda("noisy", 1.0, 16) == pytest.approx(2.35482, abs=1e-5)
    assert select_lambda("noisy", 0.0, 16) == 0.0
    with pytest.raises(DomainError):
        select_lambda("other")
    with pytest.raises(DomainError):
        select_lambda("noisy", -1.0)


def test_kkt_at_exact_minimizer(model):
    # oracle minimizer from coordinate descent satisfies the conditions tightly
    rng = np.random.default_rng(21)
    A = model.a_matrix.to_complex()
    y = A @ sparse_x(rng) + 0.1 * crandn(rng, 16)
    oracle = real_lasso_cd(A, y, 0.3)
    v = kkt_violation(SplitComplexVector.from_complex(oracle), SplitComplexVector.from_complex(y), model, 0.3)
    assert v["active"] <= 1e-9 and v["inactive"] <= 1e-9


def test_kkt_flags_non_minimizer(model):
    rng = np.random.default_rng(22)
    y = SplitComplexVector.from_complex(crandn(rng, 16))
    v = kkt_violation(SplitComplexVector.zeros(36), y, model, 1e-3)
    assert v["inactive"] > 0.1 and v["active"] == 0.0

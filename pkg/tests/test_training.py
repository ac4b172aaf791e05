import numpy as np
import pytest

from conftest import crandn
from ddunfold.complex_core import SplitComplexMatrix, SplitComplexVector, cmul_mat_vec
from ddunfold.errors import DomainError, IntegrityError, ShapeError
from ddunfold.ista import IstaConfig, ista_k_steps
from ddunfold.network import LayerParams, UdnnModel, forward_traced, init_from_ista
from ddunfold.training import (
    MSE_FLOOR_DB,
    AdamState,
    Dataset,
    TrainConfig,
    TrainingLog,
    adam_step,
    backward,
    batch_gradients,
    evaluate_mse_db,
    finite_difference_check,
    generate_dataset,
    load_dataset,
    loss_mse_split,
    make_splits,
    save_dataset,
    train,
)
from test_network import random_net

SMALL = TrainConfig(n_samples=2000, epochs=2, batch_size=64)


def test_config_validation():
    with pytest.raises(DomainError):
        TrainConfig(batch_size=0)
    with pytest.raises(DomainError):
        TrainConfig(beta1=1.0)
    with pytest.raises(DomainError):
        TrainConfig(val_fraction=0.0)
    assert TrainConfig(noise_mode="20").noise_mode == 20.0


def test_single_column_sample(model):
    ds = generate_dataset(model, TrainConfig(n_samples=1, j_max=1))
    x = ds.x_re[0] + 1j * ds.x_im[0]
    (col,) = np.flatnonzero(x)
    y = ds.y_re[0] + 1j * ds.y_im[0]
    np.testing.assert_allclose(y, x[col] * model.a_matrix.to_complex()[:, col], atol=1e-14)


def test_dataset_determinism_and_splits(model):
    a = generate_dataset(model, SMALL, n_samples=50)
    b = generate_dataset(model, SMALL, n_samples=50)
    np.testing.assert_array_equal(a.y_re, b.y_re)
    np.testing.assert_array_equal(a.x_im, b.x_im)
    tr, va = make_splits(model, SMALL)
    assert (len(tr), len(va)) == (1900, 100)
    assert not np.array_equal(tr.x_re[:100], va.x_re)
    assert set(np.unique(tr.j_paths)) <= {1, 2}


def test_gain_moments(model):
    ds = generate_dataset(model, TrainConfig(n_samples=100_000, j_max=1))
    g = (ds.x_re + 1j * ds.x_im)[ds.x_re ** 2 + ds.x_im ** 2 > 0]
    assert g.size == 100_000
    assert abs(g.real.mean()) < 0.01 and abs(g.imag.mean()) < 0.01
    assert g.real.var() == pytest.approx(1 / 3, rel=0.05)
    assert g.imag.var() == pytest.approx(1 / 3, rel=0.05)


def test_noisy_dataset_snr(model):
    cfg = TrainConfig(n_samples=400, noise_mode=10.0)
    ds = generate_dataset(model, cfg, j_fixed=2)
    clean = generate_dataset(model, TrainConfig(n_samples=400), j_fixed=2)
    np.testing.assert_array_equal(ds.x_re, clean.x_re)
    noise = (ds.y_re - clean.y_re) + 1j * (ds.y_im - clean.y_im)
    power = np.mean(clean.y_re ** 2 + clean.y_im ** 2, axis=1)
    ratio = np.mean(np.abs(noise) ** 2) / np.mean(power / 10.0)
    assert ratio == pytest.approx(1.0, rel=0.1)
    # another stream keeps the channel but redraws the noise
    other = generate_dataset(model, cfg, j_fixed=2, noise_stream=1)
    np.testing.assert_array_equal(other.x_re, ds.x_re)
    assert not np.array_equal(other.y_re, ds.y_re)
    assert len(ds.subset(np.arange(10)).meta["sigma_w"]) == 10


def test_dataset_guards(model):
    with pytest.raises(DomainError):
        generate_dataset(model, SMALL, n_samples=1, j_fixed=40)
    with pytest.raises(ShapeError):
        Dataset(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((2, 4)), np.zeros(3, int))


def test_dataset_file_round_trip(model, tmp_path):
    ds = generate_dataset(model, SMALL, n_samples=20)
    path = save_dataset(ds, tmp_path / "ds.bin")
    back = load_dataset(path, expected_fingerprint=model.fingerprint())
    np.testing.assert_array_equal(back.y_im, ds.y_im)
    np.testing.assert_array_equal(back.j_paths, ds.j_paths)
    with pytest.raises(IntegrityError):
        load_dataset(path, expected_fingerprint="0" * 16)
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(IntegrityError):
        load_dataset(path)


def test_loss_examples():
    x = SplitComplexVector([1.0, 2.0], [0.5, -1.0])
    assert loss_mse_split(x, x) == 0.0
    assert loss_mse_split(SplitComplexVector([4.0, 2.0], [4.5, -1.0]), x) == 25.0
    rng = np.random.default_rng(0)
    a, b = crandn(rng, 5), crandn(rng, 5)
    assert loss_mse_split(SplitComplexVector.from_complex(a), SplitComplexVector.from_complex(b)) == pytest.approx(np.linalg.norm(a - b) ** 2)


def test_dead_network_has_zero_gradient(model):
    base = init_from_ista(model, 3)
    net = UdnnModel(tuple(LayerParams(l.w1, l.w2, 1e6) for l in base.layers), base.meta)
    y = SplitComplexVector.from_complex(crandn(np.random.default_rng(1), 16))
    x_hat, trace = forward_traced(net, y)
    grads = backward(net, trace, y, SplitComplexVector.zeros(36))
    assert not np.any(grads.flat())


def test_single_linear_layer_gradient(model):
    rng = np.random.default_rng(2)
    w1 = crandn(rng, 36, 16) * 0.1
    net = UdnnModel((LayerParams(SplitComplexMatrix.from_complex(w1), SplitComplexMatrix(np.zeros((36, 36)), np.zeros((36, 36))), 0.0),))
    y, x = crandn(rng, 16), crandn(rng, 36)
    ys, xs = SplitComplexVector.from_complex(y), SplitComplexVector.from_complex(x)
    _, trace = forward_traced(net, ys)
    d_w1r, d_w1i = backward(net, trace, ys, xs).layers[0][:2]
    # derivative w.r.t. Re W1 plus i times derivative w.r.t. Im W1
    want = 2.0 * np.outer(w1 @ y - x, y.conj())
    np.testing.assert_allclose(d_w1r + 1j * d_w1i, want, atol=1e-10)


def test_backward_matches_finite_differences(model):
    net = random_net(model, seed=4)
    x = np.zeros(36, complex)
    x[[3, 20]] = [0.5 - 0.2j, -0.3 + 0.9j]
    y = cmul_mat_vec(model.a_matrix, SplitComplexVector.from_complex(x))
    res = finite_difference_check(net, y, SplitComplexVector.from_complex(x))
    assert res["checked"] > 1000
    assert res["max_rel_error"] <= 1e-5


def test_backward_rejects_foreign_trace(model):
    net = random_net(model)
    y = SplitComplexVector.from_complex(crandn(np.random.default_rng(0), 16))
    _, trace = forward_traced(net, y)
    z = SplitComplexVector.from_complex(crandn(np.random.default_rng(1), 16))
    with pytest.raises(IntegrityError):
        backward(net, trace, z, SplitComplexVector.zeros(36))


def test_batch_gradient_is_mean_of_samples(model):
    net = random_net(model)
    ds = generate_dataset(model, SMALL, n_samples=4)
    loss, grads = batch_gradients(net.to_arrays(), ds.y_re, ds.y_im, ds.x_re, ds.x_im)
    parts = []
    for p in range(4):
        s = ds[p]
        _, trace = forward_traced(net, s.y)
        parts.append(backward(net, trace, s.y, s.x).flat())
    flat = np.concatenate([np.ravel(g) for layer in grads for g in layer])
    np.testing.assert_allclose(flat, np.mean(parts, axis=0), atol=1e-13)


def scalar_params(v):
    return [(np.array([[v]]),)]


def test_adam_zero_gradient():
    params = scalar_params(0.7)
    state = AdamState.for_params(params)
    new, state = adam_step(params, [(np.zeros((1, 1)),)], state)
    assert new[0][0][0, 0] == 0.7 and state.t == 1


def test_adam_first_step_hand_trace():
    params = [(np.array([[0.5]]), np.array([[0.0]]), np.array([[0.0]]), np.array([[0.0]]), np.array([0.2]))]
    state = AdamState.for_params(params, lr=1e-3)
    g = 0.3
    grads = [(np.array([[g]]), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.array([0.0]))]
    new, _ = adam_step(params, grads, state)
    m_hat = (0.1 * g) / (1 - 0.9)
    v_hat = (0.001 * g * g) / (1 - 0.999)
    assert new[0][0][0, 0] == pytest.approx(0.5 - 1e-3 * m_hat / (np.sqrt(v_hat) + 1e-8), abs=1e-15)


def test_adam_step_bound():
    rng = np.random.default_rng(0)
    params = scalar_params(0.0)
    state = AdamState.for_params(params, lr=1e-2)
    for _ in range(200):
        old = params[0][0][0, 0]
        params, state = adam_step(params, [(np.array([[rng.standard_normal() * 10 ** rng.uniform(-3, 3)]]),)], state)
        # bias-corrected update magnitude never exceeds lr * (1 - beta1) / sqrt(1 - beta2) per step
        assert abs(params[0][0][0, 0] - old) <= 1e-2 * (1 - 0.9) / np.sqrt(1 - 0.999) + 1e-15


def test_adam_clamps_threshold():
    params = [(np.zeros((1, 1)),) * 4 + (np.array([1e-5]),)]
    state = AdamState.for_params(params, lr=1e-3)
    grads = [(np.zeros((1, 1)),) * 4 + (np.array([5.0]),)]
    new, _ = adam_step(params, grads, state)
    assert new[0][4][0] == 0.0


def test_adam_state_round_trip(tmp_path):
    params = [(np.ones((2, 2)), np.array([0.1]))]
    state = AdamState.for_params(params)
    _, state = adam_step(params, [(np.ones((2, 2)), np.array([1.0]))], state)
    state.save(tmp_path / "adam.npz")
    back = AdamState.load(tmp_path / "adam.npz")
    assert back.t == 1
    np.testing.assert_array_equal(back.v[0][0], state.v[0][0])


def test_evaluate_examples(model):
    ds = generate_dataset(model, SMALL, n_samples=30)
    assert evaluate_mse_db(lambda y: SplitComplexVector.zeros(36), ds) == pytest.approx(0.0, abs=1e-12)
    perfect = (ds.x_re, ds.x_im)
    assert evaluate_mse_db(None, ds, estimates=perfect) <= -300
    assert MSE_FLOOR_DB == -300
    with pytest.raises(DomainError):
        evaluate_mse_db(None, ds, "bogus", estimates=perfect)


def test_evaluate_drops_empty_truths(model):
    ds = generate_dataset(model, SMALL, n_samples=5, j_fixed=0)
    with pytest.warns(RuntimeWarning):
        with pytest.raises(DomainError):
            evaluate_mse_db(None, ds, estimates=(ds.x_re, ds.x_im))


def test_epoch_zero_equals_ista_steps(model):
    cfg = TrainConfig(n_samples=400, epochs=1, batch_size=64)
    tr, va = make_splits(model, cfg)
    net = init_from_ista(model, 5, 1.0)
    _, log = train(net, tr, cfg, model, va)
    icfg = IstaConfig.for_model(model, 1.0)
    est = [ista_k_steps(va[p].y, model, icfg, 5) for p in range(len(va))]
    ista_db = evaluate_mse_db(None, va, estimates=(np.array([e.re for e in est]), np.array([e.im for e in est])))
    assert 10 ** (log.rows[0]["val_mse_db"] / 10) == pytest.approx(10 ** (ista_db / 10), abs=1e-10)
    assert log.rows[1]["train_loss"] < log.rows[0]["train_loss"]


def test_zero_learning_rate_keeps_model(model):
    cfg = TrainConfig(n_samples=300, epochs=2, batch_size=64, lr=0.0)
    tr, va = make_splits(model, cfg)
    net = init_from_ista(model)
    trained, log = train(net, tr, cfg, model, va)
    assert trained.layers == net.layers
    assert len(log.rows) == 3


def test_training_is_deterministic(model):
    cfg = TrainConfig(n_samples=600, epochs=2, batch_size=64)
    tr, va = make_splits(model, cfg)
    a, la = train(init_from_ista(model), tr, cfg, model, va)
    b, lb = train(init_from_ista(model), tr, cfg, model, va)
    assert a == b
    assert [r["train_loss"] for r in la.rows] == [r["train_loss"] for r in lb.rows]


def test_train_guards(model):
    cfg = TrainConfig(n_samples=100, epochs=1)
    tr = generate_dataset(model, cfg)
    with pytest.raises(IntegrityError):
        train(UdnnModel(init_from_ista(model).layers, {"grid_fingerprint": "x"}), tr, cfg, model)


def test_log_csv_round_trip(tmp_path):
    log = TrainingLog()
    log.append(0, 0.5, -3.0, 0.0)
    log.append(1, 0.25, -6.5, 1.5)
    text = log.to_csv(tmp_path / "log.csv", fingerprint="abc")
    assert text.splitlines()[0] == "# config_fingerprint=abc"
    assert text.splitlines()[1] == "epoch,train_loss,val_mse_db,wall_time_s"
    assert TrainingLog.from_csv(tmp_path / "log.csv").rows == log.rows

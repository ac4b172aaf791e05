import numpy as np
import pytest

from conftest import crandn
from ddunfold.complex_core import SplitComplexMatrix, SplitComplexVector, cmul_mat_vec
from ddunfold.errors import DomainError, IntegrityError, ShapeError
from ddunfold.ista import IstaConfig, ista_k_steps
from ddunfold.network import (
    LayerParams,
    UdnnModel,
    forward,
    forward_traced,
    init_from_ista,
    load_model,
    read_header,
    reference_forward_complex,
    replay_trace,
    save_model,
)
from ddunfold.signal_model import MeasurementModel, OfdmConfig, build_grid, build_measurement_model


def random_net(model, k=5, seed=0, scale=0.05):
    rng = np.random.default_rng(seed)
    base = init_from_ista(model, k, 1.0)
    arrays = []
    for layer in base.to_arrays():
        blocks = [a + scale * rng.standard_normal(a.shape) for a in layer[:4]]
        arrays.append((*blocks, np.array([rng.uniform(0.005, 0.05)])))
    return UdnnModel.from_arrays(arrays, base.meta)


def random_y(seed):
    return SplitComplexVector.from_complex(crandn(np.random.default_rng(seed), 16))


def test_init_thresholds(model):
    net = init_from_ista(model, 5, 1.0)
    assert net.k_layers == 5
    assert all(layer.theta == pytest.approx(1.0 / model.lipschitz) for layer in net.layers)
    assert net.meta["grid_fingerprint"] == model.fingerprint()
    with pytest.raises(DomainError):
        init_from_ista(model, 0)
    with pytest.raises(DomainError):
        init_from_ista(model, 5, -1.0)


def test_identity_projection_network():
    eye = SplitComplexMatrix.identity(4)
    cfg = OfdmConfig(n_data=1, n_blocks=4)
    mm = MeasurementModel(cfg, build_grid(4, 1), SplitComplexVector(np.ones(4), np.zeros(4)), eye, eye, 1.0)
    net = init_from_ista(mm, 3, 0.0)
    layer = net.layers[0]
    assert layer.w1 == eye and layer.theta == 0.0
    np.testing.assert_array_equal(layer.w2.re, 0.0)
    y = SplitComplexVector([1.0, -2.0, 0.5, 3.0], [0.0, 1.0, -1.0, 2.0])
    x_hat, trace = forward_traced(net, y)
    assert x_hat == y
    assert all(rec.x_output == y for rec in trace.records)


def test_init_matches_ista_steps(model):
    rng = np.random.default_rng(8)
    for lam in (0.01, 1.0):
        net = init_from_ista(model, 5, lam)
        cfg = IstaConfig.for_model(model, lam)
        for _ in range(10):
            x = np.zeros(36, complex)
            x[rng.choice(36, 2, replace=False)] = rng.uniform(-1, 1, 2) + 1j * rng.uniform(-1, 1, 2)
            y = cmul_mat_vec(model.a_matrix, SplitComplexVector.from_complex(x))
            a, b = forward(net, y), ista_k_steps(y, model, cfg, 5)
            assert np.max(np.abs(a.to_complex() - b.to_complex())) <= 1e-12


def test_zero_input(model):
    assert forward(random_net(model), SplitComplexVector.zeros(16)) == SplitComplexVector.zeros(36)


def test_first_layer_is_rough_estimate(model):
    net = random_net(model)
    y = random_y(1)
    _, trace = forward_traced(net, y)
    z1 = trace.records[0].z_pre_threshold
    want = cmul_mat_vec(net.layers[0].w1, y)
    np.testing.assert_allclose(z1.to_complex(), want.to_complex(), atol=1e-15)
    assert trace.records[0].x_input == SplitComplexVector.zeros(36)


def test_matches_complex_reference(model):
    for seed in range(5):
        net = random_net(model, seed=seed)
        y = random_y(seed + 100)
        got = forward(net, y).to_complex()
        assert np.max(np.abs(got - reference_forward_complex(net, y.to_complex()))) <= 1e-12


def test_trace_recomputation(model):
    net = random_net(model, seed=3)
    y = random_y(3)
    x_hat, trace = forward_traced(net, y)
    assert len(trace) == 5 and trace.x_hat == x_hat
    W = [(l.w1.to_complex(), l.w2.to_complex()) for l in net.layers]
    for (w1, w2), rec in zip(W, trace.records):
        z = w2 @ rec.x_input.to_complex() + w1 @ y.to_complex()
        assert np.max(np.abs(z - rec.z_pre_threshold.to_complex())) <= 1e-13
    assert replay_trace(net, y, trace) == x_hat


def test_single_layer_trace(model):
    _, trace = forward_traced(init_from_ista(model, 1), random_y(0))
    assert len(trace) == 1


def test_replay_detects_tampering(model):
    net = random_net(model)
    y = random_y(0)
    _, trace = forward_traced(net, y)
    with pytest.raises(IntegrityError):
        replay_trace(net, random_y(1), trace)


def test_input_shape_checked(model):
    with pytest.raises(ShapeError):
        forward(random_net(model), SplitComplexVector.zeros(15))


def test_layer_theta_nonnegative():
    eye = SplitComplexMatrix.identity(2)
    with pytest.raises(DomainError):
        LayerParams(eye, eye, -0.1)


def test_save_load_round_trip(model, tmp_path):
    net = random_net(model)
    path = save_model(net, tmp_path / "net.udnn")
    back = load_model(path, expected_fingerprint=model.fingerprint())
    assert back == net
    header = read_header(path)
    assert header["version"] == 1 and header["meta"]["k_layers"] == 5


def test_truncated_file(model, tmp_path):
    path = save_model(random_net(model), tmp_path / "net.udnn")
    data = path.read_bytes()
    for cut in (3, 20, len(data) - 8):
        (tmp_path / "cut.udnn").write_bytes(data[:cut])
        with pytest.raises(IntegrityError):
            load_model(tmp_path / "cut.udnn")


def test_corrupted_payload(model, tmp_path):
    path = save_model(random_net(model), tmp_path / "net.udnn")
    data = bytearray(path.read_bytes())
    data[-3] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(IntegrityError):
        load_model(path)


def test_fingerprint_mismatch(model, tmp_path):
    other = build_measurement_model(OfdmConfig(), build_grid(4, 9))
    path = save_model(init_from_ista(other, 2), tmp_path / "other.udnn")
    with pytest.raises(IntegrityError):
        load_model(path, expected_fingerprint=model.fingerprint())

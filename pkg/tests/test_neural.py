import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mimochest.channel import DEFAULT_PDP, PowerDelayProfile, frequency_response
from mimochest.grid import PilotPattern
from mimochest.neural import (
    ARCHITECTURES,
    MlpModel,
    TapDataset,
    TrainConfig,
    TrainingDiverged,
    dnn_estimate,
    extract_ls_taps,
    forward,
    jacobian,
    pack_taps,
    split_sizes,
    train,
    unpack_taps,
)
from mimochest.neural.train import gauss_newton_terms


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


# ---- packing ---------------------------------------------------------------

def test_pack_example_and_zero():
    assert pack_taps([1 + 2j, 0, 0, 0]).tolist() == [1, 2, 0, 0, 0, 0, 0, 0]
    assert np.all(pack_taps(np.zeros(4)) == 0)
    with pytest.raises(ValueError):
        pack_taps(np.ones(3))
    with pytest.raises(ValueError):
        unpack_taps(np.ones(7))


@given(st.lists(st.complex_numbers(allow_nan=False, allow_infinity=False, max_magnitude=1e9), min_size=4, max_size=4))
def test_pack_round_trip(values):
    h = np.array(values)
    assert np.array_equal(unpack_taps(pack_taps(h)), h)


# ---- tap extraction --------------------------------------------------------

def test_extract_taps_transform_round_trip():
    rng = np.random.default_rng(0)
    g = _crandn(rng, 3, 4)
    h = frequency_response(g, DEFAULT_PDP.delays, 512)
    assert np.max(np.abs(extract_ls_taps(h, DEFAULT_PDP) - g)) < 1e-9


def test_extract_taps_flat_spectrum():
    c = 0.4 - 1.3j
    taps = extract_ls_taps(np.full(512, c), DEFAULT_PDP)
    assert abs(taps[0] - c) < 1e-10
    assert np.max(np.abs(taps[1:])) < 1e-10


def test_extract_taps_matches_full_idft_oracle():
    rng = np.random.default_rng(1)
    h = _crandn(rng, 64)
    n = np.arange(64)
    full = np.array([np.sum(h * np.exp(2j * np.pi * n * m / 64)) / 64 for m in range(64)])
    assert np.max(np.abs(extract_ls_taps(h, DEFAULT_PDP) - full[list(DEFAULT_PDP.delays)])) < 1e-12


def test_extract_taps_rejects_other_tap_counts():
    pdp = PowerDelayProfile((0, 1, 2), (0.5, 0.3, 0.2))
    with pytest.raises(ValueError, match="fixed at 4 taps"):
        extract_ls_taps(np.ones(16), pdp)


# ---- network ---------------------------------------------------------------

def test_architectures():
    assert ARCHITECTURES["dnn1"] == (8, 16, 16, 16, 8)
    assert ARCHITECTURES["dnn2"] == (8, 32, 32, 32, 8)
    for name in ARCHITECTURES:
        m = MlpModel.initialize(name, np.random.default_rng(0))
        assert m.layer_sizes[0] == m.layer_sizes[-1] == 8
        for l, w in enumerate(m.weights):
            assert w.shape == (m.layer_sizes[l + 1], m.layer_sizes[l])


def test_bad_weight_shapes_rejected():
    with pytest.raises(ValueError, match="expected"):
        MlpModel((2, 3), [np.zeros((2, 3))], [np.zeros(3)])


def test_forward_zero_model():
    m = MlpModel.zeros("dnn1")
    assert np.all(forward(m, np.random.default_rng(0).normal(size=8)) == 0)


def test_forward_scalar_chain():
    # 1 -> 1 -> 1: hidden = tanh(0.5 * 0.5 + 0.5) = tanh(0.75)
    m = MlpModel((1, 1, 1), [np.array([[0.5]]), np.array([[2.0]])], [np.array([0.5]), np.array([0.1])])
    hidden = np.tanh(0.75)
    assert hidden == pytest.approx(0.635149, abs=1e-6)
    assert forward(m, np.array([0.5]))[0] == pytest.approx(2.0 * hidden + 0.1, abs=1e-15)


def test_output_layer_is_linear():
    m = MlpModel.initialize("dnn1", np.random.default_rng(2))
    x = np.random.default_rng(3).normal(size=(5, 8))
    y = forward(m, x)
    m.weights[-1] = 2 * m.weights[-1]
    m.biases[-1] = 2 * m.biases[-1]
    assert np.allclose(forward(m, x), 2 * y, atol=1e-14)


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError, match="features"):
        forward(MlpModel.zeros("dnn1"), np.ones(7))


def test_params_round_trip_layout():
    m = MlpModel.initialize("dnn1", np.random.default_rng(4))
    theta = m.get_params()
    assert theta.size == m.n_params == 16 * 9 + 16 * 17 * 2 + 8 * 17
    # first row of layer 0: its 8 input weights then its bias
    assert np.array_equal(theta[:8], m.weights[0][0]) and theta[8] == m.biases[0][0]
    m2 = MlpModel.zeros("dnn1")
    m2.set_params(theta)
    assert np.array_equal(m2.get_params(), theta)


def _fd_jacobian(m, x, step=1e-5):
    theta = m.get_params()
    cols = []
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        m.set_params(theta + e)
        up = forward(m, x)
        m.set_params(theta - e)
        down = forward(m, x)
        cols.append((up - down) / (2 * step))
    m.set_params(theta)
    return np.stack(cols, axis=-1)


@pytest.mark.parametrize("arch", ["dnn1", "dnn2"])
def test_jacobian_vs_finite_differences(arch):
    for seed in range(10):
        rng = np.random.default_rng(seed)
        m = MlpModel.initialize(arch, rng)
        for b in m.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        x = rng.normal(size=8)
        jac = jacobian(m, x)
        fd = _fd_jacobian(m, x)
        rel = np.linalg.norm(jac - fd) / np.linalg.norm(fd)
        assert rel < 1e-6


def test_jacobian_trivial_entries():
    m = MlpModel.initialize("dnn1", np.random.default_rng(5))
    jac = jacobian(m, np.zeros(8))
    # zero input: first-layer weight derivatives vanish
    first = m.layer_sizes[1] * (m.layer_sizes[0] + 1)
    w_cols = [c for c in range(first) if (c + 1) % 9 != 0]
    assert np.all(jac[:, w_cols] == 0)
    # output bias columns form the identity
    n_out = m.layer_sizes[-1]
    bias_cols = m.n_params - (m.layer_sizes[-2] + 1) * n_out + np.arange(n_out) * (m.layer_sizes[-2] + 1) + m.layer_sizes[-2]
    assert np.array_equal(jac[:, bias_cols], np.eye(n_out))


def test_jacobian_batch_matches_single():
    m = MlpModel.initialize("dnn1", np.random.default_rng(6))
    x = np.random.default_rng(7).normal(size=(3, 8))
    batch = jacobian(m, x)
    for r in range(3):
        assert np.allclose(batch[r], jacobian(m, x[r]), atol=1e-15)


def test_gauss_newton_terms_match_explicit_jacobian():
    rng = np.random.default_rng(8)
    m = MlpModel.initialize("dnn1", rng)
    x, y = rng.normal(size=(50, 8)), rng.normal(size=(50, 8))
    jtj, jtr, loss = gauss_newton_terms(m, x, y, chunk_rows=16)
    jac = jacobian(m, x).reshape(-1, m.n_params)
    r = (forward(m, x) - y).ravel()
    assert np.allclose(jtj, jac.T @ jac / 50, atol=1e-12)
    assert np.allclose(jtr, jac.T @ r / 50, atol=1e-12)
    assert loss == pytest.approx(np.sum(r * r) / 50, rel=1e-12)


def test_model_file_round_trip(tmp_path):
    m = MlpModel.initialize("dnn2", np.random.default_rng(9))
    m.in_mean = np.random.default_rng(10).normal(size=8)
    m.report = {"epochs": 3, "seed": 4}
    m.save(tmp_path / "m.json")
    back = MlpModel.load(tmp_path / "m.json")
    assert back.layer_sizes == m.layer_sizes
    assert np.array_equal(back.get_params(), m.get_params())
    assert np.array_equal(back.in_mean, m.in_mean)
    assert back.report == m.report


# ---- dataset ---------------------------------------------------------------

def test_split_sizes():
    assert split_sizes(250880) == (175616, 37632, 37632)
    assert split_sizes(20) == (14, 3, 3)


def test_dataset_split_views():
    x = np.arange(20 * 8, dtype=float).reshape(20, 8)
    ds = TapDataset(x, -x)
    assert ds.train[0].shape == (14, 8)
    assert np.array_equal(ds.validation[0], x[14:17])
    assert np.array_equal(ds.test[1], -x[17:])


def test_dataset_bytes_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    ds = TapDataset(rng.normal(size=(30, 8)), rng.normal(size=(30, 8)))
    ds.save(tmp_path / "d.bin")
    raw = (tmp_path / "d.bin").read_bytes()
    assert raw[:4] == b"TAPD"
    assert len(raw) == 4 + 4 + 8 + 4 + 4 + 30 * 16 * 8
    back = TapDataset.load(tmp_path / "d.bin")
    assert np.array_equal(back.inputs, ds.inputs) and np.array_equal(back.targets, ds.targets)
    with pytest.raises(ValueError, match="magic"):
        TapDataset.from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError, match="bytes"):
        TapDataset.from_bytes(raw[:-8])


# ---- training --------------------------------------------------------------

def _identity_dataset(n=2000, seed=0):
    x = np.random.default_rng(seed).normal(scale=0.5, size=(n, 8))
    return TapDataset(x, x.copy())


@pytest.fixture(scope="module")
def identity_fit():
    ds = _identity_dataset()
    m = MlpModel.initialize("dnn1", np.random.default_rng(0))
    trained, rep = train(m, ds, TrainConfig(max_epochs=300))
    return ds, trained, rep


def test_train_identity_task(identity_fit):
    ds, trained, rep = identity_fit
    x, y = ds.test
    assert np.mean(np.sum((trained.predict(x) - y) ** 2, axis=1)) < 1e-4
    assert rep["epochs"] <= 300
    # only improving steps are accepted
    losses = rep["history"]["train_loss"]
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    assert all(1e-10 <= lam <= 1e10 for lam in rep["history"]["damping"])


def test_train_does_not_touch_input_model():
    ds = _identity_dataset(200)
    m = MlpModel.initialize("dnn1", np.random.default_rng(1))
    theta = m.get_params()
    train(m, ds, TrainConfig(max_epochs=2))
    assert np.array_equal(m.get_params(), theta)


def test_early_stopping_after_six_failures_restores_best():
    rng = np.random.default_rng(2)
    # noise targets: the validation loss cannot keep improving
    ds = TapDataset(rng.normal(size=(300, 8)), rng.normal(size=(300, 8)))
    m = MlpModel.initialize("dnn2", rng)
    trained, rep = train(m, ds, TrainConfig(max_epochs=300))
    assert rep["stop_reason"] == "validation_failures"
    fails = rep["history"]["val_failures"]
    assert fails[-1] == 6 and fails[-7] == 0
    assert rep["epochs"] == rep["best_epoch"] + 6
    assert rep["val_loss"] == min(rep["history"]["val_loss"])
    from mimochest.neural.train import _loss, _normalized

    assert _loss(trained, *_normalized(trained, ds.validation)) == rep["val_loss"]


def test_train_dimension_mismatch_and_config_validation():
    ds = TapDataset(np.zeros((20, 4)), np.zeros((20, 4)))
    with pytest.raises(ValueError, match="does not match"):
        train(MlpModel.zeros("dnn1"), ds)
    with pytest.raises(ValueError):
        TrainConfig(target_loss=0)
    with pytest.raises(ValueError):
        TrainConfig(algorithm="adam")


def test_train_diverged_reports_epoch():
    x = np.full((20, 8), np.nan)
    with pytest.raises(TrainingDiverged, match="epoch 0"):
        train(MlpModel.zeros("dnn1"), TapDataset(x, x), normalize=False)


def test_sgd_fallback_reduces_loss():
    ds = _identity_dataset(400)
    m = MlpModel.initialize("dnn1", np.random.default_rng(3))
    _, rep = train(m, ds, TrainConfig(max_epochs=5, algorithm="sgd"))
    assert rep["history"]["train_loss"][-1] < rep["history"]["train_loss"][0]


# ---- DNN estimator ---------------------------------------------------------

def test_dnn_estimate_zero_model():
    p = PilotPattern(4, 2)
    h_ls = _crandn(np.random.default_rng(4), 2, 2, 4, 64)
    est = dnn_estimate(MlpModel.zeros("dnn1"), h_ls, DEFAULT_PDP, p, 14)
    assert est.h_hat.shape == (2, 2, 64, 14)
    assert np.all(est.h_hat == 0)


def test_dnn_estimate_reconstruction_oracle():
    # a model with fixed (non-identity) output: predict returns out_mean
    p = PilotPattern(2, 2)
    m = MlpModel.zeros("dnn1")
    m.out_mean = np.arange(8.0) / 10
    h_ls = _crandn(np.random.default_rng(5), 2, 2, 2, 32)
    est = dnn_estimate(m, h_ls, DEFAULT_PDP, p, 3, "DNN2")
    taps = unpack_taps(m.out_mean)
    oracle = np.zeros(32, dtype=complex)
    for g, d in zip(taps, DEFAULT_PDP.delays):
        oracle += g * np.exp(-2j * np.pi * np.arange(32) * d / 32)
    assert est.method == "DNN2"
    assert np.max(np.abs(est.h_hat[1, 0, :, 0] - oracle)) < 1e-10
    assert np.max(np.abs(est.h_hat[0, 1, :, 2] - oracle)) < 1e-10


def test_dnn_estimate_identity_model_returns_ls(identity_fit):
    model = identity_fit[1]
    p = PilotPattern(4, 2)
    taps = 0.5 * _crandn(np.random.default_rng(7), 2, 2, 4, 4)
    h_ls = frequency_response(taps, DEFAULT_PDP.delays, 64)
    est = dnn_estimate(model, h_ls, DEFAULT_PDP, p, 13)
    expected = np.swapaxes(h_ls, -1, -2)  # pilot symbols 0, 4, 8, 12
    assert np.mean(np.abs(est.h_hat[..., [0, 4, 8, 12]] - expected) ** 2) < 1e-3


def test_dnn_estimate_rejects_mismatched_model():
    with pytest.raises(ValueError, match="does not map"):
        dnn_estimate(MlpModel.zeros((4, 4)), np.zeros((2, 2, 1, 8)), DEFAULT_PDP, PilotPattern(1, 2), 1)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from specal import mlp
from specal.errors import DataError, ParameterError, ShapeError
from specal.metrics import r_squared
from specal.mlp import MlpArchitecture, MlpModel, TrainConfig


def random_model(hidden, p, rng, y_mean=0.0, y_std=1.0):
    arch = MlpArchitecture(hidden)
    W, b = mlp.init_weights(arch.layer_sizes(p), rng)
    b = [rng.normal(0, 0.3, v.shape) for v in b]
    return MlpModel(arch, tuple(W), tuple(b), np.zeros(p), np.ones(p), y_mean, y_std)


def fd_gradient(m, X, y, l2, h=1e-5):
    gW, gb = [], []
    for name in ("weights", "biases"):
        out = []
        for li, A in enumerate(getattr(m, name)):
            G = np.zeros_like(A)
            for idx in np.ndindex(A.shape):
                vals = []
                for s in (h, -h):
                    params = {k: [np.array(a) for a in getattr(m, k)] for k in ("weights", "biases")}
                    params[name][li][idx] += s
                    vals.append(mlp.loss(mlp.with_params(m, params["weights"], params["biases"]), X, y, l2))
                G[idx] = (vals[0] - vals[1]) / (2 * h)
            out.append(G)
        (gW if name == "weights" else gb).extend(out)
    return gW, gb


def rel_err(a, b):
    """Relative error between two ``(weight_grads, bias_grads)`` pairs."""
    a = np.concatenate([v.ravel() for v in a[0] + a[1]])
    b = np.concatenate([v.ravel() for v in b[0] + b[1]])
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-300)


def test_gradient_small_case(rng):
    m = random_model((5,), 3, rng)
    X, y = rng.standard_normal((4, 3)), rng.standard_normal(4)
    assert rel_err(mlp.gradient(m, X, y, 1e-3), fd_gradient(m, X, y, 1e-3)) < 1e-5


@pytest.mark.parametrize("hidden", [(), (5,), (10,), (20, 10)])
def test_gradient_many_triples(hidden):
    for seed in range(6):
        rng = np.random.default_rng(seed)
        m = random_model(hidden, 4, rng)
        X, y = rng.standard_normal((7, 4)), rng.standard_normal(7)
        assert rel_err(mlp.gradient(m, X, y, 1e-4), fd_gradient(m, X, y, 1e-4)) < 1e-5


def test_gradient_zero_at_perfect_fit(rng):
    m = random_model((5,), 3, rng)
    X = rng.standard_normal((6, 3))
    y = mlp.predict(m, X)
    gW, gb = mlp.gradient(m, X, y, 0.0)
    assert np.sqrt(sum(np.sum(g**2) for g in gW + gb)) < 1e-10


def test_gradient_duplicate_rows(rng):
    m = random_model((5,), 3, rng)
    X, y = rng.standard_normal((4, 3)), rng.standard_normal(4)
    a = mlp.gradient(m, X, y, 1e-3)
    b = mlp.gradient(m, np.vstack([X, X]), np.concatenate([y, y]), 1e-3)
    for u, v in zip(a[0] + a[1], b[0] + b[1]):
        np.testing.assert_allclose(u, v, atol=1e-12, rtol=0)


def test_linear_model_matches_ols(rng):
    X = rng.standard_normal((30, 3))
    y = X @ [1.0, -2.0, 0.5] + 4 + rng.normal(0, 0.1, 30)
    A = np.column_stack([np.ones(30), X])
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    m = MlpModel(MlpArchitecture(()), (coef[1:, None],), (np.array([coef[0]]),), np.zeros(3), np.ones(3), 0.0, 1.0)
    np.testing.assert_allclose(mlp.predict(m, X), A @ coef, atol=1e-10, rtol=0)


def test_zero_network_predicts_mean():
    arch = MlpArchitecture((4,))
    W = (np.zeros((3, 4)), np.zeros((4, 1)))
    b = (np.zeros(4), np.zeros(1))
    m = MlpModel(arch, W, b, np.zeros(3), np.ones(3), 7.5, 2.0)
    assert mlp.forward(m, np.array([1.0, -2.0, 3.0])) == 7.5


def test_hand_sigmoid_chain():
    arch = MlpArchitecture((1,))
    W = (np.array([[0.5], [-1.0]]), np.array([[2.0]]))
    b = (np.array([0.25]), np.array([-0.5]))
    m = MlpModel(arch, W, b, np.array([1.0, 0.0]), np.array([2.0, 1.0]), 10.0, 3.0)
    x = np.array([3.0, 0.5])
    z = 0.5 * (3.0 - 1.0) / 2.0 + (-1.0) * 0.5 + 0.25
    hand = (2.0 / (1.0 + np.exp(-z)) - 0.5) * 3.0 + 10.0
    assert abs(mlp.forward(m, x) - hand) < 1e-12


def toy(rng, n=120):
    x = rng.uniform(-1, 1, (n, 1))
    return x, 3 * x[:, 0] + 1 + rng.normal(0, 0.01, n)


def test_train_toy_problem(rng):
    X, y = toy(rng)
    Xv, yv = toy(rng, 40)
    m = mlp.train(MlpArchitecture((5,)), X, y, Xv, yv, TrainConfig(max_epochs=2000, learning_rate=0.2, patience=300))
    assert r_squared(yv, mlp.predict(m, Xv)) > 0.99
    assert m.epochs_run <= 2000
    # the returned snapshot is the best recorded validation error
    assert m.history_validation[m.best_epoch] == m.history_validation.min()


def test_training_is_deterministic(rng):
    X, y = toy(rng)
    Xv, yv = toy(rng, 30)
    cfg = TrainConfig(max_epochs=300, learning_rate=0.1, seed=9)
    a = mlp.train(MlpArchitecture((6,)), X, y, Xv, yv, cfg)
    b = mlp.train(MlpArchitecture((6,)), X, y, Xv, yv, cfg)
    assert np.array_equal(a.history_validation, b.history_validation)
    assert a.model_bytes() == b.model_bytes()


def test_target_affine_equivariance(rng):
    X, y = toy(rng)
    Xv, yv = toy(rng, 30)
    cfg = TrainConfig(max_epochs=500, learning_rate=0.1)
    a = mlp.train(MlpArchitecture((5,)), X, y, Xv, yv, cfg)
    b = mlp.train(MlpArchitecture((5,)), X, 4 * y - 2, Xv, 4 * yv - 2, cfg)
    np.testing.assert_allclose(mlp.predict(b, Xv), 4 * mlp.predict(a, Xv) - 2, atol=1e-6, rtol=0)


def test_zero_variance_feature(rng):
    X, y = toy(rng)
    X2 = np.column_stack([X, np.full(len(X), 3.0)])
    m = mlp.train(MlpArchitecture((4,)), X2, y, X2[:20], y[:20], TrainConfig(max_epochs=50))
    assert m.x_std[1] == 1.0
    assert np.all(m.weights[0][1] == 0)


def test_predict_consistency_and_round_trip(tmp_path, rng):
    m = random_model((5, 3), 4, rng, 2.0, 3.0)
    X = rng.standard_normal((8, 4))
    p = mlp.predict(m, X)
    assert mlp.forward(m, X[2]) == mlp.predict(m, X[2:3])[0]
    assert abs(mlp.forward(m, X[2]) - p[2]) < 1e-12
    perm = rng.permutation(8)
    np.testing.assert_array_equal(mlp.predict(m, X[perm]), p[perm])
    m.save(tmp_path / "m.json")
    back = MlpModel.load(tmp_path / "m.json")
    np.testing.assert_allclose(mlp.predict(back, X), p, atol=1e-15, rtol=0)
    assert back.model_bytes() == m.model_bytes()


def test_errors(rng):
    m = random_model((3,), 4, rng)
    with pytest.raises(ShapeError):
        mlp.forward(m, np.ones(5))
    with pytest.raises(ShapeError):
        mlp.gradient(m, np.ones((3, 4)), np.ones(2))
    with pytest.raises(DataError):
        mlp.train(MlpArchitecture((3,)), np.ones((0, 2)), np.ones(0), np.ones((2, 2)), np.ones(2))
    with pytest.raises(ParameterError):
        MlpArchitecture((10, 10, 10))
    with pytest.raises(ParameterError):
        MlpArchitecture((201,))
    with pytest.raises(ParameterError):
        TrainConfig(learning_rate=0)


def test_divergence_reports_epoch(rng):
    from specal.errors import DivergenceError
    X, y = toy(rng)
    with pytest.raises(DivergenceError) as ei:
        mlp.train(MlpArchitecture((50,)), X, y, X, y, TrainConfig(max_epochs=500, learning_rate=1e6, decay=1.0))
    assert ei.value.epoch >= 0


@given(st.integers(0, 200), st.integers(0, 200))
def test_grid_encoding(a, b):
    if a == 0 and b == 0:
        assert MlpArchitecture.from_grid(a, b).hidden == ()
        return
    arch = MlpArchitecture.from_grid(a, b)
    assert arch.hidden == tuple(v for v in (a, b) if v)
    assert MlpArchitecture.parse(arch.label()) == arch

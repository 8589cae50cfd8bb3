import math

import numpy as np
import pytest

from jumbo.errors import InvalidArgument, NumericalFailure, ParseError
from jumbo.gp import KernelSpec
from jumbo.nn import (MLPConfig, OfflineDataset, embed, init_model, joint_pretrain, lipschitz_bound,
                      load_model, mlp_forward, mse_loss_and_grads, per_task_mse, pretrain, save_model)


def tiny(seed=0, **kw):
    return MLPConfig(n_layers=1, hidden_units=3, latent_dim=2, num_tasks=2, seed=seed, **kw)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        MLPConfig(n_layers=0)
    with pytest.raises(InvalidArgument):
        MLPConfig(dropout_rate=1.0)
    with pytest.raises(InvalidArgument):
        MLPConfig(latent_dim=0)


def test_zero_weights():
    m = init_model(tiny(), 3)
    for v in m.params.values():
        v[...] = 0.0
    m.params["bz"][...] = [0.3, -0.2]
    m.params["bh"][...] = [1.5, -2.0]
    z, heads = mlp_forward(m, np.array([0.1, 0.2, 0.3]))
    np.testing.assert_array_equal(z, np.tanh([0.3, -0.2]))
    np.testing.assert_array_equal(heads, [1.5, -2.0])


def test_eval_is_deterministic_and_bounded():
    m = init_model(MLPConfig(dropout_rate=0.5), 4)
    x = np.random.default_rng(0).normal(size=(30, 4)) * 5
    a, b = mlp_forward(m, x), mlp_forward(m, x)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert np.all(np.abs(embed(m, x)) < 1)
    assert embed(m, x[0]).shape == (4,)


def test_dropout_only_in_train_mode():
    m = init_model(MLPConfig(dropout_rate=0.5, hidden_units=16), 2)
    x = np.full((5, 2), 0.3)
    z_eval = embed(m, x)
    z_train, _ = mlp_forward(m, x, "train", np.random.default_rng(1))
    assert not np.allclose(z_eval, z_train)
    with pytest.raises(InvalidArgument):
        mlp_forward(m, x, "test")


def test_non_finite_input():
    with pytest.raises(InvalidArgument):
        embed(init_model(MLPConfig(), 2), [np.nan, 0.0])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_activations():
    m = init_model(MLPConfig(), 1)
    m.params["Wh"][...] = np.inf
    with pytest.raises(NumericalFailure):
        mlp_forward(m, [0.5])


@pytest.mark.parametrize("seed", range(3))
def test_backprop_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    m = init_model(tiny(seed), 3)
    X = rng.normal(size=(6, 3))
    k = np.array([0, 1, 0, 1, 1, 0])
    y = rng.normal(size=6)
    _, grads = mse_loss_and_grads(m, X, k, y)
    h = 1e-5
    for name, P in m.params.items():
        for idx in np.ndindex(P.shape):
            old = P[idx]
            P[idx] = old + h
            lp = mse_loss_and_grads(m, X, k, y)[0]
            P[idx] = old - h
            lm = mse_loss_and_grads(m, X, k, y)[0]
            P[idx] = old
            fd = (lp - lm) / (2 * h)
            g = grads[name][idx]
            assert abs(g - fd) <= 1e-4 * max(abs(fd), 1e-3), (name, idx, g, fd)


def test_backprop_with_dropout_mask():
    rng = np.random.default_rng(5)
    m = init_model(tiny(), 2)
    X, k, y = rng.normal(size=(4, 2)), np.array([0, 1, 1, 0]), rng.normal(size=4)
    mask = np.array([[2.0, 0, 2.0]] * 4)
    _, grads = mse_loss_and_grads(m, X, k, y, mask)
    P, h = m.params["W0"], 1e-6
    old = P[0, 0]
    P[0, 0] = old + h
    lp = mse_loss_and_grads(m, X, k, y, mask)[0]
    P[0, 0] = old - h
    lm = mse_loss_and_grads(m, X, k, y, mask)[0]
    P[0, 0] = old
    assert grads["W0"][0, 0] == pytest.approx((lp - lm) / (2 * h), rel=1e-5, abs=1e-9)


def linear_data(n=1000, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    a = np.array([1.0, -2.0, 0.5])[:d]
    return X, X @ a


def test_pretrain_linear_task():
    X, y = linear_data()
    # Small-HPO architecture; Adam step 1e-3 (see README on pretraining defaults).
    m = pretrain(OfflineDataset({"lin": (X, y)}), MLPConfig(epochs=200, learning_rate=1e-3))
    assert per_task_mse(m, OfflineDataset({"lin": (X, y)}))["lin"] < 1e-2
    assert len(m.history) >= 1 and "train_mse" in m.history[-1]


def test_identical_tasks_get_identical_heads():
    X, y = linear_data(400)
    m = pretrain(OfflineDataset({"a": (X, y), "b": (X, y)}), MLPConfig(epochs=150, learning_rate=1e-3))
    # Weights are compared in the metric of the centred latent features: the
    # directions the data never excites keep their random initial values.
    Z = embed(m, X)
    Z = Z - Z.mean(axis=0)
    wa, wb = Z @ m.params["Wh"][:, 0], Z @ m.params["Wh"][:, 1]
    assert wa @ wb / (np.linalg.norm(wa) * np.linalg.norm(wb)) > 0.99


def test_epochs_zero_returns_initialisation():
    X, y = linear_data(50)
    cfg = MLPConfig(epochs=0, seed=3)
    m = pretrain(OfflineDataset({"lin": (X, y)}), cfg)
    ref = init_model(cfg, 3, ["lin"])
    for name in ref.params:
        np.testing.assert_array_equal(m.params[name], ref.params[name])


def test_pretrain_is_bit_reproducible():
    X, y = linear_data(200)
    data = OfflineDataset({"lin": (X, y)})
    cfg = MLPConfig(epochs=20, learning_rate=1e-3, seed=4)
    a, b = pretrain(data, cfg), pretrain(data, cfg)
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])


def test_restarts_keep_best_validation():
    X, y = linear_data(200)
    data = OfflineDataset({"lin": (X, y)})
    cfg = MLPConfig(epochs=10, learning_rate=1e-3)
    single = [pretrain(data, MLPConfig(**{**cfg.__dict__, "seed": s})) for s in range(3)]
    best = pretrain(data, cfg, restarts=3)
    vals = [min(r["val_mse"] for r in mdl.history) for mdl in single]
    assert min(r["val_mse"] for r in best.history) == pytest.approx(min(vals))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_epoch():
    X, y = linear_data(100)
    with pytest.raises(NumericalFailure, match="epoch"):
        pretrain(OfflineDataset({"lin": (X, y)}), MLPConfig(epochs=5, learning_rate=1e300))


def test_dataset_validation():
    with pytest.raises(InvalidArgument):
        OfflineDataset({})
    with pytest.raises(InvalidArgument):
        OfflineDataset({"a": (np.zeros((2, 2)), [1, 2]), "b": (np.zeros((2, 3)), [1, 2])})


def test_lipschitz_bound_holds():
    X, y = linear_data(300)
    m = pretrain(OfflineDataset({"lin": (X, y)}), MLPConfig(epochs=30, learning_rate=1e-3))
    L = lipschitz_bound(m)
    rng = np.random.default_rng(0)
    A, B = rng.random((500, 3)), rng.random((500, 3))
    dz = np.linalg.norm(embed(m, A) - embed(m, B), axis=1)
    dx = np.linalg.norm(A - B, axis=1)
    assert np.all(dz <= L * dx + 1e-12)


def test_save_load_bit_exact(tmp_path):
    X, y = linear_data(100)
    m = pretrain(OfflineDataset({"lin": (X, y)}), MLPConfig(epochs=5, learning_rate=1e-3))
    m.gp_init = {"warm": {"kind": "RBF", "lengthscale": 0.1 + 0.2, "signal_variance": 1.0, "noise": 0.1}}
    p1, p2 = tmp_path / "a.jmb", tmp_path / "b.jmb"
    save_model(m, p1)
    back = load_model(p1)
    for name in m.params:
        assert m.params[name].tobytes() == back.params[name].tobytes()
    assert back.input_std.tobytes() == m.input_std.tobytes()
    assert back.history == m.history and back.gp_init == m.gp_init and back.config == m.config
    save_model(back, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "bad.jmb"
    p.write_bytes(b"hello\n")
    with pytest.raises(ParseError):
        load_model(p)


def test_joint_pretrain_without_target_is_pretrain():
    X, y = linear_data(100)
    data = OfflineDataset({"lin": (X, y)})
    cfg = MLPConfig(epochs=5, learning_rate=1e-3)
    res = joint_pretrain(data, cfg, KernelSpec(), KernelSpec("RBF"))
    plain = pretrain(data, cfg)
    assert res.warm == KernelSpec() and res.cold == KernelSpec("RBF") and res.losses == []
    for name in plain.params:
        np.testing.assert_array_equal(res.model.params[name], plain.params[name])


def test_joint_pretrain_with_target():
    X, y = linear_data(300)
    rng = np.random.default_rng(1)
    Xf = rng.random((10, 3))
    yf = np.sin(3 * Xf[:, 0]) + Xf[:, 1]
    data = OfflineDataset({"lin": (X, y)}, target=(Xf, yf))
    res = joint_pretrain(data, MLPConfig(epochs=40, learning_rate=1e-3), KernelSpec(), KernelSpec())
    assert math.isfinite(res.cold.lengthscale) and res.cold.lengthscale > 1e-4
    assert min(res.losses) <= res.losses[0]
    assert set(res.model.gp_init) == {"warm", "cold"}

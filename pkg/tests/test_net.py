import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import gcn_oracle, temporal_oracle
from hstgcnn.errors import InvalidConfig, ShapeMismatch
from hstgcnn.graph import normalize_adjacency, inverse_square_weights
from hstgcnn.net import (Batch, ModelConfig, collate, forward, gcn_layer, init_params, loss_and_grad, model_forward,
                         param_count, param_shapes, predict, prelu, temporal_predictor, window_backward)
from hstgcnn.skeleton import HIGH, LOW, WindowSample


def random_window(rng, level=HIGH, V=None, video="v"):
    V = V if V is not None else (17 if level == LOW else int(rng.integers(1, 9)))
    pos = rng.normal(size=(4, V, 2)) * (1.0 if level == LOW else 20.0)
    return WindowSample(level, video, tuple(f"p{i}" for i in range(V)), 0, rng.normal(size=(4, V, 2)),
                        rng.normal(size=(V, 2)), pos, np.zeros((V, 2)) if level == HIGH else None)


def random_params(rng, config=ModelConfig(HIGH)):
    p = init_params(config, int(rng.integers(1 << 30)))
    tensors = {k: rng.normal(size=np.shape(v)) * 0.5 for k, v in p.tensors.items()}
    for k in tensors:
        if k.endswith("slope"):
            tensors[k] = np.array(rng.uniform(0.05, 0.5))
    return p.replace(tensors)


def test_prelu_examples():
    assert prelu(3.0, 0.25) == 3.0
    assert prelu(-2.0, 0.25) == -0.5
    assert prelu(0.0, 7.0) == 0.0


def test_param_count_default_and_formula():
    cfg = ModelConfig()
    assert param_count(cfg) == 232
    C, T, K = 2, 4, 3
    formula = C * C + C + 1 + 4 * (T * T * K + T + 1) + (1 * T * K + 1)
    assert param_count(cfg) == formula
    assert param_count(ModelConfig(num_tconv=0)) == C * C + C + 1
    assert param_count(ModelConfig(HIGH)) == param_count(ModelConfig(LOW))


def test_init_params():
    cfg = ModelConfig()
    a, b, c = init_params(cfg, 3), init_params(cfg, 3), init_params(cfg, 4)
    assert all(np.array_equal(a[k], b[k]) for k in a.tensors)
    assert any(not np.array_equal(a[k], c[k]) for k in a.tensors)
    for name, arr in a.tensors.items():
        if name.endswith("slope"):
            assert arr == 0.25
        else:
            r = np.sqrt(1 / (2 if name.startswith("gcn") else 12))
            assert np.all(np.abs(arr) < r)
    assert list(a.tensors) == list(param_shapes(cfg))


def test_bad_configs():
    with pytest.raises(InvalidConfig):
        ModelConfig(node_kernel=2)
    with pytest.raises(InvalidConfig):
        ModelConfig(level="mid")
    with pytest.raises(ShapeMismatch):
        init_params(ModelConfig(), 0).replace({"gcn.weight": np.zeros((2, 2))})


def test_gcn_layer_examples(rng):
    p = init_params(ModelConfig(), 0)
    t = dict(p.tensors, **{"gcn.weight": np.eye(2), "gcn.bias": np.zeros(2)})
    x = rng.uniform(0.1, 1.0, size=(2, 4, 1))
    assert np.array_equal(gcn_layer(x, np.ones((4, 1, 1)), p.replace(t)), x)
    t["gcn.weight"] = np.zeros((2, 2))
    assert np.array_equal(gcn_layer(rng.normal(size=(2, 4, 5)), np.ones((4, 5, 5)), p.replace(t)), np.zeros((2, 4, 5)))
    with pytest.raises(ShapeMismatch):
        gcn_layer(x, np.ones((3, 1, 1)), p)


def test_gcn_layer_matches_oracle(rng):
    for _ in range(10):
        V = int(rng.integers(1, 8))
        p = random_params(rng)
        x = rng.normal(size=(2, 4, V))
        adj = normalize_adjacency(inverse_square_weights(rng.normal(size=(4, V, 2))))
        want = gcn_oracle(x, adj, p["gcn.weight"], p["gcn.bias"], float(p["gcn.slope"]))
        assert np.allclose(gcn_layer(x, adj, p), want, rtol=0, atol=1e-12)


def test_temporal_predictor_matches_oracle(rng):
    for _ in range(10):
        V = int(rng.integers(1, 10))
        p = random_params(rng)
        x = rng.normal(size=(2, 4, V))
        got = temporal_predictor(x, p)
        assert got.shape == (2, 1, V)
        assert np.allclose(got, temporal_oracle(x, p.tensors, 5), rtol=0, atol=1e-12)


def test_temporal_zero_weights_give_zero(rng):
    p = init_params(ModelConfig(HIGH), 0)
    p = p.replace({k: np.zeros_like(v) for k, v in p.tensors.items()})
    assert np.array_equal(temporal_predictor(rng.normal(size=(2, 4, 6)), p), np.zeros((2, 1, 6)))
    w = random_window(rng, HIGH, 3)
    assert np.array_equal(model_forward(w, p), np.zeros((3, 2)))


def test_single_node_scalar_recurrence(rng):
    """With one node only the centre tap of each kernel matters."""
    p = random_params(rng)
    x = rng.normal(size=(2, 4, 1))
    got = temporal_predictor(x, p)[:, 0, 0]
    for c in range(2):
        z = list(x[c, :, 0])
        for k in range(5):
            kern, bias = p[f"tconv{k}.kernel"], p[f"tconv{k}.bias"]
            y = [sum(kern[o, i, 1] * z[i] for i in range(4)) + bias[o] for o in range(kern.shape[0])]
            if k == 4:
                z = y
            else:
                a = float(p[f"tconv{k}.slope"])
                act = [v if v >= 0 else a * v for v in y]
                z = act if k == 0 else [u + v for u, v in zip(act, z)]
        assert abs(got[c] - z[0]) < 1e-12


def test_batched_forward_equals_per_window(rng):
    """Padding plus masking leaves every window's prediction unchanged."""
    p = random_params(rng)
    wins = [random_window(rng, HIGH, V) for V in (1, 5, 2, 7)]
    batched = predict(p, wins)
    for w, b in zip(wins, batched):
        assert np.allclose(model_forward(w, p), b, rtol=0, atol=1e-12)
        x = w.inputs.transpose(2, 0, 1)
        adj = normalize_adjacency(inverse_square_weights(w.positions))
        single = temporal_predictor(gcn_layer(x, adj, p), p)[:, 0].T
        assert np.allclose(single, b, rtol=0, atol=1e-12)


def test_forward_deterministic(rng):
    p = random_params(rng)
    w = random_window(rng)
    assert np.array_equal(model_forward(w, p), model_forward(w, p))


@given(st.integers(1, 9), st.randoms(use_true_random=False), st.integers(0, 2**31))
def test_permutation_equivariance_pointwise_kernel(V, rnd, seed):
    """With a width-1 node kernel the whole network is node-permutation equivariant."""
    r = np.random.default_rng(seed)
    p = random_params(r, ModelConfig(HIGH, node_kernel=1))
    w = random_window(r, HIGH, V)
    perm = np.array(rnd.sample(range(V), V))
    wp = WindowSample(HIGH, "v", tuple(w.node_ids[i] for i in perm), 0, w.inputs[:, perm], w.target[perm],
                      w.positions[:, perm], w.anchor[perm])
    assert np.allclose(model_forward(wp, p), model_forward(w, p)[perm], rtol=1e-10, atol=1e-12)


@given(st.integers(1, 9), st.randoms(use_true_random=False), st.integers(0, 2**31))
def test_gcn_layer_permutation_equivariance(V, rnd, seed):
    r = np.random.default_rng(seed)
    p = random_params(r)
    x = r.normal(size=(2, 4, V))
    adj = normalize_adjacency(inverse_square_weights(r.normal(size=(4, V, 2))))
    perm = np.array(rnd.sample(range(V), V))
    got = gcn_layer(x[:, :, perm], adj[:, perm][:, :, perm], p)
    assert np.allclose(got, gcn_layer(x, adj, p)[:, :, perm], rtol=1e-10, atol=1e-12)


def test_node_count_free(rng):
    p = random_params(rng)
    for V in (1, 2, 30):
        assert model_forward(random_window(rng, HIGH, V), p).shape == (V, 2)
    pl = random_params(rng, ModelConfig(LOW))
    assert model_forward(random_window(rng, LOW), pl).shape == (17, 2)
    with pytest.raises(ShapeMismatch):
        model_forward(random_window(rng, LOW), p)


def _loss(p, batch):
    pred = forward(p, batch.inputs, batch.adjacency, batch.mask)
    err = ((pred - batch.target) ** 2).sum(-1) * batch.mask
    return float((err.sum(1) / (batch.mask.sum(1) * 2)).mean())


@pytest.mark.parametrize("level", [HIGH, LOW])
def test_gradients_match_finite_differences(rng, level):
    p = random_params(rng, ModelConfig(level))
    wins = [random_window(rng, level) for _ in range(3)]
    batch = collate(wins, p.config)
    loss, grads = loss_and_grad(p, batch)
    assert abs(loss - _loss(p, batch)) < 1e-12
    h = 1e-5
    bad = 0
    for name, arr in p.tensors.items():
        for idx in np.ndindex(arr.shape):
            plus, minus = {k: v.copy() for k, v in p.tensors.items()}, {k: v.copy() for k, v in p.tensors.items()}
            plus[name][idx] += h
            minus[name][idx] -= h
            fd = (_loss(p.replace(plus), batch) - _loss(p.replace(minus), batch)) / (2 * h)
            a = grads[name][idx]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
            bad += rel > 1e-4
            assert rel < 1e-2, (name, idx, a, fd)
    assert bad <= 0.01 * param_count(p)


def test_zero_residual_and_quadratic_loss(rng):
    p = random_params(rng)
    w = random_window(rng)
    pred = model_forward(w, p)
    loss, grads = window_backward(w, p, pred)
    assert loss == 0.0 and all(np.all(g == 0) for g in grads.values())
    l1, _ = window_backward(w, p, pred + 0.3)
    l2, _ = window_backward(w, p, pred + 0.6)
    assert l2 == pytest.approx(4 * l1, rel=1e-12)


def test_batch_container(rng):
    b = collate([random_window(rng, HIGH, 2), random_window(rng, HIGH, 4)], ModelConfig(HIGH))
    assert isinstance(b, Batch) and len(b) == 2 and b.inputs.shape == (2, 4, 4, 2)
    assert b.mask.tolist() == [[1, 1, 0, 0], [1, 1, 1, 1]]

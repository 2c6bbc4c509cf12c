import numpy as np
import pytest

from shiftcp.autodiff import ParamSet
from shiftcp.graph import make_graph, normalize_adjacency
from shiftcp.models import (
    ModelConfig,
    appnp_forward,
    forward,
    gcn_forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)

from conftest import dense_normalized_oracle, path_graph


def softmax_np(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def dense_gcn_oracle(at, x, p):
    hidden = np.tanh(at @ x @ p["W1"].data + p["b1"].data)
    logits = at @ hidden @ p["W2"].data + p["b2"].data
    return hidden, softmax_np(logits)


def dense_appnp_oracle(at, x, p, beta, hops):
    hidden = np.tanh(x @ p["W1"].data + p["b1"].data)
    h0 = hidden @ p["W2"].data + p["b2"].data
    z = h0
    for _ in range(hops):
        z = (1 - beta) * (at @ z) + beta * h0
    return hidden, softmax_np(z)


@pytest.fixture
def four_path():
    g = path_graph(4, d=3, num_classes=3, seed=2)
    return g, normalize_adjacency(g)


def test_zero_weights_give_uniform_probs(four_path):
    g, adj = four_path
    params = ParamSet(
        {
            "W1": np.zeros((3, 5)),
            "b1": np.zeros((1, 5)),
            "W2": np.zeros((5, 3)),
            "b2": np.zeros((1, 3)),
        }
    )
    for arch in ("gcn", "appnp"):
        cfg = ModelConfig(arch=arch, hidden_dim=5)
        probs = forward(cfg, params, adj, g.features).probs.data
        np.testing.assert_allclose(probs, np.full((4, 3), 1.0 / 3.0), atol=1e-12)


def test_isolated_node_hidden_is_activation_of_input():
    g = make_graph(1, [], np.array([[0.3, -1.2, 0.7]]), [0], 2)
    adj = normalize_adjacency(g)
    params = ParamSet(
        {
            "W1": np.eye(3),
            "b1": np.zeros((1, 3)),
            "W2": np.zeros((3, 2)),
            "b2": np.zeros((1, 2)),
        }
    )
    fw = gcn_forward(params, adj, g.features)
    np.testing.assert_allclose(fw.hidden.data, np.tanh(g.features), atol=1e-15)


def test_gcn_matches_dense_oracle(four_path):
    g, adj = four_path
    cfg = ModelConfig(arch="gcn", hidden_dim=6)
    params = init_params(cfg, 3, 3, seed=5)
    fw = gcn_forward(params, adj, g.features)
    at = dense_normalized_oracle(g.n, g.edges)
    hidden, probs = dense_gcn_oracle(at, g.features, params)
    assert np.abs(fw.hidden.data - hidden).max() < 1e-10
    assert np.abs(fw.probs.data - probs).max() < 1e-10


def test_appnp_no_propagation_is_pure_mlp(four_path):
    g, adj = four_path
    cfg = ModelConfig(arch="appnp", hidden_dim=6, appnp_hops=0)
    params = init_params(cfg, 3, 3, seed=6)
    fw = appnp_forward(params, adj, g.features, cfg)
    hidden = np.tanh(g.features @ params["W1"].data + params["b1"].data)
    h0 = hidden @ params["W2"].data + params["b2"].data
    np.testing.assert_allclose(fw.probs.data, softmax_np(h0), atol=1e-12)


def test_appnp_full_teleport_ignores_graph(four_path):
    g, adj = four_path
    cfg = ModelConfig(arch="appnp", hidden_dim=6, appnp_teleport=1.0, appnp_hops=7)
    params = init_params(cfg, 3, 3, seed=6)
    got = appnp_forward(params, adj, g.features, cfg).probs.data
    mlp_cfg = ModelConfig(arch="appnp", hidden_dim=6, appnp_hops=0)
    want = appnp_forward(params, adj, g.features, mlp_cfg).probs.data
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_appnp_matches_dense_oracle(four_path):
    g, adj = four_path
    cfg = ModelConfig(arch="appnp", hidden_dim=6, appnp_teleport=0.1, appnp_hops=10)
    params = init_params(cfg, 3, 3, seed=7)
    fw = appnp_forward(params, adj, g.features, cfg)
    at = dense_normalized_oracle(g.n, g.edges)
    hidden, probs = dense_appnp_oracle(at, g.features, params, 0.1, 10)
    assert np.abs(fw.hidden.data - hidden).max() < 1e-10
    assert np.abs(fw.probs.data - probs).max() < 1e-10


@pytest.mark.parametrize("arch", ["gcn", "appnp"])
def test_probability_rows_sum_to_one(arch):
    g = path_graph(9, d=4, num_classes=5, seed=8)
    adj = normalize_adjacency(g)
    cfg = ModelConfig(arch=arch, hidden_dim=8)
    params = init_params(cfg, 4, 5, seed=1)
    probs = forward(cfg, params, adj, g.features).probs.data
    assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-9
    assert probs.min() >= 0.0 and probs.max() <= 1.0


@pytest.mark.parametrize("arch", ["gcn", "appnp"])
def test_permutation_equivariance(arch):
    rng = np.random.default_rng(3)
    g = path_graph(8, d=3, num_classes=3, seed=10)
    adj = normalize_adjacency(g)
    cfg = ModelConfig(arch=arch, hidden_dim=5, appnp_hops=4)
    params = init_params(cfg, 3, 3, seed=2)
    probs = forward(cfg, params, adj, g.features).probs.data

    perm = rng.permutation(g.n)
    new_feats = np.empty_like(g.features)
    new_feats[perm] = g.features
    new_labels = np.empty_like(g.labels)
    new_labels[perm] = g.labels
    g2 = make_graph(g.n, perm[g.edges], new_feats, new_labels, g.num_classes)
    probs2 = forward(cfg, params, normalize_adjacency(g2), g2.features).probs.data
    assert np.abs(probs2[perm] - probs).max() < 1e-9


def test_checkpoint_round_trip(tmp_path, four_path):
    g, adj = four_path
    cfg = ModelConfig(arch="appnp", hidden_dim=6, appnp_hops=3)
    params = init_params(cfg, 3, 3, seed=4)
    history = [(1.0, 0.8, 0.1, 0.1), (0.9, 0.7, 0.1, 0.1)]
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, cfg, params, history)
    cfg2, params2, history2 = load_checkpoint(path)
    assert cfg2 == cfg
    assert history2 == [list(h) for h in history]
    for k, v in params.items():
        np.testing.assert_array_equal(v.data, params2[k].data)
    probs = forward(cfg, params, adj, g.features).probs.data
    probs2 = forward(cfg2, params2, adj, g.features).probs.data
    np.testing.assert_array_equal(probs, probs2)


def test_config_validation():
    with pytest.raises(ValueError, match="arch"):
        ModelConfig(arch="gat")
    with pytest.raises(ValueError, match="hidden_dim"):
        ModelConfig(hidden_dim=0)
    with pytest.raises(ValueError, match="teleport"):
        ModelConfig(arch="appnp", appnp_teleport=0.0)
    with pytest.raises(ValueError, match="two-layer"):
        ModelConfig(num_layers=3)
    with pytest.raises(ValueError, match="tanh"):
        ModelConfig(activation="relu")


def test_shape_mismatch_reported(four_path):
    g, adj = four_path
    cfg = ModelConfig(arch="gcn", hidden_dim=4)
    params = init_params(cfg, in_dim=7, num_classes=3, seed=0)  # wrong in_dim
    with pytest.raises(Exception, match="7"):
        gcn_forward(params, adj, g.features)

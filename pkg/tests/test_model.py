import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import PATH3, TRIANGLE, random_graph
from heterograph import VARIANTS, VariantConfig, build_operators, forward, from_edge_list, get_variant, init_params, loss, predict
from heterograph.model import ModelParams, load_params, log_softmax, save_params


def test_classifier_dimensions():
    assert init_params(10, 64, 5, get_variant("H2GCN-2")).W_c.shape == (448, 5)
    assert init_params(10, 64, 5, get_variant("H2GCN-1")).W_c.shape == (192, 5)
    assert init_params(10, 64, 5, get_variant("MLP")).W_c.shape == (64, 5)


@given(st.integers(0, 2), st.integers(1, 64))
def test_dimension_law(K, p):
    v = VariantConfig(K=K, jk_keep=tuple(range(K + 1)), neighborhoods=("one_hop", "two_hop") if K else ())
    assert v.final_dim(p) == (2 ** (K + 1) - 1) * p
    assert v.round_dims(p) == [2**k * p for k in range(K + 1)]


def test_glorot_bounds_and_determinism():
    a = init_params(30, 16, 4, get_variant("NL"), seed=3)
    b = init_params(30, 16, 4, get_variant("NL"), seed=3)
    for x, y in zip(a.arrays(), b.arrays()):
        assert np.array_equal(x, y)
        assert np.abs(x).max() <= math.sqrt(6 / sum(x.shape))
    assert [w.shape for w in a.W_rounds] == [(48, 16), (48, 16)]
    with pytest.raises(ValueError):
        init_params(3, 0, 2, get_variant("S0"))


def test_variant_validation():
    with pytest.raises(ValueError):
        VariantConfig(jk_keep=())
    with pytest.raises(ValueError):
        VariantConfig(K=1, jk_keep=(2,))
    with pytest.raises(ValueError):
        VariantConfig(dropout_rate=1.0)
    with pytest.raises(ValueError):
        get_variant("nope")


def test_k0_is_mlp():
    assert VARIANTS["MLP"].K == 0 and VARIANTS["MLP"].final_dim(8) == 8


def _identity_params(n_feat, variant, num_classes=None):
    num_classes = num_classes or n_feat
    return ModelParams(np.eye(n_feat), np.zeros((variant.final_dim(n_feat), num_classes)))


def test_forward_single_edge():
    g = from_edge_list([(0, 1)], 2, features=np.eye(2))
    v = VariantConfig(K=1, neighborhoods=("one_hop",), jk_keep=(0, 1), embed_nonlinearity="identity")
    _, cache = forward(_identity_params(2, v), g, build_operators(g, v), v)
    assert np.array_equal(cache.rounds[1][0], [0.0, 1.0])


def test_forward_triangle_two_hop_empty():
    g = from_edge_list(TRIANGLE, 3, features=np.eye(3))
    v = VariantConfig(K=1, neighborhoods=("two_hop",), jk_keep=(0, 1))
    _, cache = forward(_identity_params(3, v), g, build_operators(g, v), v)
    assert not cache.rounds[1].any()


def test_forward_path_normalized_average():
    g = from_edge_list(PATH3, 3, features=np.eye(3))
    v = VariantConfig(K=1, neighborhoods=("one_hop",), jk_keep=(0, 1), embed_nonlinearity="identity")
    _, cache = forward(_identity_params(3, v), g, build_operators(g, v), v)
    np.testing.assert_allclose(cache.rounds[1][1], [1 / math.sqrt(2), 0, 1 / math.sqrt(2)], rtol=1e-15)


def test_forward_operator_mismatch():
    g = from_edge_list(PATH3, 3, features=np.eye(3))
    ops = build_operators(g, get_variant("S1"))
    with pytest.raises(ValueError):
        forward(init_params(3, 4, 2, get_variant("S0")), g, ops, get_variant("S0"))


def test_forward_dense_oracle(rng):
    g = random_graph(rng, 25, feature_dim=6)
    v = get_variant("H2GCN-2")
    params = init_params(6, 4, 3, v, seed=1)
    logits, _ = forward(params, g, build_operators(g, v), v)
    A = g.adjacency.toarray()
    A2 = ((A @ A > 0) & (A == 0) & ~np.eye(25, dtype=bool)).astype(float)

    def norm(M):
        d = M.sum(1)
        inv = np.where(d > 0, 1 / np.sqrt(np.where(d > 0, d, 1)), 0)
        return inv[:, None] * M * inv[None, :]

    r0 = np.maximum(g.features @ params.W_e, 0)
    r1 = np.hstack([norm(A) @ r0, norm(A2) @ r0])
    r2 = np.hstack([norm(A) @ r1, norm(A2) @ r1])
    np.testing.assert_allclose(logits, np.hstack([r0, r1, r2]) @ params.W_c, rtol=1e-12, atol=1e-12)


def test_eval_forward_bitwise_deterministic(rng):
    g = random_graph(rng, 30, feature_dim=5)
    for name in ("H2GCN-2", "NL", "NS0"):
        v = get_variant(name)
        params = init_params(5, 8, 3, v, seed=0)
        ops = build_operators(g, v)
        a, ca = forward(params, g, ops, v, "eval")
        b, _ = forward(params, g, ops, v, "eval", seed=99)
        assert np.array_equal(a, b) and ca.dropout_mask is None


def test_train_mode_dropout_seeded(rng):
    g = random_graph(rng, 30, feature_dim=5)
    v = get_variant("H2GCN-2")
    params, ops = init_params(5, 8, 3, v), build_operators(g, v)
    a, ca = forward(params, g, ops, v, "train", seed=1)
    b, _ = forward(params, g, ops, v, "train", seed=1)
    c, _ = forward(params, g, ops, v, "train", seed=2)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert set(np.unique(ca.dropout_mask)) <= {0.0, 2.0}
    with pytest.raises(ValueError):
        forward(params, g, ops, v, "predict")


def test_isolated_node_uses_ego_only():
    x = np.eye(4)
    g = from_edge_list([(0, 1), (1, 2)], 4, labels=[0, 1, 0, 1], features=x)
    v = get_variant("H2GCN-2")
    params = init_params(4, 4, 2, v, seed=0)
    _, cache = forward(params, g, build_operators(g, v), v)
    assert not cache.rounds[1][3].any() and not cache.rounds[2][3].any()
    assert cache.rounds[0][3].any()


# --- loss / predict -----------------------------------------------------------------

def _dummy(F=2, C=2):
    return ModelParams(np.ones((F, F)), np.ones((F, C)))


def test_loss_uniform_logits():
    assert abs(loss(np.zeros((4, 5)), [0, 1, 2, 3], np.arange(4), _dummy()) - math.log(5)) < 1e-15


def test_loss_saturates():
    labels = np.array([0, 2, 1])
    logits = 50.0 * np.eye(3)[labels]
    assert loss(logits, labels, np.arange(3), _dummy()) < 1e-10


def test_loss_frobenius_penalty():
    value = loss(np.zeros((3, 2)), [0, 1, 0], np.arange(3), _dummy(), l2=1.0)
    assert abs(value - (math.log(2) + 8)) < 1e-12


def test_loss_includes_round_matrices():
    p = ModelParams(np.zeros((2, 2)), np.zeros((2, 2)), [np.ones((3, 2))])
    assert loss(np.zeros((1, 2)), [0], [0], p, l2=0.5) == pytest.approx(math.log(2) + 3)


def test_loss_empty_mask():
    with pytest.raises(ValueError):
        loss(np.zeros((2, 2)), [0, 1], [], _dummy())


def test_log_softmax_stable():
    out = log_softmax(np.array([[1000.0, 0.0], [-1000.0, -1000.0]]))
    assert np.isfinite(out).all() and out[1, 0] == pytest.approx(math.log(0.5))


def test_predict_examples():
    assert predict(np.array([[0.1, 0.9]])).tolist() == [1]
    assert predict(np.array([[0.5, 0.5]])).tolist() == [0]


def test_predict_matches_softmax_argmax(rng):
    logits = rng.normal(size=(200, 6)) * 5
    probs = np.exp(log_softmax(logits))
    assert np.array_equal(predict(logits), np.argmax(probs, axis=1))


# --- checkpoints -----------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    p = init_params(7, 5, 3, get_variant("NL"), seed=4)
    save_params(p, tmp_path / "w.bin")
    q = load_params(tmp_path / "w.bin")
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))
    raw = (tmp_path / "w.bin").read_bytes()
    assert raw[:8] == b"H2GCNPRM"
    (tmp_path / "t.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="truncated"):
        load_params(tmp_path / "t.bin")
    (tmp_path / "x.bin").write_bytes(b"garbage!" + raw[8:])
    with pytest.raises(ValueError, match="checkpoint"):
        load_params(tmp_path / "x.bin")

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heterograph import (CorpusFeatures, GenConfig, SyntheticFeatures, attach_features,
                         compatibility_from_h, compatibility_matrix, edge_homophily, generate_graph,
                         make_splits)
from heterograph.graph import GraphError, write_edge_list, write_node_table
from heterograph.synth import SplitAssignment


def test_compatibility_from_h_examples():
    assert np.array_equal(compatibility_from_h(1.0, 3), np.eye(3))
    assert np.array_equal(compatibility_from_h(0.0, 2), [[0, 1], [1, 0]])
    H = compatibility_from_h(0.1, 5)
    assert np.allclose(np.diag(H), 0.1) and np.allclose(H[~np.eye(5, dtype=bool)], 0.225)


def test_compatibility_from_h_errors():
    for bad in (-0.1, 1.1):
        with pytest.raises(ValueError):
            compatibility_from_h(bad, 3)
    assert compatibility_from_h(1.0, 1).tolist() == [[1.0]]
    with pytest.raises(ValueError):
        compatibility_from_h(0.5, 1)


@given(st.floats(0, 1), st.integers(2, 12))
def test_compatibility_rows(h, k):
    H = compatibility_from_h(h, k)
    assert np.all(np.abs(H.sum(axis=1) - 1) < 1e-12)
    assert ((H >= 0) & (H <= 1)).all()


def test_uniform_compatibility_is_exact():
    for k in range(2, 11):
        H = compatibility_from_h(1 / k, k)
        assert (H == H[0, 0]).all()


# --- generator -------------------------------------------------------------------

def _cfg(**kw):
    base = dict(n=1490, num_classes=5, target_h=0.5, edges_per_node=2, seed=3)
    base.update(kw)
    return GenConfig(**base)


def test_measured_h_near_target():
    g = generate_graph(_cfg(target_h=0.9))
    assert abs(edge_homophily(g) - 0.9) <= 0.05


def test_h_one_has_no_cross_class_edges_outside_seed():
    k = 5
    g = generate_graph(_cfg(target_h=1.0, num_classes=k))
    e = g.edge_array()
    cross = e[g.labels[e[:, 0]] != g.labels[e[:, 1]]]
    # only the seed ring (one node per class) links different classes
    assert (cross < k).all() and len(cross) == k
    assert edge_homophily(g) == 1 - k / g.num_edges


def test_edge_count_and_average_degree():
    g = generate_graph(_cfg())
    assert g.num_edges == 2 * (1490 - 5) + 5
    assert abs(2 * g.num_edges / g.n - 3.98) < 0.02


def test_generator_invariants():
    m = 3
    g = generate_graph(_cfg(n=400, edges_per_node=m, seed=11))
    assert (g.degrees[5:] >= m).all()
    assert g.meta["ingest"]["self_loops"] == 0 and g.meta["ingest"]["duplicates"] == 0
    assert np.bincount(g.labels).tolist() == [80] * 5


def test_heavy_tailed_degrees():
    d = generate_graph(_cfg(n=3000, target_h=0.5)).degrees
    assert d.max() > 8 * np.median(d)


def test_small_candidate_pool_links_to_all():
    # with h = 1 a node whose class has a single earlier member attaches to that node only
    g = generate_graph(GenConfig(n=6, num_classes=5, target_h=1.0, edges_per_node=3, seed=0))
    assert g.degrees[5] == 1


def test_generator_deterministic(tmp_path):
    a, b = generate_graph(_cfg(n=300)), generate_graph(_cfg(n=300))
    write_edge_list(a, tmp_path / "a")
    write_edge_list(b, tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    assert not np.array_equal(generate_graph(_cfg(n=300, seed=4)).indices, a.indices)


def test_compatibility_converges_at_scale():
    for h in (0.2, 0.6):
        g = generate_graph(_cfg(n=5000, target_h=h, seed=21))
        assert np.abs(compatibility_matrix(g) - compatibility_from_h(h, 5)).max() < 0.05


def test_explicit_compatibility():
    H = np.array([[0.0, 1.0], [1.0, 0.0]])
    g = generate_graph(GenConfig(n=200, num_classes=2, compatibility=H, edges_per_node=2, seed=0))
    assert edge_homophily(g) == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig(n=3, num_classes=5)
    with pytest.raises(ValueError):
        GenConfig(n=10, num_classes=2, edges_per_node=0)
    with pytest.raises(ValueError):
        GenConfig(n=10, num_classes=2, target_h=1.5)


# --- features ----------------------------------------------------------------------

def test_synthetic_features_separate_classes():
    g = attach_features(generate_graph(_cfg(n=500)), SyntheticFeatures(100, 0.2), seed=0)
    rng = np.random.default_rng(0)
    x, y = g.features, g.labels
    same, cross = [], []
    while len(same) < 1000 or len(cross) < 1000:
        u, v = rng.integers(0, g.n, 2)
        if u == v:
            continue
        (same if y[u] == y[v] else cross).append(float(x[u] @ x[v]))
    assert np.mean(same[:1000]) > np.mean(cross[:1000])


def test_no_signal_means_no_class_dependence():
    g = attach_features(generate_graph(_cfg(n=2000)), SyntheticFeatures(50, 0.0, 0.9, 0.1), seed=1)
    for c in range(5):
        rate = g.features[g.labels == c].mean()
        assert abs(rate - 0.1) < 0.01


def test_corpus_self_mapping(tmp_path):
    g = attach_features(generate_graph(_cfg(n=200)), SyntheticFeatures(20, 0.3), seed=2)
    write_node_table(g, tmp_path / "corpus.csv")
    h = attach_features(g, CorpusFeatures(tmp_path / "corpus.csv"), seed=9)
    for c in range(5):
        a = g.features[g.labels == c]
        b = h.features[h.labels == c]
        assert sorted(map(tuple, a)) == sorted(map(tuple, b))


def test_corpus_class_too_small(tmp_path):
    small = generate_graph(_cfg(n=50))
    small = attach_features(small, SyntheticFeatures(5), seed=0)
    write_node_table(small, tmp_path / "corpus.csv")
    big = generate_graph(_cfg(n=100))
    with pytest.raises(GraphError, match="class"):
        attach_features(big, CorpusFeatures(tmp_path / "corpus.csv"), seed=0)


# --- splits ----------------------------------------------------------------------

def test_split_examples():
    labels = np.repeat(np.arange(5), 20)
    sp = make_splits(labels, (0.25, 0.25, 0.5), seed=0)
    for c in range(5):
        assert np.sum(labels[sp.train] == c) == 5
    all_train = make_splits(labels, (1, 0, 0), seed=0)
    assert all_train.train.size == 100 and all_train.test.size == 0
    other = make_splits(labels, (0.25, 0.25, 0.5), seed=1)
    assert not np.array_equal(sp.tags, other.tags)
    for name in ("train", "val", "test"):
        assert np.array_equal(np.bincount(labels[sp.indices(name)], minlength=5),
                              np.bincount(labels[other.indices(name)], minlength=5))


def test_split_errors():
    with pytest.raises(ValueError):
        make_splits([0, 0, 1, 1, 1], (0.5, 0.5, 0.5))
    with pytest.raises(ValueError, match="class 0"):
        make_splits([0, 0, 1, 1, 1], (0.4, 0.3, 0.3))


@given(st.lists(st.integers(0, 3), min_size=12, max_size=200),
       st.tuples(st.integers(1, 10), st.integers(1, 10), st.integers(1, 10)), st.integers(0, 2**32))
@settings(max_examples=80, deadline=None)
def test_split_partition_property(labels, w, seed):
    labels = np.asarray(labels)
    if np.bincount(labels).min(initial=3) < 3 or (np.bincount(labels) == 0).any():
        return
    fr = np.asarray(w, float) / sum(w)
    sp = make_splits(labels, tuple(fr), seed=seed)
    assert sorted(np.concatenate([sp.train, sp.val, sp.test]).tolist()) == list(range(labels.size))
    for c in np.unique(labels):
        size = np.sum(labels == c)
        counts = [np.sum(labels[sp.indices(name)] == c) for name in ("train", "val", "test")]
        assert min(counts) >= 1
        if (fr * size).min() >= 1:  # otherwise the at-least-one rule takes precedence
            assert all(abs(k - f * size) <= 1 + 1e-9 for k, f in zip(counts, fr))


def test_split_dict_round_trip():
    sp = make_splits(np.repeat(np.arange(3), 10), seed=5)
    back = SplitAssignment.from_dict(sp.to_dict(), 30)
    assert np.array_equal(back.tags, sp.tags)
    d = sp.to_dict()
    d["test"] = d["test"][1:]
    with pytest.raises(GraphError, match="cover"):
        SplitAssignment.from_dict(d, 30)
    d = sp.to_dict()
    d["val"] = d["val"] + [d["train"][0]]
    with pytest.raises(GraphError, match="overlap"):
        SplitAssignment.from_dict(d, 30)

"""Cross-library smoke tests: the compiled engine against networkx, sklearn,
and numpy oracles, plus an end-to-end experiment run."""

import math

import networkx as nx
import numpy as np
import pytest
from sklearn.metrics import average_precision_score, f1_score, roc_auc_score

import gpbench as gp


def nx_to_gp(G, x=None):
    n = G.number_of_nodes()
    if x is None:
        x = np.ones((n, 1))
    edges = [(int(u), int(v)) for u, v in G.edges()]
    return gp.graph_from_edges(n, edges, x)


def random_graphs():
    cases = []
    for n, p, seed in [(12, 0.3, 1), (18, 0.15, 2), (25, 0.08, 3), (9, 0.5, 4)]:
        cases.append(nx.gnp_random_graph(n, p, seed=seed))
    lonely = nx.gnp_random_graph(10, 0.25, seed=5)
    lonely.add_node(10)  # guaranteed isolated node
    cases.append(lonely)
    return cases


# --- graph core ---------------------------------------------------------------


def test_graph_construction_matches_networkx():
    for G in random_graphs():
        g = nx_to_gp(G)
        assert g.n == G.number_of_nodes()
        assert g.edge_entries() == 2 * G.number_of_edges()
        assert g.undirected_edges() == G.number_of_edges()
        for v in G.nodes():
            assert g.degree(v) == G.degree(v)
        a = g.dense_adjacency()
        assert np.array_equal(a, a.T)
        assert np.all(np.diag(a) == 0.0)
        assert sorted(g.edges()) == sorted(
            [(u, v) for u, v in G.edges()] + [(v, u) for u, v in G.edges()]
        )


def test_closeness_is_reciprocal_distance_sum():
    for G in random_graphs():
        got = gp.closeness_centrality(nx_to_gp(G))
        for v in G.nodes():
            total = sum(nx.shortest_path_length(G, source=v).values())
            want = 1.0 / total if total > 0 else 0.0
            assert got[v] == pytest.approx(want, abs=1e-12)


def test_local_clustering_matches_networkx():
    for G in random_graphs():
        got = gp.local_clustering(nx_to_gp(G))
        want = nx.clustering(G)
        for v in G.nodes():
            assert got[v] == pytest.approx(want[v], abs=1e-12)


def test_diameter_on_largest_component():
    path_plus_triangle = nx.path_graph(5)
    path_plus_triangle.add_edges_from([(5, 6), (6, 7), (7, 5)])
    assert gp.diameter_largest_component(nx_to_gp(path_plus_triangle)) == 4

    for seed in range(6, 10):
        G = nx.gnp_random_graph(16, 0.3, seed=seed)
        if not nx.is_connected(G):
            continue
        assert gp.diameter_largest_component(nx_to_gp(G)) == nx.diameter(G)


def test_dataset_stats_cross_check():
    graphs = gp.separable_two_class(10, 101)
    stats = gp.dataset_stats(graphs)
    nxs = []
    for g in graphs:
        G = nx.Graph()
        G.add_nodes_from(range(g.n))
        G.add_edges_from(g.edges())
        nxs.append(G)
    assert stats.graph_count == 10
    assert stats.class_count == 2
    assert stats.avg_nodes == pytest.approx(np.mean([g.n for g in graphs]))
    assert stats.avg_edges == pytest.approx(
        np.mean([g.edge_entries() for g in graphs])
    )
    assert stats.avg_degree == pytest.approx(
        np.mean([g.edge_entries() / g.n for g in graphs])
    )
    assert stats.avg_clustering == pytest.approx(
        np.mean([np.mean(list(nx.clustering(G).values())) for G in nxs])
    )
    want_diam = []
    for G in nxs:
        comp = max(nx.connected_components(G), key=len)
        want_diam.append(nx.diameter(G.subgraph(comp)))
    assert stats.avg_diameter == pytest.approx(np.mean(want_diam))


def test_tudataset_fixture_roundtrip(tmp_path):
    (tmp_path / "tiny_A.txt").write_text(
        "1, 2\n2, 1\n1, 3\n3, 1\n2, 3\n3, 2\n4, 5\n5, 4\n"
    )
    (tmp_path / "tiny_graph_indicator.txt").write_text("1\n1\n1\n2\n2\n")
    (tmp_path / "tiny_graph_labels.txt").write_text("3\n7\n")
    gs = gp.load_tudataset(str(tmp_path), "tiny")
    assert [g.n for g in gs] == [3, 2]
    assert [g.undirected_edges() for g in gs] == [3, 1]
    assert [g.graph_label for g in gs] == [0.0, 1.0]
    assert gs[0].x.shape == (3, 1) and np.all(gs[0].x == 1.0)
    with pytest.raises(gp.EngineError, match="ingestion"):
        gp.load_tudataset(str(tmp_path), "absent")


def test_edgelist_loader(tmp_path):
    (tmp_path / "e.txt").write_text("0 1\n1 2\n")
    (tmp_path / "x.txt").write_text("1.0,0.0\n0.0,1.0\n1.0,1.0\n")
    (tmp_path / "y.txt").write_text("0\n1\n0\n")
    g = gp.load_edgelist_graph(
        str(tmp_path / "e.txt"), str(tmp_path / "x.txt"), str(tmp_path / "y.txt")
    )
    assert g.n == 3 and g.edge_entries() == 4
    assert g.node_labels == [0, 1, 0]
    (tmp_path / "y2.txt").write_text("0\n1\n")
    with pytest.raises(gp.EngineError, match="ingestion"):
        gp.load_edgelist_graph(
            str(tmp_path / "e.txt"), str(tmp_path / "x.txt"), str(tmp_path / "y2.txt")
        )


# --- pooling primitives ---------------------------------------------------------


def test_gcn_norm_matches_formula():
    rng = np.random.default_rng(11)
    for n in (4, 7, 10):
        a = (rng.random((n, n)) < 0.4).astype(float)
        a = np.triu(a, 1)
        a = a + a.T
        a_loop = a + np.eye(n)
        d = a_loop.sum(axis=1)
        want = a_loop / np.sqrt(np.outer(d, d))
        assert np.allclose(gp.gcn_norm_dense(a), want, atol=1e-12)


def test_select_topk_matches_sort_oracle():
    rng = np.random.default_rng(12)
    for _ in range(200):
        n = int(rng.integers(1, 30))
        ratio = float(rng.uniform(0.05, 1.0))
        scores = rng.integers(0, 6, n) * 0.25  # heavy ties
        k = gp.keep_count(n, ratio)
        assert 1 <= k <= n
        order = sorted(range(n), key=lambda i: (-scores[i], i))
        want = sorted(order[:k])
        assert gp.select_topk(list(scores), ratio) == want


def kmis_oracle(G, scores, k):
    n = G.number_of_nodes()
    anchor_of = [-1] * n
    anchors = []
    while True:
        alive = [i for i in range(n) if anchor_of[i] == -1]
        if not alive:
            break
        best = max(alive, key=lambda i: (scores[i], -i))
        anchors.append(best)
        ball = nx.single_source_shortest_path_length(G, best, cutoff=k)
        for u in ball:
            if anchor_of[u] == -1:
                anchor_of[u] = best
    idx = sorted(anchors)
    rank = {a: p for p, a in enumerate(idx)}
    return idx, [rank[anchor_of[u]] for u in range(n)]


def test_kmis_matches_greedy_oracle():
    rng = np.random.default_rng(13)
    for trial in range(40):
        n = int(rng.integers(2, 14))
        G = nx.gnp_random_graph(n, float(rng.uniform(0.1, 0.6)), seed=trial)
        scores = (
            list(rng.integers(0, 4, n) * 0.5)
            if trial % 2
            else list(rng.random(n))
        )
        for k in (1, 2):
            a = nx_to_gp(G).dense_adjacency()
            idx, cluster = gp.kmis_select(a, scores, k)
            want_idx, want_cluster = kmis_oracle(G, scores, k)
            assert idx == want_idx
            assert cluster == want_cluster


def test_coarsen_matches_dense_oracle():
    rng = np.random.default_rng(14)
    h = rng.normal(size=(6, 3))
    a = rng.random((6, 6))
    a = a + a.T
    s = rng.random((6, 2))
    s = s / s.sum(axis=1, keepdims=True)
    hp, ap = gp.coarsen_cluster(h, a, s)
    assert np.allclose(hp, s.T @ h, atol=1e-12)
    assert np.allclose(ap, s.T @ a @ s, atol=1e-12)


def test_cluster_losses_closed_forms():
    s = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    two_edges = np.zeros((4, 4))
    two_edges[0, 1] = two_edges[1, 0] = 1.0
    two_edges[2, 3] = two_edges[3, 2] = 1.0

    assert gp.mincut_losses(two_edges, s)["ortho"] == pytest.approx(0.0, abs=1e-9)
    assert gp.dmon_losses(two_edges, s)["collapse"] == pytest.approx(0.0, abs=1e-9)
    assert gp.justbalance_loss(s) == pytest.approx(-1.0, abs=1e-9)
    assert gp.dmon_losses(two_edges, s)["modularity"] == pytest.approx(
        -0.5, abs=1e-9
    )
    d = gp.diffpool_losses(s @ s.T, s)
    assert d["link"] == pytest.approx(0.0, abs=1e-9)
    assert d["entropy"] == pytest.approx(0.0, abs=1e-9)


def test_cluster_losses_match_numpy():
    rng = np.random.default_rng(15)
    n, c = 8, 3
    a = (rng.random((n, n)) < 0.4).astype(float)
    a = np.triu(a, 1)
    a = a + a.T
    logits = rng.normal(size=(n, c))
    s = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)

    link = np.linalg.norm(a - s @ s.T, "fro") / n**2
    ent = np.mean(-np.sum(s * np.log(s), axis=1))
    got = gp.diffpool_losses(a, s)
    assert got["link"] == pytest.approx(link, abs=1e-9)
    assert got["entropy"] == pytest.approx(ent, abs=1e-9)

    deg = np.diag(a.sum(axis=1))
    cut = -np.trace(s.T @ a @ s) / np.trace(s.T @ deg @ s)
    sts = s.T @ s
    ortho = np.linalg.norm(
        sts / np.linalg.norm(sts, "fro") - np.eye(c) / math.sqrt(c), "fro"
    )
    got = gp.mincut_losses(a, s)
    assert got["cut"] == pytest.approx(cut, abs=1e-9)
    assert got["ortho"] == pytest.approx(ortho, abs=1e-9)

    evals = np.linalg.eigvalsh(sts)
    jb = -np.sum(np.sqrt(np.clip(evals, 0, None))) / math.sqrt(n * c)
    assert gp.justbalance_loss(s) == pytest.approx(jb, abs=1e-8)


def test_dmon_modularity_matches_networkx():
    rng = np.random.default_rng(16)
    for trial in range(10):
        n, c = 12, 3
        G = nx.gnp_random_graph(n, 0.3, seed=100 + trial)
        if G.number_of_edges() == 0:
            continue
        labels = rng.integers(0, c, n)
        labels[:c] = np.arange(c)  # every community non-empty
        s = np.zeros((n, c))
        s[np.arange(n), labels] = 1.0
        communities = [set(np.flatnonzero(labels == j)) for j in range(c)]
        q = nx.algorithms.community.modularity(G, communities)
        got = gp.dmon_losses(nx_to_gp(G).dense_adjacency(), s)["modularity"]
        assert got == pytest.approx(-q, abs=1e-9)


# --- metrics ---------------------------------------------------------------------


def test_classification_metrics_match_sklearn():
    rng = np.random.default_rng(17)
    for _ in range(50):
        n = int(rng.integers(5, 40))
        truth = list(rng.integers(0, 4, n))
        pred = list(rng.integers(0, 4, n))
        assert gp.accuracy(pred, truth) == pytest.approx(
            np.mean(np.array(pred) == np.array(truth))
        )
        assert gp.micro_f1(pred, truth) == pytest.approx(
            f1_score(truth, pred, average="micro", zero_division=0), abs=1e-12
        )
        assert gp.macro_f1(pred, truth) == pytest.approx(
            f1_score(truth, pred, average="macro", zero_division=0), abs=1e-12
        )


def test_ranking_metrics_match_sklearn():
    rng = np.random.default_rng(18)
    for trial in range(50):
        n = int(rng.integers(4, 30))
        truth = list(rng.integers(0, 2, n))
        if len(set(truth)) < 2:
            truth[0], truth[1] = 0, 1
        distinct = list(rng.permutation(np.linspace(0.01, 0.99, n)))
        assert gp.average_precision(distinct, truth) == pytest.approx(
            average_precision_score(truth, distinct), abs=1e-12
        )
        assert gp.auroc(distinct, truth) == pytest.approx(
            roc_auc_score(truth, distinct), abs=1e-10
        )
        tied = list(rng.integers(0, 4, n) * 0.25)
        assert gp.auroc(tied, truth) == pytest.approx(
            roc_auc_score(truth, tied), abs=1e-10
        )


def test_regression_metrics_match_numpy():
    rng = np.random.default_rng(19)
    pred = rng.normal(size=25)
    truth = rng.normal(size=25)
    assert gp.rmse(list(pred), list(truth)) == pytest.approx(
        math.sqrt(np.mean((pred - truth) ** 2)), abs=1e-12
    )
    assert gp.mae(list(pred), list(truth)) == pytest.approx(
        np.mean(np.abs(pred - truth)), abs=1e-12
    )
    vals = [0.8, 0.9]
    assert gp.mean_of(vals) == pytest.approx(0.85)
    assert gp.population_std(vals) == pytest.approx(0.05)


# --- perturbations ----------------------------------------------------------------


def test_perturbation_budgets_and_determinism():
    rng = np.random.default_rng(20)
    G = nx.gnp_random_graph(20, 0.25, seed=21)
    g = nx_to_gp(G, rng.normal(size=(20, 3)))
    m = g.undirected_edges()

    dropped = gp.drop_edges(g, 0.3, 7)
    assert dropped.undirected_edges() == m - round(0.3 * m)
    assert gp.drop_edges(g, 0.3, 7).edges() == dropped.edges()

    grown = gp.add_edges(g, 0.3, 7)
    assert grown.undirected_edges() == m + round(0.3 * m)
    a = grown.dense_adjacency()
    assert np.array_equal(a, a.T) and np.all(np.diag(a) == 0.0)

    masked = gp.mask_features(g, 0.4, 7)
    zero_rows = int(np.sum(np.all(masked.x == 0.0, axis=1)))
    assert zero_rows == round(0.4 * g.n)
    assert masked.edges() == g.edges()

    rewired = gp.knn_rewire(g, 3)
    assert rewired.n == g.n
    a = rewired.dense_adjacency()
    assert np.array_equal(a, a.T) and np.all(np.diag(a) == 0.0)
    assert rewired.edges() == gp.knn_rewire(g, 3).edges()

    labels = list(rng.integers(0, 3, 30))
    flipped = gp.flip_labels(labels, 0.4, 3, 9)
    changed = sum(1 for a_, b in zip(labels, flipped) if a_ != b)
    assert changed == round(0.4 * len(labels))
    assert all(0 <= v < 3 for v in flipped)
    assert gp.flip_labels(labels, 0.4, 3, 9) == flipped


# --- splits ------------------------------------------------------------------------


def check_cover(split, n):
    parts = [split.train, split.val, split.test]
    joined = sorted(split.train + split.val + split.test)
    assert joined == list(range(n))
    for part in parts:
        assert part == sorted(part)


def test_random_split_and_kfold():
    sp = gp.random_split(20, 0.7, 0.15, 0.15, 3)
    check_cover(sp, 20)
    assert (len(sp.train), len(sp.val), len(sp.test)) == (14, 3, 3)
    again = gp.random_split(20, 0.7, 0.15, 0.15, 3)
    assert again.train == sp.train and again.test == sp.test

    folds = gp.kfold(15, 4, 5)
    assert len(folds) == 4
    assert sorted(len(f.test) for f in folds) == [3, 4, 4, 4]
    seen = sorted(i for f in folds for i in f.test)
    assert seen == list(range(15))
    for f in folds:
        assert f.val == []
        assert sorted(f.train + f.test) == list(range(15))


def ordered_oracle(keys, descending, train_frac, test_frac):
    n = len(keys)
    sign = -1.0 if descending else 1.0
    order = sorted(range(n), key=lambda i: (sign * keys[i], i))
    tr, te = int(train_frac * n), int(test_frac * n)
    return sorted(order[:tr]), sorted(order[tr : n - te]), sorted(order[n - te :])


def test_ordered_splits_match_sort_oracle():
    graphs = gp.separable_two_class(17, 101)
    sp = gp.size_split(graphs)
    train, val, test = ordered_oracle([g.n for g in graphs], False, 0.5, 0.2)
    assert (sp.train, sp.val, sp.test) == (train, val, test)

    dens = [
        (2.0 * g.undirected_edges() / (g.n * (g.n - 1)) if g.n > 1 else 0.0)
        for g in graphs
    ]
    sp = gp.density_split(graphs)
    train, val, test = ordered_oracle(dens, False, 0.5, 0.2)
    assert (sp.train, sp.val, sp.test) == (train, val, test)

    g = gp.two_community_graph(10, 303)
    sp = gp.degree_split(g)
    degrees = [g.degree(v) for v in range(g.n)]
    train, val, test = ordered_oracle(degrees, True, 0.5, 0.25)
    assert (sp.train, sp.val, sp.test) == (train, val, test)
    assert np.mean([degrees[v] for v in sp.train]) >= np.mean(
        [degrees[v] for v in sp.test]
    )

    sp = gp.closeness_split(g)
    clo = gp.closeness_centrality(g)
    train, val, test = ordered_oracle(clo, False, 0.5, 0.25)
    assert (sp.train, sp.val, sp.test) == (train, val, test)


# --- experiment driver ---------------------------------------------------------------


SEPARABLE_CONFIG = """
task = graph-classification
dataset = synthetic:separable2:16
pooler = topk
hidden = 8
head_mid = 4
epochs = 30
lr = 0.01
batch_size = 8
split = random:0.6:0.2:0.2
seeds = 0
"""


def test_run_experiment_end_to_end():
    records = gp.run_experiment(SEPARABLE_CONFIG)
    assert len(records) == 1
    rec = records[0]
    assert rec["failure"] == ""
    assert rec["fold"] == -1
    assert len(rec["train_loss"]) == 30
    assert rec["train_loss"][-1] < rec["train_loss"][0]
    assert rec["metrics"]["test_accuracy"] == 1.0
    assert rec["wall_seconds"] > 0.0

    again = gp.run_experiment(SEPARABLE_CONFIG)[0]
    assert again["metrics"] == rec["metrics"]
    assert again["train_loss"] == rec["train_loss"]


def test_config_validation_and_digest():
    canon = gp.canonical_config(SEPARABLE_CONFIG)
    assert "dataset=synthetic:separable2:16" in canon
    digest = gp.config_digest(SEPARABLE_CONFIG)
    assert len(digest) == 16 and int(digest, 16) >= 0
    assert gp.config_digest(canon) == digest

    with pytest.raises(gp.EngineError, match="config"):
        gp.run_experiment("dataset = synthetic:separable2:8\nbogus_key = 1")
    with pytest.raises(gp.EngineError, match="config"):
        gp.canonical_config("dataset = synthetic:separable2:8\nepochs = 0")


def test_load_dataset_from_config():
    data = gp.load_dataset("dataset = synthetic:separable2:12")
    assert len(data["graphs"]) == 12
    assert data["feature_dim"] == 4
    assert data["class_count"] == 2
    assert not data["node_task"] and not data["regression"]
    labels = [int(g.graph_label) for g in data["graphs"]]
    assert labels == [i % 2 for i in range(12)]

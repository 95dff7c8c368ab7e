import csv
import io
import itertools
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.sparse.csgraph import shortest_path

from object_kb.analysis import (
    ClusterReport,
    Embedding2D,
    analyze,
    classical_mds,
    euclidean_distances,
    export_plot,
    feature_matrix,
    geodesic_distances,
    isomap,
    kmeans,
    knn_graph,
    plot_csv,
    shortest_paths,
)
from object_kb.errors import DatasetIOError, DisconnectedManifoldError, InsufficientDataError, NotFoundError
from object_kb.symbols import InstanceSymbols, KnowledgeBase


def brute_force_inertia(X, k):
    """Lowest within-cluster sum of squares over every assignment using all k clusters."""
    best = np.inf
    for assign in itertools.product(range(k), repeat=len(X)):
        a = np.array(assign)
        if len(set(assign)) < k:
            continue
        sse = sum(((X[a == j] - X[a == j].mean(0)) ** 2).sum() for j in range(k))
        best = min(best, sse)
    return best


def partition(labels):
    return sorted(sorted(np.flatnonzero(labels == c).tolist()) for c in set(labels.tolist()))


# -- K-means ----------------------------------------------------------------

def test_kmeans_separated_pairs():
    r = kmeans([0, 0.1, 10, 10.1], 2, seed=0)
    assert partition(r.labels) == [[0, 1], [2, 3]]
    assert r.inertia == pytest.approx(0.01, abs=1e-12)


def test_kmeans_singletons():
    pts = [[0, 0], [1, 0], [0, 1], [3, 3]]
    r = kmeans(pts, 4, seed=0)
    assert sorted(r.labels.tolist()) == [0, 1, 2, 3]
    assert r.inertia == 0.0


def test_kmeans_six_planar_points_brute_force():
    X = np.array([[0, 0], [0.2, 0.1], [1, 1], [3, 0], [3.1, 0.4], [2.2, 0.3]])
    r = kmeans(X, 2, seed=0)
    assert r.inertia == pytest.approx(brute_force_inertia(X, 2), abs=1e-12)


def test_kmeans_too_few_points():
    with pytest.raises(InsufficientDataError):
        kmeans([[0, 0]], 2)


def test_kmeans_duplicate_points_keeps_clusters_nonempty():
    r = kmeans([[1, 1]] * 5 + [[2, 2]], 3, seed=3)
    assert len(set(r.labels.tolist())) == 3


def test_kmeans_deterministic():
    X = np.random.default_rng(0).normal(size=(50, 2))
    a, b = kmeans(X, 4, seed=7), kmeans(X, 4, seed=7)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.centroids, b.centroids)


small_clouds = arrays(np.float64, st.tuples(st.integers(1, 6), st.just(2)), elements=st.floats(-10, 10))


@given(small_clouds, st.integers(1, 4))
def test_kmeans_matches_brute_force(X, k):
    if len(X) < k:
        return
    r = kmeans(X, k, seed=0)
    oracle = brute_force_inertia(X, k)
    assert r.inertia <= oracle + 1e-9 * (1 + oracle)


@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.just(2)), elements=st.floats(-10, 10)),
       st.integers(1, 5), st.integers(0, 2**16))
def test_kmeans_inertia_monotone(X, k, seed):
    if len(X) < k:
        return
    r = kmeans(X, k, seed=seed)
    h = np.array(r.history)
    assert np.all(np.diff(h) <= 1e-12 * np.maximum(h[:-1], 1.0))
    assert r.inertia >= 0 and len(r.labels) == len(X)


@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.just(2)), elements=st.floats(-10, 10)),
       st.integers(1, 4), st.floats(-50, 50), st.floats(-50, 50))
def test_kmeans_translation_invariant(X, k, dx, dy):
    if len(X) < k:
        return
    shift = np.array([dx, dy])
    a = kmeans(X, k, seed=1)
    b = kmeans(X + shift, k, seed=1)
    assert b.inertia == pytest.approx(a.inertia, rel=1e-6, abs=1e-6)
    if partition(a.labels) != partition(b.labels):
        # only allowed when rounding from the shift flips an exact tie between equal-cost partitions
        cost = lambda lab: sum(((X[lab == c] - X[lab == c].mean(0)) ** 2).sum() for c in set(lab.tolist()))  # noqa: E731
        assert cost(a.labels) == pytest.approx(cost(b.labels), rel=1e-9, abs=1e-9)
    else:
        same = {int(la): int(lb) for la, lb in zip(a.labels, b.labels)}
        for ca, cb in same.items():
            assert np.allclose(b.centroids[cb], a.centroids[ca] + shift, atol=1e-9)


def test_kmeans_translation_exact_on_separated_data():
    X = np.random.default_rng(4).normal(size=(30, 2)) * 0.1 + np.repeat([[0, 0], [5, 5], [10, 0]], 10, axis=0)
    a = kmeans(X, 3, seed=1)
    b = kmeans(X + np.array([3.0, -7.0]), 3, seed=1)
    assert np.array_equal(a.labels, b.labels)
    assert np.allclose(b.centroids, a.centroids + np.array([3.0, -7.0]), atol=1e-9)


# -- Isomap -----------------------------------------------------------------

def test_isomap_collinear_points():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    emb = isomap(X, neighbors=2)
    gaps = np.diff(np.sort(emb.coords[:, 0]))
    assert np.allclose(gaps, 1.0, atol=1e-6)
    assert np.allclose(emb.coords[:, 1], 0.0, atol=1e-6)
    assert emb.eigenvalues[0] >= emb.eigenvalues[1]


def test_isomap_complete_graph_reproduces_planar_distances():
    X = np.random.default_rng(2).uniform(-1, 1, (12, 2))
    emb = isomap(X, neighbors=11)
    assert np.allclose(euclidean_distances(emb.coords), euclidean_distances(X), atol=1e-6)


def test_isomap_two_blobs_disconnected():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 0.1, (5, 2)), rng.normal(100, 0.1, (5, 2))])
    with pytest.raises(DisconnectedManifoldError):
        isomap(X, neighbors=2)


def test_isomap_bridge_joins_components():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 0.1, (5, 2)), rng.normal(100, 0.1, (5, 2))])
    emb = isomap(X, neighbors=2, bridge=True)
    assert np.all(np.isfinite(emb.coords))
    # the blobs remain far apart along the first axis
    assert abs(emb.coords[:5, 0].mean() - emb.coords[5:, 0].mean()) > 100


def test_isomap_needs_enough_rows():
    with pytest.raises(InsufficientDataError):
        isomap(np.zeros((3, 2)), neighbors=3)


@given(arrays(np.float64, st.tuples(st.integers(2, 15), st.just(3)), elements=st.floats(-5, 5)),
       st.integers(1, 6))
def test_geodesics_match_independent_shortest_path(X, k):
    k = min(k, len(X) - 1)
    W = knn_graph(X, k)
    ours = shortest_paths(W)
    # scipy treats inf as "no edge" in dense input; zero-length edges are dropped, so
    # compare on graphs without duplicate points
    if len({tuple(r) for r in X.tolist()}) < len(X):
        return
    oracle = shortest_path(np.where(np.isfinite(W), W, 0.0), method="D", directed=False)
    assert np.allclose(ours, oracle, rtol=1e-12, atol=1e-12, equal_nan=False) or np.array_equal(
        np.isinf(ours), np.isinf(oracle)) and np.allclose(ours[np.isfinite(ours)], oracle[np.isfinite(oracle)])


@given(arrays(np.float64, st.tuples(st.integers(2, 15), st.just(2)), elements=st.floats(-5, 5)),
       st.integers(1, 6))
def test_geodesic_metric_properties(X, k):
    k = min(k, len(X) - 1)
    G = geodesic_distances(X, k, bridge=True)
    assert np.array_equal(G, G.T)
    assert np.all(np.diag(G) == 0)
    tol = 1e-9 * (1 + G.max())
    assert np.all(G[:, None, :] <= G[:, :, None] + G[None, :, :] + tol)


@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.just(2)), elements=st.floats(-10, 10)))
def test_mds_reproduces_planar_distances(X):
    D = euclidean_distances(X)
    coords, vals = classical_mds(D, 2)
    assert vals[0] >= vals[1] >= 0
    assert np.allclose(euclidean_distances(coords), D, atol=1e-6)


def test_mds_sign_canonical():
    X = np.random.default_rng(3).normal(size=(8, 2))
    c1, _ = classical_mds(euclidean_distances(X))
    c2, _ = classical_mds(euclidean_distances(-X))
    assert np.allclose(c1, c2, atol=1e-9)
    for axis in range(2):
        col = c1[:, axis]
        assert col[np.flatnonzero(np.abs(col) > 1e-9 * np.abs(col).max())[0]] > 0


# -- KB-level ---------------------------------------------------------------

def test_analyze_corpus_seven_clusters(corpus_kb):
    emb, report = analyze(corpus_kb, "physical", k_clusters=7, neighbors=5, seed=42)
    assert emb.coords.shape == (46, 2) and np.all(np.isfinite(emb.coords))
    assert len(set(report.labels.tolist())) == 7
    assert all(report.members().values())
    assert sorted(report.instance_ids) == report.instance_ids
    assert set(report.class_labels) == set(range(17))


def test_analyze_functional(corpus_kb):
    emb, report = analyze(corpus_kb, "functional", k_clusters=7, neighbors=5, seed=42, bridge=True)
    assert len(set(report.labels.tolist())) == 7


def test_analyze_single_support_column(corpus_kb):
    fm = feature_matrix(corpus_kb, "support")
    assert fm.values.shape == (46, 1)
    emb, _ = analyze(corpus_kb, "support", k_clusters=7, neighbors=5, seed=42, bridge=True)
    assert emb.eigenvalues[1] == 0.0
    assert np.all(emb.coords[:, 1] == 0.0)


def test_analyze_unknown_property(corpus_kb):
    with pytest.raises(NotFoundError):
        analyze(corpus_kb, "tastiness")


def two_instance_kb():
    scal = lambda v: {"flatness": v, "rigidity": 1.0}  # noqa: E731
    return KnowledgeBase(instances=[
        InstanceSymbols("a", "X", {}, scal(0.2), 0),
        InstanceSymbols("b", "X", {}, scal(0.9), 0),
    ])


def test_analyze_two_instances_single_cluster():
    emb, report = analyze(two_instance_kb(), "flatness,rigidity", k_clusters=1, neighbors=1)
    assert report.labels.tolist() == [0, 0]
    assert emb.coords.shape == (2, 2)


def test_analyze_sizing_errors(corpus_kb):
    with pytest.raises(InsufficientDataError):
        analyze(two_instance_kb(), "flatness", k_clusters=3, neighbors=1)
    with pytest.raises(InsufficientDataError):
        analyze(two_instance_kb(), "flatness", k_clusters=1, neighbors=2)


# -- export -----------------------------------------------------------------

def test_export_corpus(corpus_kb, tmp_path):
    emb, report = analyze(corpus_kb)
    export_plot(emb, report, tmp_path / "emb.csv", tmp_path / "plot.svg")
    rows = list(csv.reader(io.StringIO((tmp_path / "emb.csv").read_text())))
    assert rows[0] == ["instance_id", "class_label", "x", "y", "cluster"]
    assert len(rows) == 47
    for r, iid in zip(rows[1:], report.instance_ids):
        assert r[0] == iid
    svg = ET.parse(tmp_path / "plot.svg").getroot()
    ns = "{http://www.w3.org/2000/svg}"
    assert len(svg.findall(f"{ns}circle")) == 46
    texts = svg.findall(f"{ns}text")
    assert len(texts) == 46
    assert sorted(int(t.text) for t in texts) == sorted(report.class_labels)


def test_export_empty_report(tmp_path):
    emb = Embedding2D(np.zeros((0, 2)), (0.0, 0.0), 5)
    report = ClusterReport(np.zeros(0, dtype=int), np.zeros((0, 2)), 0.0, instance_ids=[], class_labels=[])
    export_plot(emb, report, tmp_path / "e.csv", tmp_path / "e.svg")
    assert (tmp_path / "e.csv").read_bytes() == b"instance_id,class_label,x,y,cluster\r\n"
    svg = ET.parse(tmp_path / "e.svg").getroot()
    assert not svg.findall("{http://www.w3.org/2000/svg}circle")


def test_export_quotes_awkward_ids():
    emb = Embedding2D(np.array([[0.5, -1.0]]), (1.0, 0.0), 1)
    report = ClusterReport(np.array([0]), np.zeros((1, 2)), 0.0, instance_ids=['a,"b"'], class_labels=[3])
    rows = list(csv.reader(io.StringIO(plot_csv(emb, report))))
    assert rows[1] == ['a,"b"', "3", "0.5", "-1.0", "0"]


def test_export_unwritable(tmp_path):
    emb = Embedding2D(np.zeros((0, 2)), (0.0, 0.0), 5)
    report = ClusterReport(np.zeros(0, dtype=int), np.zeros((0, 2)), 0.0, instance_ids=[], class_labels=[])
    with pytest.raises(DatasetIOError):
        export_plot(emb, report, tmp_path / "missing" / "dir" / "e.csv")

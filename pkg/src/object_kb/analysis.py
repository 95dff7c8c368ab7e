"""Similarity analysis: property vectors -> Isomap 2-D embedding -> K-means clusters."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from ._io import atomic_write_text
from .errors import DisconnectedManifoldError, EmptyInputError, InsufficientDataError, NotFoundError
from .properties import FUNCTIONAL_FEATURES, PHYSICAL_FEATURES, PROPERTY_SCALAR

DEFAULT_NEIGHBORS = 5
DEFAULT_CLUSTERS = 7


# --------------------------------------------------------------------------
# K-means

@dataclass
class ClusterReport:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int = 0
    history: list[float] = field(default_factory=list)
    instance_ids: list[str] | None = None
    class_labels: list[int] | None = None

    def members(self) -> dict[int, list[str]]:
        ids = self.instance_ids or [str(i) for i in range(len(self.labels))]
        out: dict[int, list[str]] = {j: [] for j in range(len(self.centroids))}
        for i, c in zip(ids, self.labels.tolist()):
            out[c].append(i)
        return out

    def member_class_labels(self) -> dict[int, list[int]]:
        if self.class_labels is None:
            raise ValueError("report carries no class labels")
        out: dict[int, list[int]] = {j: [] for j in range(len(self.centroids))}
        for lab, c in zip(self.class_labels, self.labels.tolist()):
            out[c].append(lab)
        return out


def _sqdist(X, C):
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_pp(X, k, rng):
    n = len(X)
    chosen = [int(rng.integers(n))]
    d2 = _sqdist(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # every point coincides with a centre already; fall back to an unused index
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        d2 = np.minimum(d2, _sqdist(X, X[[nxt]])[:, 0])
    return X[chosen].copy()


def _assign(X, C):
    d2 = _sqdist(X, C)
    # argmin returns the first minimum: ties go to the lowest centroid index
    return np.argmin(d2, axis=1), d2


def _repair_empty(labels, d2, k):
    """Give every empty cluster the point farthest from its own centroid."""
    labels = labels.copy()
    for j in range(k):
        counts = np.bincount(labels, minlength=k)
        if counts[j] > 0:
            continue
        own = d2[np.arange(len(labels)), labels]
        movable = counts[labels] > 1
        cand = np.where(movable, own, -np.inf)
        i = int(np.argmax(cand))
        labels[i] = j
    return labels


def _means(X, labels, k):
    C = np.zeros((k, X.shape[1]))
    np.add.at(C, labels, X)
    return C / np.bincount(labels, minlength=k)[:, None]


def _lloyd(X, C, max_iter, rel_tol):
    k = len(C)
    history: list[float] = []
    labels = None
    for it in range(1, max_iter + 1):
        labels, d2 = _assign(X, C)
        labels = _repair_empty(labels, d2, k)
        C = _means(X, labels, k)
        inertia = float(_sqdist(X, C)[np.arange(len(X)), labels].sum())
        if history:
            prev = history[-1]
            assert inertia <= prev + 1e-12 * max(prev, 1.0), "k-means inertia increased"
            history.append(inertia)
            if prev - inertia <= rel_tol * prev:
                break
        else:
            history.append(inertia)
            if inertia == 0.0:
                break
    return labels, C, history, it


def _hartigan(X, labels, k, history, max_moves=10_000):
    """Single-point transfers that strictly lower inertia; Lloyd can stall before these."""
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k).astype(float)
    C = _means(X, labels, k)
    # moves must beat rounding noise, which scales with the coordinates, not the inertia
    floor = np.finfo(float).eps * float(np.max(np.einsum("ij,ij->i", X, X), initial=0.0))
    for _ in range(max_moves):
        d2 = _sqdist(X, C)
        own = d2[np.arange(len(X)), labels]
        n_own = counts[labels]
        movable = n_own > 1
        removal = np.where(movable, n_own / np.where(movable, n_own - 1, 1.0) * own, 0.0)
        delta = counts[None, :] / (counts[None, :] + 1) * d2 - removal[:, None]
        delta[~movable] = np.inf
        delta[np.arange(len(X)), labels] = np.inf
        i, j = np.unravel_index(int(np.argmin(delta)), delta.shape)
        if not delta[i, j] < -1e-12 * max(history[-1], floor, 1e-300):
            break
        a = labels[i]
        labels[i] = j
        counts[a] -= 1
        counts[j] += 1
        C[a] = X[labels == a].mean(axis=0)
        C[j] = X[labels == j].mean(axis=0)
        inertia = float(_sqdist(X, C)[np.arange(len(X)), labels].sum())
        assert inertia <= history[-1] + 1e-12 * max(history[-1], 1.0), "k-means inertia increased"
        history.append(inertia)
    return labels, C


def kmeans(points, k: int, seed=0, max_iter: int = 300, rel_tol: float = 1e-9, n_init: int = 10) -> ClusterReport:
    """k-means++ seeding, Lloyd iterations, then single-point transfer refinement.

    The best of ``n_init`` restarts (lowest inertia, first on ties) is kept.

    All restarts draw from one generator seeded with ``seed``, so the result is
    a pure function of the inputs.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(X)
    if not 1 <= k:
        raise ValueError("k must be >= 1")
    if n < k:
        raise InsufficientDataError(f"kmeans: {n} points cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        C0 = _kmeans_pp(X, k, rng)
        labels, C, history, n_iter = _lloyd(X, C0, max_iter, rel_tol)
        if k > 1:
            labels, C = _hartigan(X, labels, k, history)
        if best is None or history[-1] < best.inertia:
            best = ClusterReport(labels=labels, centroids=C, inertia=history[-1], n_iter=n_iter, history=history)
    return best


# --------------------------------------------------------------------------
# Isomap

@dataclass
class Embedding2D:
    coords: np.ndarray
    eigenvalues: tuple[float, ...]
    neighbors: int
    instance_ids: list[str] = field(default_factory=list)


def euclidean_distances(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    D = np.sqrt(np.maximum(_sqdist(X, X), 0.0))
    np.fill_diagonal(D, 0.0)
    return (D + D.T) / 2


def knn_graph(X, neighbors: int) -> np.ndarray:
    """Symmetrised k-nearest-neighbour graph; ``inf`` marks a missing edge."""
    D = euclidean_distances(X)
    n = len(D)
    W = np.full((n, n), np.inf)
    np.fill_diagonal(W, 0.0)
    for i in range(n):
        order = np.argsort(D[i], kind="stable")
        nbrs = [j for j in order if j != i][:neighbors]
        W[i, nbrs] = D[i, nbrs]
        W[nbrs, i] = D[i, nbrs]
    return W


def shortest_paths(W: np.ndarray) -> np.ndarray:
    """All-pairs shortest paths (Floyd-Warshall) on a dense weight matrix."""
    G = np.array(W, dtype=float)
    for m in range(len(G)):
        np.minimum(G, G[:, m, None] + G[None, m, :], out=G)
    return G


def _components(G):
    n = len(G)
    comp = -np.ones(n, dtype=int)
    c = 0
    for i in range(n):
        if comp[i] < 0:
            comp[np.isfinite(G[i])] = c
            c += 1
    return comp


def bridge_components(W: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Join graph components by their shortest Euclidean inter-component edges."""
    W = W.copy()
    while True:
        comp = _components(shortest_paths(W))
        if comp.max() == 0:
            return W
        cross = np.where(comp[:, None] != comp[None, :], D, np.inf)
        i, j = np.unravel_index(int(np.argmin(cross)), cross.shape)
        W[i, j] = W[j, i] = D[i, j]


def geodesic_distances(X, neighbors: int, bridge: bool = False) -> np.ndarray:
    W = knn_graph(X, neighbors)
    G = shortest_paths(W)
    if not np.all(np.isfinite(G)):
        n_comp = int(_components(G).max()) + 1
        if not bridge:
            raise DisconnectedManifoldError(
                f"neighbour graph (k={neighbors}) has {n_comp} components; "
                "raise the neighbour count or enable bridge_components"
            )
        G = shortest_paths(bridge_components(W, euclidean_distances(X)))
    return G


def classical_mds(D: np.ndarray, target_dim: int = 2):
    """Coordinates whose Euclidean distances best reproduce ``D``.

    Eigenvalues below a relative 1e-12 are treated as zero; the sign of each
    axis is fixed by making its first non-zero coordinate positive.
    """
    D = np.asarray(D, dtype=float)
    n = len(D)
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * J @ (D ** 2) @ J
    B = (B + B.T) / 2
    vals, vecs = np.linalg.eigh(B)
    order = np.argsort(vals, kind="stable")[::-1][:target_dim]
    vals, vecs = vals[order], vecs[:, order]
    top = max(float(vals[0]) if len(vals) else 0.0, 0.0)
    vals = np.where(vals > 1e-12 * top, vals, 0.0)
    coords = vecs * np.sqrt(vals)
    if coords.shape[1] < target_dim:
        coords = np.hstack([coords, np.zeros((n, target_dim - coords.shape[1]))])
        vals = np.concatenate([vals, np.zeros(target_dim - len(vals))])
    for a in range(target_dim):
        col = coords[:, a]
        scale = np.abs(col).max()
        if scale == 0:
            continue
        first = np.flatnonzero(np.abs(col) > 1e-9 * scale)[0]
        if col[first] < 0:
            coords[:, a] = -col
    return coords, tuple(float(v) for v in vals)


def isomap(matrix, neighbors: int = DEFAULT_NEIGHBORS, target_dim: int = 2, bridge: bool = False) -> Embedding2D:
    X = matrix.values if isinstance(matrix, FeatureMatrix) else np.asarray(matrix, dtype=float)
    ids = list(matrix.instance_ids) if isinstance(matrix, FeatureMatrix) else []
    if X.ndim == 1:
        X = X[:, None]
    if neighbors < 1:
        raise ValueError("neighbors must be >= 1")
    if len(X) < neighbors + 1:
        raise InsufficientDataError(f"isomap: {len(X)} rows cannot support {neighbors} neighbours")
    G = geodesic_distances(X, neighbors, bridge)
    coords, vals = classical_mds(G, target_dim)
    return Embedding2D(coords=coords, eigenvalues=vals, neighbors=neighbors, instance_ids=ids)


# --------------------------------------------------------------------------
# KB-level analysis

@dataclass
class FeatureMatrix:
    instance_ids: list[str]
    class_labels: list[int]
    columns: list[str]
    values: np.ndarray
    standardized: bool = True


def resolve_columns(property_set: str) -> list[str]:
    if property_set == "physical":
        return list(PHYSICAL_FEATURES)
    if property_set == "functional":
        return list(FUNCTIONAL_FEATURES)
    cols = []
    for name in property_set.split(","):
        name = name.strip()
        cols.append(PROPERTY_SCALAR.get(name, name))
    return cols


def feature_matrix(kb, property_set: str = "physical", standardize: bool = True) -> FeatureMatrix:
    """Per-instance property vectors, min-max scaled per column (constant columns -> 0.5)."""
    columns = resolve_columns(property_set)
    instances = sorted(kb.instances, key=lambda s: s.instance_id)
    if instances:
        known = set(instances[0].scalars)
        missing = [c for c in columns if c not in known]
        if missing:
            raise NotFoundError(f"unknown property/scalar {missing}; known: {sorted(known)}")
    X = np.array([[inst.scalars[c] for c in columns] for inst in instances], dtype=float).reshape(
        len(instances), len(columns)
    )
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix has non-finite entries")
    if standardize and len(X):
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = hi - lo
        X = np.where(span > 0, (X - lo) / np.where(span > 0, span, 1.0), 0.5)
    return FeatureMatrix(
        instance_ids=[s.instance_id for s in instances],
        class_labels=[s.class_label for s in instances],
        columns=columns,
        values=X,
        standardized=standardize,
    )


def analyze(
    kb,
    property_set: str = "physical",
    k_clusters: int = DEFAULT_CLUSTERS,
    neighbors: int = DEFAULT_NEIGHBORS,
    seed: int = 42,
    bridge: bool = False,
):
    """Embed the chosen properties in 2-D, then cluster the embedded points."""
    if not kb.instances:
        raise EmptyInputError("analyze: knowledge base has no instances")
    fm = feature_matrix(kb, property_set)
    n = len(fm.instance_ids)
    if n < neighbors + 1 or n < k_clusters:
        raise InsufficientDataError(
            f"analyze: {n} instances, need > {neighbors} for the neighbour graph and >= {k_clusters} for clustering"
        )
    emb = isomap(fm, neighbors=neighbors, bridge=bridge)
    report = kmeans(emb.coords, k_clusters, seed=seed)
    report.instance_ids = list(fm.instance_ids)
    report.class_labels = list(fm.class_labels)
    return emb, report


# --------------------------------------------------------------------------
# export

_PALETTE = (
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6",
    "#bfef45", "#9a6324", "#800000", "#469990", "#000075",
)


def plot_csv(embedding: Embedding2D, report: ClusterReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["instance_id", "class_label", "x", "y", "cluster"])
    ids = report.instance_ids or embedding.instance_ids
    labels = report.class_labels or [""] * len(ids)
    for i, (iid, lab) in enumerate(zip(ids, labels)):
        x, y = embedding.coords[i, 0], embedding.coords[i, 1]
        w.writerow([iid, lab, repr(float(x)), repr(float(y)), int(report.labels[i])])
    return buf.getvalue()


def plot_svg(embedding: Embedding2D, report: ClusterReport, width: int = 640, height: int = 480) -> str:
    ids = report.instance_ids or embedding.instance_ids
    labels = report.class_labels or [""] * len(ids)
    margin = 30.0
    xy = embedding.coords[:, :2] if len(ids) else np.zeros((0, 2))
    lo = xy.min(axis=0) if len(xy) else np.zeros(2)
    span = np.ptp(xy, axis=0) if len(xy) else np.ones(2)
    span = np.where(span > 0, span, 1.0)

    def px(p):
        u = (p - lo) / span
        return margin + u[0] * (width - 2 * margin), height - margin - u[1] * (height - 2 * margin)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        "<desc>2-D embedding; colour = cluster, label = class</desc>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for i, (iid, lab) in enumerate(zip(ids, labels)):
        cx, cy = px(xy[i])
        colour = _PALETTE[int(report.labels[i]) % len(_PALETTE)]
        out.append(
            f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="5" fill="{colour}">'
            f"<title>{escape(str(iid))}</title></circle>"
        )
        out.append(f'<text x="{cx + 6:.2f}" y="{cy - 6:.2f}" font-size="10">{escape(str(lab))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_plot(embedding: Embedding2D, report: ClusterReport, csv_path, svg_path=None) -> None:
    atomic_write_text(csv_path, plot_csv(embedding, report), newline="")
    if svg_path is not None:
        atomic_write_text(svg_path, plot_svg(embedding, report))

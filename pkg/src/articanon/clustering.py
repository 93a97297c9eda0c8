"""Density-based grouping of canonical-space points into part instances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .metrics import SegmentationResult

DEFAULT_MIN_PTS = 10
EPS_FACTOR = 0.05


@dataclass
class ClusterAssignment:
    labels: np.ndarray   # 1..k, 0 for noise (pre-resolution) or stuff
    noise: np.ndarray    # bool
    core: np.ndarray     # bool

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max(initial=0))


def dbscan(points, eps: float, min_pts: int) -> ClusterAssignment:
    """DBSCAN with deterministic, index-ordered semantics.

    Clusters are numbered 1.. in the order a sequential scan over point indices
    would discover them, and a border point joins the earliest-discovered cluster
    that has a core point within ``eps``. Neighbourhoods include the point itself
    and use ``distance <= eps``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    pts = np.asarray(points, float).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        empty = np.zeros(0, bool)
        return ClusterAssignment(np.zeros(0, np.int64), empty, empty)

    # Exact duplicates share neighbourhoods and outcomes; cluster unique points, weighted.
    uniq, first, inverse, weight = np.unique(pts, axis=0, return_index=True,
                                             return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    uniq, weight, inverse = uniq[order], weight[order], rank[inverse]
    u = len(uniq)

    pairs = cKDTree(uniq).query_pairs(eps, output_type="ndarray")
    i, j = (pairs[:, 0], pairs[:, 1]) if len(pairs) else (np.zeros(0, int), np.zeros(0, int))
    wsum = weight.astype(np.int64).copy()
    np.add.at(wsum, i, weight[j])
    np.add.at(wsum, j, weight[i])
    core = wsum >= min_pts

    labels_u = np.zeros(u, np.int64)
    cc = core[i] & core[j]
    core_idx = np.flatnonzero(core)
    if len(core_idx):
        pos = np.full(u, -1)
        pos[core_idx] = np.arange(len(core_idx))
        g = coo_matrix((np.ones(cc.sum()), (pos[i[cc]], pos[j[cc]])),
                       shape=(len(core_idx), len(core_idx)))
        _, comp = connected_components(g, directed=False)
        # Renumber components by their smallest member index (discovery order).
        firsts = np.full(comp.max() + 1, u)
        np.minimum.at(firsts, comp, core_idx)
        renum = np.empty_like(firsts)
        renum[np.argsort(firsts, kind="stable")] = np.arange(1, len(firsts) + 1)
        labels_u[core_idx] = renum[comp]

        # Border points: earliest cluster among their core neighbours.
        big = np.iinfo(np.int64).max
        border = np.full(u, big)
        for a, b in ((i, j), (j, i)):
            sel = core[b] & ~core[a]
            np.minimum.at(border, a[sel], labels_u[b[sel]])
        is_border = (~core) & (border != big)
        labels_u[is_border] = border[is_border]

    labels = labels_u[inverse]
    return ClusterAssignment(labels, labels == 0, core[inverse])


def default_eps(radius: float) -> float:
    return EPS_FACTOR * radius


def resolve_noise(points: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Give each noise point (label 0) the label of the nearest cluster centroid."""
    labels = labels.copy()
    k = int(labels.max(initial=0))
    noise = labels == 0
    if not noise.any():
        return labels
    if k == 0:
        labels[:] = 1
        return labels
    cents = np.stack([points[labels == c].mean(axis=0) for c in range(1, k + 1)])
    d = ((points[noise, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
    labels[noise] = np.argmin(d, axis=1) + 1
    return labels


def order_by_size(labels: np.ndarray) -> np.ndarray:
    """Renumber labels 1.. by cluster size (descending), ties by smallest member index."""
    ids = np.unique(labels[labels > 0])
    if len(ids) == 0:
        return labels.copy()
    sizes = np.array([(labels == c).sum() for c in ids])
    firsts = np.array([np.flatnonzero(labels == c)[0] for c in ids])
    order = np.lexsort((firsts, -sizes))
    out = np.zeros_like(labels)
    for new, k in enumerate(order, start=1):
        out[labels == ids[k]] = new
    return out


def segment_instances(sample, offsets: np.ndarray, semantic: np.ndarray,
                      eps: float, min_pts: int = DEFAULT_MIN_PTS,
                      stuff_classes=(0,)) -> SegmentationResult:
    """Cluster shifted things points of the whole sequence jointly.

    ``sample`` is a SequenceSample or its (S, N, 3) coordinates; ``offsets`` is
    (S, N, 3) and ``semantic`` (S, N). Clustering all frames together gives one
    instance id per part for the entire sequence.
    """
    xyz = np.asarray(getattr(sample, "xyz", sample), float)
    semantic = np.asarray(semantic)
    if np.shape(offsets) != xyz.shape or semantic.shape != xyz.shape[:-1]:
        raise ValueError("offsets/semantics are not congruent with the point layout")
    things = ~np.isin(semantic, stuff_classes)
    instance = np.zeros(semantic.shape, np.int64)
    if things.any():
        shifted = xyz[things] + np.asarray(offsets, float)[things]
        labels = dbscan(shifted, eps, min_pts).labels
        labels = order_by_size(resolve_noise(shifted, labels))
        instance[things] = labels
    return SegmentationResult(semantic.astype(np.int64).copy(), instance)

"""Base clustering fitters and out-of-resample prediction.

Three crisp base learners (k-means, PAM, single-link agglomeration) plus two
predictors (nearest representative, exact 1-NN via a kd-tree).  All fitters
share the same duplicate handling: the resample is reduced to its distinct
coordinate rows (ordered by first occurrence) with multiplicity weights, so
duplicated draws can never produce duplicated centers or medoids.  A fit
that cannot place all K clusters on distinct points comes back flagged
``degenerate`` rather than raising.

Labels in every returned assignment are compacted to 1..K' (K' = number of
non-empty clusters) and row j of ``representatives`` carries label j+1,
except for single-link models, whose representatives are the retained
distinct points labelled by ``rep_labels``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.spatial import cKDTree

from .core import CrispAssignment

ResampleScheme = Literal["bootstrap", "subsample"]

_KD_LEAF_SIZE = 16
_LLOYD_MAX_ITER = 300
_LLOYD_TOL = 1e-8


@dataclass
class ResampleIndices:
    """Multiset of 1-based case indices drawn with replacement."""

    indices: np.ndarray
    scheme: ResampleScheme

    @property
    def size(self) -> int:
        return self.indices.size


@dataclass
class FittedBaseModel:
    """A fitted K-cluster base model over one resample."""

    assignment: CrispAssignment
    representatives: np.ndarray
    rep_labels: np.ndarray
    kind: Literal["kmeans", "pam", "singlelink"]
    k: int
    degenerate: bool

    def __post_init__(self):
        occ = self.assignment.occupied().size
        assert self.degenerate == (occ < self.k)


def draw_resample(
    n_cases: int, size: int, scheme: ResampleScheme, rng: np.random.Generator
) -> ResampleIndices:
    """`size` i.i.d. uniform draws with replacement from {1..n_cases}."""
    if size < 1:
        raise ValueError("resample size must be >= 1")
    if scheme not in ("bootstrap", "subsample"):
        raise ValueError(f"unknown scheme {scheme!r}")
    return ResampleIndices(rng.integers(1, n_cases + 1, size=size), scheme)


def dedup_points(points: np.ndarray):
    """(uniques ordered by first occurrence, weights, inverse index)."""
    uniq, first, inverse = np.unique(points, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    inverse = rank[inverse.ravel()]
    return uniq[order], np.bincount(inverse), inverse


def _compact_result(point_labels, inverse, reps, kind, k):
    """Map unique-point labels back to the full resample, dropping gaps."""
    occupied = np.unique(point_labels)
    remap = np.zeros(point_labels.max() + 1, dtype=np.int64)
    remap[occupied] = np.arange(1, occupied.size + 1)
    compact = remap[point_labels]
    assignment = CrispAssignment(compact[inverse], k)
    return FittedBaseModel(
        assignment=assignment,
        representatives=reps[occupied - 1],
        rep_labels=np.arange(1, occupied.size + 1),
        kind=kind,
        k=k,
        degenerate=occupied.size < k,
    )


# ----------------------------------------------------------------- k-means


def fit_kmeans(points: np.ndarray, k: int, rng: np.random.Generator) -> FittedBaseModel:
    """Lloyd iteration with initial centers drawn from distinct points.

    Stops when relative center movement drops below 1e-8 or after 300
    iterations.  Clusters that empty out are dropped on the spot; the
    result is then degenerate with fewer than k occupied labels.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    points = np.asarray(points, dtype=float)
    uniq, weights, inverse = dedup_points(points)
    u = uniq.shape[0]
    if u <= k:
        # every distinct point its own center
        labels = np.arange(1, u + 1)
        return _compact_result(labels, inverse, uniq, "kmeans", k)

    centers = uniq[np.sort(rng.choice(u, size=k, replace=False))]
    w = weights.astype(float)
    prev_wcss = np.inf
    for _ in range(_LLOYD_MAX_ITER):
        d2 = ((uniq[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        nearest = d2.argmin(axis=1)
        wcss = float((w * d2[np.arange(u), nearest]).sum())
        assert wcss <= prev_wcss + 1e-9 * max(1.0, prev_wcss if np.isfinite(prev_wcss) else 1.0)
        prev_wcss = wcss
        kk = centers.shape[0]
        counts = np.bincount(nearest, weights=w, minlength=kk)
        alive = counts > 0
        sums = np.zeros_like(centers)
        np.add.at(sums, nearest, uniq * w[:, None])
        new_centers = sums[alive] / counts[alive, None]
        if not np.all(alive):
            centers = centers[alive]
        scale = max(1.0, float(np.abs(centers).max()))
        moved = float(np.abs(new_centers - centers).max())
        centers = new_centers
        if moved < _LLOYD_TOL * scale:
            break
    d2 = ((uniq[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    nearest = d2.argmin(axis=1)
    return _compact_result(nearest + 1, inverse, centers, "kmeans", k)


# --------------------------------------------------------------------- PAM


def fit_pam(points: np.ndarray, k: int, rng: np.random.Generator | None = None) -> FittedBaseModel:
    """Partitioning around medoids: BUILD then steepest-descent SWAP.

    Works on the distinct coordinate rows weighted by multiplicity, under
    plain Euclidean dissimilarity.  Deterministic: all ties fall to the
    lowest index, and the rng argument is accepted only for interface
    parity with the other fitters.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    points = np.asarray(points, dtype=float)
    uniq, weights, inverse = dedup_points(points)
    u = uniq.shape[0]
    if u <= k:
        labels = np.arange(1, u + 1)
        return _compact_result(labels, inverse, uniq, "pam", k)

    w = weights.astype(float)
    d = np.sqrt(np.maximum(((uniq[:, None, :] - uniq[None, :, :]) ** 2).sum(axis=2), 0.0))

    # BUILD: start from the weighted 1-medoid optimum, then greedily add the
    # point with the largest cost reduction (ties: lowest index)
    costs = w @ d
    medoids = [int(costs.argmin())]
    first = d[:, medoids[0]].copy()
    for _ in range(1, k):
        gain = (w[:, None] * np.maximum(first[:, None] - d, 0.0)).sum(axis=0)
        gain[medoids] = -np.inf
        m = int(gain.argmax())
        medoids.append(m)
        first = np.minimum(first, d[:, m])

    medoids = np.array(medoids)
    total = float((w * first).sum())
    # the k=1 optimum is found exactly by BUILD; SWAP needs a second-nearest
    while k > 1:
        dm = d[:, medoids]  # u x k distances to current medoids
        order = np.argsort(dm, axis=1, kind="stable")
        nearest_pos = order[:, 0]
        first = dm[np.arange(u), nearest_pos]
        second = dm[np.arange(u), order[:, 1]]
        # FastPAM1-style decomposition of the swap objective change:
        #   removal of medoid j / insertion of candidate h
        a = np.minimum(d - first[:, None], 0.0) * w[:, None]
        b = (np.minimum(d, second[:, None]) - first[:, None]) * w[:, None]
        delta = np.zeros((k, u))
        np.add.at(delta, nearest_pos, b - a)
        delta += a.sum(axis=0)[None, :]
        delta[:, medoids] = np.inf
        j, h = np.unravel_index(int(delta.argmin()), delta.shape)
        if delta[j, h] >= -1e-9 * max(1.0, total):
            break
        medoids = medoids.copy()
        medoids[j] = h
        total += float(delta[j, h])
        assert total >= -1e-9

    dm = d[:, medoids]
    point_labels = dm.argmin(axis=1) + 1
    return _compact_result(point_labels, inverse, uniq[medoids], "pam", k)


def pam_objective(points: np.ndarray, medoid_rows: np.ndarray) -> float:
    """Total Euclidean dissimilarity of each point to its nearest medoid."""
    d = np.sqrt(((points[:, None, :] - medoid_rows[None, :, :]) ** 2).sum(axis=2))
    return float(d.min(axis=1).sum())


# ------------------------------------------------------------- single link


def fit_single_link(points: np.ndarray, k: int) -> FittedBaseModel:
    """Agglomerative single-linkage, dendrogram cut at k clusters.

    Fully deterministic: equal-distance merges pick the smallest pair of
    cluster ids, where a cluster's id is its smallest member index.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    points = np.asarray(points, dtype=float)
    uniq, _, inverse = dedup_points(points)
    u = uniq.shape[0]
    if u <= k:
        labels = np.arange(1, u + 1)
        return _compact_result(labels, inverse, uniq, "singlelink", k)

    d = np.sqrt(np.maximum(((uniq[:, None, :] - uniq[None, :, :]) ** 2).sum(axis=2), 0.0))
    np.fill_diagonal(d, np.inf)
    active = np.ones(u, dtype=bool)
    member = np.arange(u)  # slot holding each point's cluster
    for _ in range(u - k):
        # row-major argmin lands on the smallest (i, j) among equal distances
        flat = int(np.argmin(d))
        i, j = divmod(flat, u)
        if i > j:
            i, j = j, i
        merged = np.minimum(d[i], d[j])
        d[i] = merged
        d[:, i] = merged
        d[i, i] = np.inf
        d[j] = np.inf
        d[:, j] = np.inf
        active[j] = False
        member[member == j] = i
    slots = np.flatnonzero(active)
    relabel = np.zeros(u, dtype=np.int64)
    relabel[slots] = np.arange(1, k + 1)
    point_labels = relabel[member]
    # single link predicts by its retained points, not by centroids
    return FittedBaseModel(
        assignment=CrispAssignment(point_labels[inverse], k),
        representatives=uniq,
        rep_labels=point_labels,
        kind="singlelink",
        k=k,
        degenerate=False,
    )


# -------------------------------------------------------------- prediction


def predict_nearest_representative(model: FittedBaseModel, cases: np.ndarray) -> CrispAssignment:
    """Assign each case the label of its nearest representative row.

    Equidistant representatives resolve to the lowest label.
    """
    if model.representatives.shape[0] == 0:
        raise ValueError("model has no representatives")
    cases = np.atleast_2d(np.asarray(cases, dtype=float))
    d2 = ((cases[:, None, :] - model.representatives[None, :, :]) ** 2).sum(axis=2)
    # scan representatives in label order so argmin ties land on the
    # lowest label
    order = np.argsort(model.rep_labels, kind="stable")
    labels = model.rep_labels[order][d2[:, order].argmin(axis=1)]
    return CrispAssignment(labels, model.k)


@dataclass
class NearestNeighborIndex:
    """Exact nearest-neighbor search over a fixed point set.

    A kd-tree accelerates the common case; exact distance ties are
    re-resolved by brute force so the winner is always the lowest point
    index, byte-for-byte identical to a linear scan.
    """

    points: np.ndarray
    tree: cKDTree = field(init=False)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.tree = cKDTree(self.points, leafsize=_KD_LEAF_SIZE)

    def query(self, cases: np.ndarray) -> np.ndarray:
        """Index of the exact nearest point for each case row."""
        cases = np.atleast_2d(np.asarray(cases, dtype=float))
        n = self.points.shape[0]
        if n == 1:
            return np.zeros(cases.shape[0], dtype=np.int64)
        dist, idx = self.tree.query(cases, k=2)
        ambiguous = np.flatnonzero(dist[:, 1] <= dist[:, 0] * (1.0 + 1e-12))
        out = idx[:, 0].astype(np.int64)
        for row in ambiguous:
            r = dist[row, 0] * (1.0 + 1e-9)
            cand = np.array(self.tree.query_ball_point(cases[row], r), dtype=np.int64)
            d2 = ((self.points[cand] - cases[row]) ** 2).sum(axis=1)
            out[row] = cand[d2 == d2.min()].min()
        return out


def predict_1nn(
    points: np.ndarray,
    labels: CrispAssignment,
    cases: np.ndarray,
    index: NearestNeighborIndex | None = None,
) -> CrispAssignment:
    """Label each case by its exact nearest resample point."""
    if len(labels) != np.atleast_2d(points).shape[0]:
        raise ValueError("labels must cover the resample points")
    if index is None:
        index = NearestNeighborIndex(points)
    nearest = index.query(cases)
    return CrispAssignment(labels.labels[nearest], labels.k)

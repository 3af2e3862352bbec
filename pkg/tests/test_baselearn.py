from itertools import combinations

import numpy as np
import pytest
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree

from voteclust.baselearn import (
    NearestNeighborIndex,
    dedup_points,
    draw_resample,
    fit_kmeans,
    fit_pam,
    fit_single_link,
    pam_objective,
    predict_1nn,
    predict_nearest_representative,
)
from voteclust.core import CrispAssignment
from voteclust.matching import agreement_count, align_labels_exact


def two_blobs(rng, n_per=25, sep=20.0, sd=1.0):
    a = rng.normal((0.0, 0.0), sd, (n_per, 2))
    b = rng.normal((sep, 0.0), sd, (n_per, 2))
    pts = np.vstack([a, b])
    truth = CrispAssignment(np.repeat([1, 2], n_per), 2)
    return pts, truth


def same_partition(a: CrispAssignment, b: CrispAssignment) -> bool:
    return agreement_count(a, b, align_labels_exact(a, b)) == len(a)


def linear_scan_nn(points, case):
    d2 = ((points - case) ** 2).sum(axis=1)
    return int(np.flatnonzero(d2 == d2.min()).min())


# ------------------------------------------------------------- resampling


def test_draw_resample_basics():
    r = draw_resample(1, 5, "bootstrap", np.random.default_rng(0))
    assert r.indices.tolist() == [1, 1, 1, 1, 1]
    r2 = draw_resample(200, 100, "subsample", np.random.default_rng(1))
    assert r2.size == 100
    assert r2.indices.min() >= 1 and r2.indices.max() <= 200
    same = draw_resample(50, 30, "bootstrap", np.random.default_rng(9))
    again = draw_resample(50, 30, "bootstrap", np.random.default_rng(9))
    assert np.array_equal(same.indices, again.indices)
    with pytest.raises(ValueError):
        draw_resample(10, 0, "bootstrap", np.random.default_rng(0))
    with pytest.raises(ValueError):
        draw_resample(10, 5, "jackknife", np.random.default_rng(0))


def test_bootstrap_distinct_fraction():
    # expected distinct fraction of an n-out-of-n bootstrap: 1 - (1 - 1/n)^n
    rng = np.random.default_rng(7)
    fracs = [
        np.unique(draw_resample(200, 200, "bootstrap", rng).indices).size / 200
        for _ in range(10_000)
    ]
    expected = 1 - (1 - 1 / 200) ** 200
    assert abs(np.mean(fracs) - expected) < 0.002


def test_dedup_points_orders_by_first_occurrence():
    pts = np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 0.0], [2.0, 2.0], [0.0, 0.0]])
    uniq, weights, inverse = dedup_points(pts)
    assert uniq.tolist() == [[1.0, 0.0], [0.0, 0.0], [2.0, 2.0]]
    assert weights.tolist() == [2, 2, 1]
    assert inverse.tolist() == [0, 1, 0, 2, 1]
    assert np.array_equal(uniq[inverse], pts)


# ---------------------------------------------------------------- k-means


def test_kmeans_separates_blobs():
    rng = np.random.default_rng(2)
    for trial in range(10):
        pts, truth = two_blobs(rng)
        model = fit_kmeans(pts, 2, np.random.default_rng(trial))
        assert not model.degenerate
        assert same_partition(model.assignment, truth)


def test_kmeans_k1_center_is_mean():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(40, 3))
    model = fit_kmeans(pts, 1, rng)
    assert model.assignment.labels.tolist() == [1] * 40
    assert model.representatives[0] == pytest.approx(pts.mean(axis=0))


def test_kmeans_degenerates_below_k_distinct():
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])[np.array([0, 1, 2, 0, 1, 2])]
    model = fit_kmeans(pts, 4, np.random.default_rng(0))
    assert model.degenerate
    assert model.assignment.occupied().size == 3
    assert model.representatives.shape[0] == 3


def test_kmeans_labels_compact_and_reps_aligned():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(60, 2))
    model = fit_kmeans(pts, 4, rng)
    occ = model.assignment.occupied()
    assert occ.tolist() == list(range(1, occ.size + 1))
    assert model.representatives.shape[0] == occ.size
    # every case sits nearest its own representative (Lloyd fixed point)
    d2 = ((pts[:, None, :] - model.representatives[None, :, :]) ** 2).sum(axis=2)
    assert np.array_equal(d2.argmin(axis=1) + 1, model.assignment.labels)


# -------------------------------------------------------------------- PAM


def test_pam_matches_exhaustive_pair_minimum_on_blobs():
    rng = np.random.default_rng(5)
    for trial in range(15):
        pts, _ = two_blobs(rng, n_per=int(rng.integers(4, 15)), sep=float(rng.integers(8, 25)))
        model = fit_pam(pts, 2)
        got = pam_objective(pts, model.representatives)
        uniq, _, _ = dedup_points(pts)
        best = min(
            pam_objective(pts, uniq[list(pair)])
            for pair in combinations(range(uniq.shape[0]), 2)
        )
        assert got == pytest.approx(best, rel=1e-9), f"trial {trial}"


def test_pam_is_swap_locally_optimal():
    # termination contract: no single medoid replacement can lower the objective
    rng = np.random.default_rng(50)
    for _ in range(8):
        pts = rng.normal(size=(int(rng.integers(10, 25)), 2)) * 3
        k = int(rng.integers(2, 4))
        model = fit_pam(pts, k)
        uniq, w, _ = dedup_points(pts)
        med = [int(np.flatnonzero((uniq == r).all(axis=1))[0]) for r in model.representatives]

        def wobj(medoids):
            d = np.sqrt(((uniq[:, None, :] - uniq[medoids][None, :, :]) ** 2).sum(axis=2))
            return float((w * d.min(axis=1)).sum())

        base = wobj(med)
        for j in range(k):
            for h in range(uniq.shape[0]):
                if h in med:
                    continue
                trial = list(med)
                trial[j] = h
                assert wobj(trial) >= base - 1e-9 * max(1.0, base)


def test_pam_blobs_one_medoid_each():
    rng = np.random.default_rng(6)
    pts, truth = two_blobs(rng)
    model = fit_pam(pts, 2)
    assert same_partition(model.assignment, truth)
    xs = np.sort(model.representatives[:, 0])
    assert xs[0] < 10 < xs[1]


def test_pam_all_distinct_k_equals_n():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(12, 2))
    model = fit_pam(pts, 12)
    assert pam_objective(pts, model.representatives) == 0.0
    assert model.assignment.occupied().size == 12


def test_pam_duplicates_keep_medoids_distinct():
    rng = np.random.default_rng(8)
    base = rng.normal(size=(10, 2))
    pts = base[rng.integers(0, 10, 40)]  # heavy duplication
    model = fit_pam(pts, 3)
    reps = model.representatives
    assert np.unique(reps, axis=0).shape[0] == reps.shape[0]


def test_pam_weighted_duplicates_equal_raw_objective():
    # duplicated rows must pull the objective exactly like multiplicity weights
    rng = np.random.default_rng(9)
    base = rng.normal(size=(15, 2))
    reps = base[:2]
    dup = np.vstack([base, base[5:10]])
    assert pam_objective(dup, reps) == pytest.approx(
        pam_objective(base, reps) + pam_objective(base[5:10], reps)
    )


# ------------------------------------------------------------ single link


def two_spirals(n=100, gap=4.0):
    t = np.linspace(0.0, 3 * np.pi, n)
    r = 1.0 + t
    inner = np.c_[r * np.cos(t), r * np.sin(t)]
    outer = np.c_[(r + gap) * np.cos(t), (r + gap) * np.sin(t)]
    pts = np.vstack([inner, outer])
    truth = CrispAssignment(np.repeat([1, 2], n), 2)
    return pts, truth


def mst_cut_oracle(pts, k):
    """Cut the k-1 heaviest MST edges; components are the single-link clusters."""
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    mst = minimum_spanning_tree(d).toarray()
    edges = np.argwhere(mst > 0)
    weights = mst[mst > 0]
    keep = np.argsort(weights)[: len(weights) - (k - 1)]
    adj = np.zeros_like(mst)
    for e in keep:
        i, j = edges[e]
        adj[i, j] = adj[j, i] = 1
    n_comp, comp = connected_components(adj, directed=False)
    assert n_comp == k
    return CrispAssignment(comp + 1, k)


def test_single_link_separates_spirals():
    pts, truth = two_spirals()
    model = fit_single_link(pts, 2)
    assert same_partition(model.assignment, truth)


def test_single_link_k1_and_kn():
    rng = np.random.default_rng(10)
    pts = rng.normal(size=(9, 2))
    assert fit_single_link(pts, 1).assignment.labels.tolist() == [1] * 9
    model = fit_single_link(pts, 9)
    assert model.assignment.occupied().size == 9


def test_single_link_matches_mst_cut():
    rng = np.random.default_rng(11)
    for _ in range(10):
        pts = rng.normal(size=(30, 2))
        for k in (2, 3, 5):
            got = fit_single_link(pts, k).assignment
            assert same_partition(got, mst_cut_oracle(pts, k))


def test_single_link_cuts_are_nested():
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(40, 2))
    for k in (2, 3, 4, 5):
        fine = fit_single_link(pts, k + 1).assignment.labels
        coarse = fit_single_link(pts, k).assignment.labels
        # every fine cluster maps into exactly one coarse cluster
        for lab in np.unique(fine):
            assert np.unique(coarse[fine == lab]).size == 1


def test_single_link_duplicate_points():
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0], [0.1, 0.0]])
    model = fit_single_link(pts, 2)
    assert model.assignment.labels.tolist() == [1, 1, 2, 2, 1]


# ------------------------------------------------------------- prediction


def test_predict_nearest_representative_rules():
    model = fit_pam(np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]]), 2)
    # a case sitting on medoid 2's coordinates gets label 2
    got = predict_nearest_representative(model, model.representatives[1][None, :])
    assert got.labels[0] == 2
    # equidistant case resolves to the lowest label
    mid = model.representatives.mean(axis=0)[None, :]
    assert predict_nearest_representative(model, mid).labels[0] == 1


def test_predict_nearest_representative_matches_scan():
    rng = np.random.default_rng(13)
    pts = rng.normal(size=(50, 3))
    model = fit_kmeans(pts, 4, rng)
    cases = rng.normal(size=(200, 3))
    got = predict_nearest_representative(model, cases)
    for i in range(200):
        d2 = ((model.representatives - cases[i]) ** 2).sum(axis=1)
        want = model.rep_labels[np.flatnonzero(d2 == d2.min()).min()]
        assert got.labels[i] == want


def test_predict_1nn_own_point_and_oracle():
    rng = np.random.default_rng(14)
    pts = rng.normal(size=(80, 10))
    labels = CrispAssignment(rng.integers(1, 5, 80), 4)
    # a resample member predicts its own label
    got = predict_1nn(pts, labels, pts[17][None, :])
    assert got.labels[0] == labels.labels[17]
    cases = rng.normal(size=(1000, 10))
    got = predict_1nn(pts, labels, cases)
    for i in range(0, 1000, 7):
        assert got.labels[i] == labels.labels[linear_scan_nn(pts, cases[i])]


def test_predict_1nn_duplicate_tie_lowest_index():
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    labels = CrispAssignment([3, 2, 1], 3)
    got = predict_1nn(pts, labels, np.array([[1.0, 1.0]]))
    assert got.labels[0] == 2  # index 1 beats index 2


def test_kdtree_equals_linear_scan_with_ties():
    rng = np.random.default_rng(15)
    for m in (1, 2, 5, 20):
        pts = np.round(rng.normal(size=(60, m)), 1)  # rounding induces ties
        pts = np.vstack([pts, pts[:10]])  # exact duplicates
        idx = NearestNeighborIndex(pts)
        cases = np.round(rng.normal(size=(100, m)), 1)
        got = idx.query(cases)
        for i in range(100):
            assert got[i] == linear_scan_nn(pts, cases[i])

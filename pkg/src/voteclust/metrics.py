"""External agreement indices and simulation-based validation studies.

Agreement between two crisp partitions is reported four ways: rand and its
chance-corrected form (crand) are label-free pair-counting indices; fraction
matched and Cohen's kappa are computed after optimally aligning the two
label sets.  The validation procedures compare how much successive
independent null samples agree (nothing real to find) against how much
successive resamples of the actual data agree.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .core import CrispAssignment, Dataset, _fmt
from .matching import (
    KTooLarge,
    LengthMismatch,
    agreement_count,
    align_labels_exact,
    align_labels_heuristic,
    apply_permutation,
    contingency,
)
from .mmcc import MmccConfig, fit_round_solution

# separates evaluation-grid draws from sample draws in the null-sim streams
_EVAL_STREAM = 0x4E554C4C


class DegenerateCovariance(ValueError):
    """Covariance estimate unusable even after diagonal jitter."""


@dataclass
class AgreementReport:
    fraction_matched: float
    kappa: float
    rand: float
    crand: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "fraction_matched": self.fraction_matched,
                "kappa": self.kappa,
                "rand": self.rand,
                "crand": self.crand,
            },
            sort_keys=True,
        )


def _comb2(x: np.ndarray) -> np.ndarray:
    return x * (x - 1) / 2.0


def _lift(a: CrispAssignment, b: CrispAssignment):
    """Put both assignments on a common label space (max of the two K)."""
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} cases vs {len(b)}")
    k = max(a.k, b.k)
    return CrispAssignment(a.labels, k), CrispAssignment(b.labels, k)


def rand_index(a: CrispAssignment, b: CrispAssignment) -> float:
    """Fraction of case pairs treated consistently by both partitions."""
    a, b = _lift(a, b)
    t = contingency(a, b).counts
    n = len(a)
    pairs = _comb2(np.array(n, dtype=float))
    same_both = _comb2(t.astype(float)).sum()
    same_a = _comb2(t.sum(axis=1).astype(float)).sum()
    same_b = _comb2(t.sum(axis=0).astype(float)).sum()
    return float(1.0 - (same_a + same_b - 2.0 * same_both) / pairs)


def adjusted_rand_index(a: CrispAssignment, b: CrispAssignment) -> float:
    """Chance-corrected rand index (expected value 0 for random labels)."""
    a, b = _lift(a, b)
    t = contingency(a, b).counts
    n = len(a)
    pairs = _comb2(np.array(n, dtype=float))
    same_both = _comb2(t.astype(float)).sum()
    same_a = _comb2(t.sum(axis=1).astype(float)).sum()
    same_b = _comb2(t.sum(axis=0).astype(float)).sum()
    expected = same_a * same_b / pairs
    top = same_both - expected
    bottom = 0.5 * (same_a + same_b) - expected
    if bottom == 0.0:
        return 1.0
    return float(top / bottom)


def _matched_table(a: CrispAssignment, b: CrispAssignment) -> np.ndarray:
    """Contingency of a aligned onto b, exact matcher with greedy fallback."""
    try:
        perm = align_labels_exact(a, b)
    except KTooLarge:
        perm = align_labels_heuristic(a, b)
    return contingency(apply_permutation(a, perm), b).counts


def agreement(a: CrispAssignment, b: CrispAssignment) -> AgreementReport:
    """All four agreement indices between two equal-length partitions."""
    a, b = _lift(a, b)
    n = len(a)
    table = _matched_table(a, b)
    diag = float(np.trace(table))
    po = diag / n
    pe = float((table.sum(axis=1) * table.sum(axis=0)).sum()) / (n * n)
    if pe == 1.0:
        kappa = 1.0 if po == 1.0 else 0.0
    else:
        kappa = (po - pe) / (1.0 - pe)
    return AgreementReport(
        fraction_matched=po,
        kappa=float(kappa),
        rand=rand_index(a, b),
        crand=adjusted_rand_index(a, b),
    )


# ------------------------------------------------------- null simulation


@dataclass
class NullSimConfig:
    """Reference distribution for the no-structure baseline.

    The reference is a multivariate normal with the data's first two
    moments; `evaluation` selects the common case set each successive pair
    of fitted models is compared on: a fresh grid of null draws per pair
    (default) or the later sample of the pair.
    """

    mean: np.ndarray
    cov: np.ndarray
    draws: int
    n: int
    k: int
    base: str = "pam"
    predictor: str = "rep"
    seed: int = 0
    evaluation: Literal["fresh", "next"] = "fresh"

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        if self.draws < 2:
            raise ValueError("need at least 2 draws to form a pair")
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("covariance shape must match mean length")

    @classmethod
    def from_data(cls, data: Dataset, draws: int, n: int, k: int, **kwargs) -> "NullSimConfig":
        values = data.values
        return cls(
            mean=values.mean(axis=0),
            cov=np.cov(values, rowvar=False, ddof=1),
            draws=draws,
            n=n,
            k=k,
            **kwargs,
        )


def _cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jittered = cov + 1e-10 * np.eye(cov.shape[0])
    try:
        return np.linalg.cholesky(jittered)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovariance(str(exc)) from exc


def simulate_null_agreement(cfg: NullSimConfig) -> np.ndarray:
    """Rand agreement between models fitted to successive null samples.

    Returns draws-1 values.  Each pair of successively fitted models is
    evaluated on a shared case set (see NullSimConfig.evaluation) because
    the two samples themselves share no cases.
    """
    chol = _cholesky_with_jitter(np.atleast_2d(cfg.cov))
    m = cfg.mean.size
    dispatch = MmccConfig(k=cfg.k, base=cfg.base, predictor=cfg.predictor)
    base_fit, predict = dispatch.base_fitter, dispatch.predict_fn

    samples = []
    models = []
    for t in range(cfg.draws):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, t)))
        sample = cfg.mean + rng.standard_normal((cfg.n, m)) @ chol.T
        model = base_fit(sample, cfg.k, rng)
        samples.append(sample)
        models.append(model)

    rands = np.empty(cfg.draws - 1)
    for t in range(cfg.draws - 1):
        if cfg.evaluation == "fresh":
            rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, t, _EVAL_STREAM)))
            grid = cfg.mean + rng.standard_normal((cfg.n, m)) @ chol.T
        else:
            grid = samples[t + 1]
        first = predict(models[t], samples[t], grid)
        second = predict(models[t + 1], samples[t + 1], grid)
        rands[t] = rand_index(first, second)
    return rands


def resample_pair_agreement(data: Dataset, cfg: MmccConfig, draws: int) -> np.ndarray:
    """Rand agreement between successive full-length resample solutions.

    Draws `draws` resample solutions of the real data with the usual
    per-round seed streams and compares each consecutive pair; rounds that
    stay degenerate through their retries are dropped.
    """
    solutions = []
    for round_no in range(1, draws + 1):
        sol = fit_round_solution(data.values, cfg, round_no)
        if sol is not None:
            solutions.append(sol)
    return np.array(
        [rand_index(a, b) for a, b in zip(solutions, solutions[1:])]
    )


def reference_agreement(
    data: Dataset, cfg: MmccConfig, reference: CrispAssignment, draws: int
) -> np.ndarray:
    """Rand agreement of each resample solution against a fixed reference."""
    if len(reference) != data.n_cases:
        raise LengthMismatch("reference must be full-length")
    values = []
    for round_no in range(1, draws + 1):
        sol = fit_round_solution(data.values, cfg, round_no)
        if sol is not None:
            values.append(rand_index(sol, reference))
    return np.array(values)


# ----------------------------------------------------- convergence study


def _study_single_run(args):
    data_values, cfg, row_ids = args
    from .core import Dataset as _Dataset
    from .mmcc import mmcc_fit

    result = mmcc_fit(_Dataset(data_values, list(row_ids)), cfg)
    return cfg.k, cfg.seed, result.cic_trace, result.degenerate_rounds


def convergence_study(
    data: Dataset,
    cfg: MmccConfig,
    k_values: list[int],
    repetitions: int,
    workers: int = 1,
) -> np.ndarray:
    """Fraction of repetitions whose running CIC argmax lands on each K.

    Repetition r reruns the whole K sweep with seed cfg.seed + r.  Returns
    an array of shape (resamples, len(k_values)); entry [t, j] is the
    fraction of repetitions whose best CIC after round t+1 was k_values[j].
    Rounds where a K has no finite trace yet are excluded from its argmax.
    """
    if repetitions < 2:
        raise ValueError("need at least 2 repetitions")
    jobs = [
        (data.values, replace(cfg, k=k, seed=cfg.seed + rep), tuple(data.row_ids))
        for rep in range(repetitions)
        for k in k_values
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_study_single_run, jobs, chunksize=1))
    else:
        outcomes = [_study_single_run(j) for j in jobs]

    rounds = cfg.resamples
    traces = {}  # (seed, k) -> trace
    for k, seed, trace, _ in outcomes:
        traces[(seed, k)] = trace
    wins = np.zeros((rounds, len(k_values)))
    for rep in range(repetitions):
        stack = np.vstack([traces[(cfg.seed + rep, k)] for k in k_values])
        stack = np.where(np.isfinite(stack), stack, -np.inf)
        best = stack.argmax(axis=0)
        wins[np.arange(rounds), best] += 1.0
    return wins / repetitions


# -------------------------------------------------- silhouette baseline


def mean_silhouette(values: np.ndarray, labels: CrispAssignment) -> float:
    """Mean silhouette width under Euclidean distance; singletons score 0."""
    n = len(labels)
    if n != values.shape[0]:
        raise LengthMismatch("labels must cover all rows")
    d = np.sqrt(np.maximum(((values[:, None, :] - values[None, :, :]) ** 2).sum(axis=2), 0.0))
    labs = labels.labels
    widths = np.zeros(n)
    occupied = np.unique(labs)
    if occupied.size < 2:
        return 0.0
    masks = {lab: labs == lab for lab in occupied}
    for i in range(n):
        own = masks[labs[i]]
        size = own.sum()
        if size == 1:
            continue  # singleton: width 0
        a = d[i, own].sum() / (size - 1)
        b = min(d[i, masks[lab]].mean() for lab in occupied if lab != labs[i])
        widths[i] = (b - a) / max(a, b)
    return float(widths.mean())


# ---------------------------------------------------------- serialization


def distribution_tsv(name: str, values: np.ndarray) -> str:
    lines = [name] + [_fmt(v) for v in values]
    return "\n".join(lines) + "\n"


def distribution_summary(values: np.ndarray) -> str:
    q = np.percentile(values, [0, 25, 50, 75, 100])
    return json.dumps(
        {
            "min": float(q[0]),
            "q1": float(q[1]),
            "median": float(q[2]),
            "q3": float(q[3]),
            "max": float(q[4]),
            "count": int(values.size),
        },
        sort_keys=True,
    )

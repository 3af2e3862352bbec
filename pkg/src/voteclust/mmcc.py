"""The resample-vote aggregation loop.

Each round draws a resample, fits a base K-cluster model to it, extends the
fitted labels to the full sample by out-of-resample prediction, aligns the
labels with the running majority vote, and adds one vote per case.  After R
rounds the vote matrix row-normalizes into the membership probability
matrix that the information criterion scores.

Determinism contract: every round's resample and fit consume an rng derived
from (seed, k, round, attempt), so fits are reproducible in isolation and
can be computed speculatively in parallel; the majority tie-break jitter
comes from a single aggregator stream consumed strictly in round order.
Results are therefore bit-identical for any worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .baselearn import (
    FittedBaseModel,
    draw_resample,
    fit_kmeans,
    fit_pam,
    fit_single_link,
    predict_1nn,
    predict_nearest_representative,
)
from .cic import cic
from .core import (
    CrispAssignment,
    Dataset,
    ProbabilityMatrix,
    VoteMatrix,
    _fmt,
    majority_estimate,
    normalize_votes,
)
from .matching import align_labels_exact, align_labels_heuristic, apply_permutation

# tag separating the aggregator's seed stream from per-round fit streams
_AGGREGATOR_STREAM = 0x7FFFFFFF

BaseFitter = Callable[[np.ndarray, int, np.random.Generator], FittedBaseModel]
Predictor = Callable[[FittedBaseModel, np.ndarray, np.ndarray], CrispAssignment]


class AllRoundsDegenerate(RuntimeError):
    """Every resample degenerated; no votes were ever cast."""


class UncoveredCase(ValueError):
    """A case appears in no batch of a batched-run layout."""

    def __init__(self, case: int):
        self.case = case
        super().__init__(f"case {case} is covered by no batch")


def _fit_singlelink_rng(points, k, rng):  # rng accepted for interface parity
    return fit_single_link(points, k)


_BASE_FITTERS: dict[str, BaseFitter] = {
    "kmeans": fit_kmeans,
    "pam": fit_pam,
    "slink": _fit_singlelink_rng,
}


def _predict_rep(model, resample_points, cases):
    return predict_nearest_representative(model, cases)


def _predict_nn1(model, resample_points, cases):
    return predict_1nn(resample_points, model.assignment, cases)


_PREDICTORS: dict[str, Predictor] = {"rep": _predict_rep, "nn1": _predict_nn1}


@dataclass
class MmccConfig:
    """Configuration of one aggregation run for a single candidate K."""

    k: int
    resamples: int = 1000
    resample_size: int | None = None  # None: same size as the sample
    scheme: Literal["bootstrap", "subsample"] = "bootstrap"
    base: str | BaseFitter = "pam"
    predictor: str | Predictor = "rep"
    matcher: Literal["exact", "heuristic"] = "exact"
    seed: int = 0
    degenerate_retry_limit: int = 3
    early_stop: bool = False
    window: int = 100
    epsilon: float = 0.005

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.resamples < 2:
            raise ValueError("need at least 2 voting rounds")
        if self.resample_size is not None and self.resample_size < 1:
            raise ValueError("resample size must be >= 1")
        if isinstance(self.base, str) and self.base not in _BASE_FITTERS:
            raise ValueError(f"unknown base learner {self.base!r}")
        if isinstance(self.predictor, str) and self.predictor not in _PREDICTORS:
            raise ValueError(f"unknown predictor {self.predictor!r}")
        if self.matcher not in ("exact", "heuristic"):
            raise ValueError(f"unknown matcher {self.matcher!r}")

    @property
    def base_fitter(self) -> BaseFitter:
        return _BASE_FITTERS[self.base] if isinstance(self.base, str) else self.base

    @property
    def predict_fn(self) -> Predictor:
        return _PREDICTORS[self.predictor] if isinstance(self.predictor, str) else self.predictor

    @property
    def align_fn(self):
        return align_labels_exact if self.matcher == "exact" else align_labels_heuristic


@dataclass
class MmccResult:
    """Aggregated votes and per-round criterion trace for one K."""

    votes: VoteMatrix
    probs: ProbabilityMatrix
    degenerate_rounds: int
    rounds_used: int
    cic_trace: np.ndarray = field(repr=False)

    def trace_tsv(self) -> str:
        lines = ["round\tcic"]
        for r, value in enumerate(self.cic_trace, start=1):
            lines.append(f"{r}\t{_fmt(value)}")
        return "\n".join(lines) + "\n"


def fit_round_solution(
    points: np.ndarray, cfg: MmccConfig, round_no: int
) -> CrispAssignment | None:
    """Fit one resample round over `points` and extend labels to all of them.

    Returns None when every attempt (1 + degenerate_retry_limit) produced a
    degenerate base model.  Deterministic in (cfg.seed, cfg.k, round_no).
    """
    n = points.shape[0]
    size = cfg.resample_size if cfg.resample_size is not None else n
    for attempt in range(1 + cfg.degenerate_retry_limit):
        rng = np.random.default_rng(
            np.random.SeedSequence((cfg.seed, cfg.k, round_no, attempt))
        )
        resample = draw_resample(n, size, cfg.scheme, rng)
        rows = resample.indices - 1
        resampled = points[rows]
        model = cfg.base_fitter(resampled, cfg.k, rng)
        if model.degenerate:
            continue
        labels = np.zeros(n, dtype=np.int64)
        labels[rows] = model.assignment.labels
        out = np.flatnonzero(labels == 0)
        if out.size:
            predicted = cfg.predict_fn(model, resampled, points[out])
            labels[out] = predicted.labels
        return CrispAssignment(labels, cfg.k)
    return None


def check_convergence(
    cic_trace: Sequence[float],
    window: int,
    epsilon: float,
    stable_rounds: int | None = None,
) -> bool:
    """True when the criterion has settled.

    The last `window` trace values must span less than `epsilon` bits; when
    the caller tracks majority stability, `stable_rounds` (consecutive
    rounds with an unchanged majority assignment) must also reach `window`.
    """
    trace = np.asarray(cic_trace, dtype=float)
    if trace.size < window:
        raise ValueError(f"trace length {trace.size} is below the window {window}")
    tail = trace[-window:]
    if not np.all(np.isfinite(tail)):
        return False
    if float(tail.max() - tail.min()) >= epsilon:
        return False
    if stable_rounds is not None and stable_rounds < window:
        return False
    return True


def mmcc_fit(data: Dataset, cfg: MmccConfig) -> MmccResult:
    """Run the full vote-aggregation loop on one dataset for one K.

    The first successful round votes unmatched (there is no reference yet);
    every later solution is aligned to the current row-wise majority before
    voting.  Rounds whose base fit stays degenerate through all retries are
    skipped and counted, never voted.
    """
    n = data.n_cases
    votes = VoteMatrix.zeros(n, cfg.k)
    agg_rng = np.random.default_rng(
        np.random.SeedSequence((cfg.seed, cfg.k, _AGGREGATOR_STREAM))
    )
    trace = np.full(cfg.resamples, np.nan)
    degenerate_rounds = 0
    successes = 0
    stable = 0
    last_majority: np.ndarray | None = None
    rounds_used = cfg.resamples
    for round_no in range(1, cfg.resamples + 1):
        solution = fit_round_solution(data.values, cfg, round_no)
        if solution is None:
            degenerate_rounds += 1
            if round_no > 1:
                trace[round_no - 1] = trace[round_no - 2]
            continue
        if successes == 0:
            voted = solution
        else:
            reference = majority_estimate(votes, agg_rng)
            if last_majority is not None and np.array_equal(reference.labels, last_majority):
                stable += 1
            else:
                stable = 1
            last_majority = reference.labels
            perm = cfg.align_fn(solution, reference)
            voted = apply_permutation(solution, perm)
        votes.add_votes(voted)
        successes += 1
        trace[round_no - 1] = cic(normalize_votes(votes)).cic
        if (
            cfg.early_stop
            and round_no >= cfg.window
            and check_convergence(trace[:round_no], cfg.window, cfg.epsilon, stable)
        ):
            rounds_used = round_no
            break
    if successes == 0:
        raise AllRoundsDegenerate(f"all {cfg.resamples} rounds degenerated for k={cfg.k}")
    return MmccResult(
        votes=votes,
        probs=normalize_votes(votes),
        degenerate_rounds=degenerate_rounds,
        rounds_used=rounds_used,
        cic_trace=trace[:rounds_used],
    )


def mmcc_fit_batched(
    data: Dataset,
    cfg: MmccConfig,
    batch_layout: Sequence[np.ndarray],
    overlap_fraction: float = 0.5,
) -> MmccResult:
    """Vote-aggregation over overlapping batches of the sample.

    Rounds cycle through the batches; each round resamples *within* its
    batch, fits, predicts onto the batch cases only, aligns against the
    majority over batch rows that have already been voted on, and votes
    only the batch rows.  Row sums of the vote matrix are therefore
    unequal.  With `batch_layout=[entire sample]` this reproduces
    mmcc_fit bit for bit.

    Batches are 1-based case index arrays.  Every case must lie in at
    least one batch (else UncoveredCase) and consecutive batches must share
    at least `overlap_fraction` of the smaller batch.
    """
    n = data.n_cases
    batches = [np.asarray(b, dtype=np.int64) for b in batch_layout]
    if not batches:
        raise ValueError("batch layout is empty")
    covered = np.zeros(n, dtype=bool)
    for b in batches:
        if b.size == 0 or b.min() < 1 or b.max() > n:
            raise ValueError("batch indices must lie in 1..N and be nonempty")
        covered[b - 1] = True
    if not covered.all():
        raise UncoveredCase(int(np.flatnonzero(~covered)[0]) + 1)
    for left, right in zip(batches, batches[1:]):
        shared = np.intersect1d(left, right).size
        needed = overlap_fraction * min(left.size, right.size)
        if shared < needed:
            raise ValueError(
                f"consecutive batches share {shared} cases, need >= {needed:.1f}"
            )

    votes = VoteMatrix.zeros(n, cfg.k)
    agg_rng = np.random.default_rng(
        np.random.SeedSequence((cfg.seed, cfg.k, _AGGREGATOR_STREAM))
    )
    trace = np.full(cfg.resamples, np.nan)
    degenerate_rounds = 0
    successes = 0
    for round_no in range(1, cfg.resamples + 1):
        batch = batches[(round_no - 1) % len(batches)]
        rows = batch - 1
        points = data.values[rows]
        solution = fit_round_solution(points, cfg, round_no)
        if solution is None:
            degenerate_rounds += 1
            if round_no > 1:
                trace[round_no - 1] = trace[round_no - 2]
            continue
        voted_mask = votes.row_sums()[rows] > 0
        if not voted_mask.any():
            voted = solution
        else:
            overlap_votes = VoteMatrix(votes.counts[rows[voted_mask]], votes.total_resamples)
            reference = majority_estimate(overlap_votes, agg_rng)
            candidate = CrispAssignment(solution.labels[voted_mask], cfg.k)
            perm = cfg.align_fn(candidate, reference)
            voted = apply_permutation(solution, perm)
        votes.add_votes(voted, rows=rows)
        successes += 1
        seen = votes.row_sums() > 0
        trace[round_no - 1] = cic(
            ProbabilityMatrix(votes.counts[seen] / votes.counts[seen].sum(axis=1, keepdims=True))
        ).cic
    if successes == 0:
        raise AllRoundsDegenerate(f"all {cfg.resamples} rounds degenerated for k={cfg.k}")
    return MmccResult(
        votes=votes,
        probs=normalize_votes(votes),
        degenerate_rounds=degenerate_rounds,
        rounds_used=cfg.resamples,
        cic_trace=trace,
    )


def majority_assignment(result: MmccResult, seed: int = 0) -> CrispAssignment:
    """Final majority labels of an aggregation run (seeded tie-break)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, _AGGREGATOR_STREAM, 1)))
    return majority_estimate(result.votes, rng)

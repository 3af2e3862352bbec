"""Shared domain types: datasets, crisp assignments, vote and probability matrices.

Cluster labels are 1-based ({1..K}) everywhere in the public API; matrix
columns are 0-based internally (column k-1 holds cluster k).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class ZeroRowSum(ValueError):
    """A vote-matrix row has no votes; the case was never voted on."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"vote matrix row {row} has zero votes")


def _fmt(x: float) -> str:
    # repr of a Python float is the shortest round-trip form, so emitted
    # TSV bytes are stable across runs and platforms.
    return repr(float(x))


@dataclass
class Dataset:
    """N x M feature matrix plus opaque per-case identifiers."""

    values: np.ndarray
    row_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-d matrix")
        n, m = self.values.shape
        if n < 2 or m < 1:
            raise ValueError(f"need at least 2 cases and 1 feature, got {n}x{m}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")
        if not self.row_ids:
            self.row_ids = [str(i + 1) for i in range(n)]
        if len(self.row_ids) != n:
            raise ValueError("row_ids length must match case count")

    @property
    def n_cases(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass
class CrispAssignment:
    """Length-N vector of cluster labels in {1..k}.

    The set of occupied labels may be a strict subset of {1..k}; degenerate
    solutions stay representable and are flagged by consumers.
    """

    labels: np.ndarray
    k: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise ValueError("labels must be a vector")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.labels.size and (self.labels.min() < 1 or self.labels.max() > self.k):
            raise ValueError(f"labels must lie in 1..{self.k}")

    def __len__(self) -> int:
        return self.labels.size

    def occupied(self) -> np.ndarray:
        """Sorted array of labels that actually occur."""
        return np.unique(self.labels)

    @property
    def is_degenerate(self) -> bool:
        return self.occupied().size < self.k


@dataclass
class VoteMatrix:
    """N x K nonnegative integer vote counts.

    Mutation is single-writer: votes are added serially through add_votes;
    after the last write the matrix may be shared freely.  Under the standard
    aggregation path all row sums equal total_resamples; under the batched
    path row sums may differ.
    """

    counts: np.ndarray
    total_resamples: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2:
            raise ValueError("counts must be a 2-d matrix")
        if self.counts.min(initial=0) < 0:
            raise ValueError("counts must be nonnegative")

    @classmethod
    def zeros(cls, n: int, k: int) -> "VoteMatrix":
        return cls(np.zeros((n, k), dtype=np.int64), 0)

    @property
    def n_cases(self) -> int:
        return self.counts.shape[0]

    @property
    def k(self) -> int:
        return self.counts.shape[1]

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def add_votes(self, assignment: CrispAssignment, rows: np.ndarray | None = None):
        """Add one vote per case; `rows` restricts voting to a case subset."""
        if rows is None:
            if len(assignment) != self.n_cases:
                raise ValueError("assignment length must match case count")
            self.counts[np.arange(self.n_cases), assignment.labels - 1] += 1
        else:
            if len(assignment) != len(rows):
                raise ValueError("assignment length must match row subset")
            np.add.at(self.counts, (rows, assignment.labels - 1), 1)
        self.total_resamples += 1

    def to_tsv(self, row_ids: list[str] | None = None) -> str:
        return _matrix_tsv(self.counts, row_ids, fmt=str)

    def to_json(self) -> str:
        return json.dumps(self.counts.tolist())


@dataclass
class ProbabilityMatrix:
    """N x K row-stochastic matrix of estimated cluster membership probabilities."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 2:
            raise ValueError("probs must be a 2-d matrix")
        if self.probs.min(initial=0.0) < 0.0 or self.probs.max(initial=0.0) > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if np.abs(self.probs.sum(axis=1) - 1.0).max(initial=0.0) > 1e-12:
            raise ValueError("rows must sum to 1 within 1e-12")

    @property
    def n_cases(self) -> int:
        return self.probs.shape[0]

    @property
    def k(self) -> int:
        return self.probs.shape[1]

    def to_tsv(self, row_ids: list[str] | None = None) -> str:
        return _matrix_tsv(self.probs, row_ids, fmt=_fmt)

    def to_json(self) -> str:
        return json.dumps(self.probs.tolist())


def normalize_votes(votes: VoteMatrix) -> ProbabilityMatrix:
    """Divide each vote count by its row sum.

    Raises ZeroRowSum for any case that never received a vote (a batched-path
    misconfiguration; impossible on the standard path).
    """
    sums = votes.row_sums()
    empty = np.flatnonzero(sums == 0)
    if empty.size:
        raise ZeroRowSum(int(empty[0]))
    return ProbabilityMatrix(votes.counts / sums[:, None])


def majority_estimate(votes: VoteMatrix, rng: np.random.Generator) -> CrispAssignment:
    """Row-wise majority vote, breaking ties uniformly at random.

    Deterministic given the generator state.  Ties are resolved by adding
    sub-unit random jitter to the integer counts before the argmax, which
    picks uniformly among the tied maxima.
    """
    sums = votes.row_sums()
    empty = np.flatnonzero(sums == 0)
    if empty.size:
        raise ZeroRowSum(int(empty[0]))
    jitter = rng.random(votes.counts.shape)
    labels = np.argmax(votes.counts + 0.5 * jitter, axis=1) + 1
    return CrispAssignment(labels, votes.k)


def _matrix_tsv(mat: np.ndarray, row_ids, fmt) -> str:
    n, k = mat.shape
    if row_ids is None:
        row_ids = [str(i + 1) for i in range(n)]
    lines = ["case\t" + "\t".join(f"k{j + 1}" for j in range(k))]
    for rid, row in zip(row_ids, mat):
        lines.append(str(rid) + "\t" + "\t".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def read_matrix_tsv(text: str) -> tuple[np.ndarray, list[str]]:
    """Parse the case/k1..kK TSV form back into (matrix, row_ids)."""
    lines = [ln for ln in text.splitlines() if ln]
    header = lines[0].split("\t")
    if header[0] != "case":
        raise ValueError("expected 'case' header column")
    ids, rows = [], []
    for ln in lines[1:]:
        parts = ln.split("\t")
        ids.append(parts[0])
        rows.append([float(v) for v in parts[1:]])
    return np.asarray(rows), ids


def write_assignment_tsv(assignment: CrispAssignment, row_ids: list[str] | None = None) -> str:
    n = len(assignment)
    if row_ids is None:
        row_ids = [str(i + 1) for i in range(n)]
    lines = ["case\tlabel"]
    for rid, lab in zip(row_ids, assignment.labels):
        lines.append(f"{rid}\t{lab}")
    return "\n".join(lines) + "\n"


def read_assignment_tsv(text: str, k: int | None = None) -> CrispAssignment:
    lines = [ln for ln in text.splitlines() if ln]
    if lines and lines[0].startswith("case"):
        lines = lines[1:]
    labels = np.array([int(ln.split("\t")[1]) for ln in lines], dtype=np.int64)
    return CrispAssignment(labels, k if k is not None else int(labels.max()))

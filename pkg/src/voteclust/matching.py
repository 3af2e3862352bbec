"""Label alignment between crisp clusterings.

Cluster labels coming out of independent fits are arbitrary; before votes
from a new solution can be pooled with an existing reference, its labels
must be permuted to maximize agreement.  Two matchers are provided behind
the same interface: an exact maximum-agreement assignment and a greedy
largest-cell heuristic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import CrispAssignment

#: Largest K the exact matcher accepts by default.
EXACT_MATCH_BOUND = 12


class LengthMismatch(ValueError):
    """The two assignments cover different numbers of cases."""


class KTooLarge(ValueError):
    """K exceeds the exact-matching bound; use the heuristic matcher."""


class NotAPermutation(ValueError):
    """The supplied label map is not a bijection on {1..K}."""


@dataclass
class ContingencyTable:
    """K x K cross-tabulation; counts[a-1, b-1] = #cases with candidate label
    a and reference label b."""

    counts: np.ndarray

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def contingency(candidate: CrispAssignment, reference: CrispAssignment) -> ContingencyTable:
    if len(candidate) != len(reference):
        raise LengthMismatch(f"{len(candidate)} cases vs {len(reference)}")
    if candidate.k != reference.k:
        raise ValueError(f"assignments declare different K: {candidate.k} vs {reference.k}")
    k = candidate.k
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (candidate.labels - 1, reference.labels - 1), 1)
    return ContingencyTable(counts)


def align_labels_exact(
    candidate: CrispAssignment,
    reference: CrispAssignment,
    bound: int = EXACT_MATCH_BOUND,
) -> np.ndarray:
    """Permutation maximizing agreement of the relabeled candidate with the
    reference.

    Returns a 1-based permutation ``perm`` such that
    ``apply_permutation(candidate, perm)`` agrees with ``reference`` on the
    largest possible number of cases.  Among permutations achieving the
    maximum, the lexicographically smallest is returned, so the result is
    deterministic.

    Raises KTooLarge when K exceeds ``bound`` (default 12); callers should
    fall back to align_labels_heuristic.
    """
    table = contingency(candidate, reference).counts
    k = table.shape[0]
    if k > bound:
        raise KTooLarge(f"K={k} exceeds exact-matching bound {bound}")

    ri, ci = linear_sum_assignment(table, maximize=True)
    optimum = int(table[ri, ci].sum())

    # Lexicographic refinement.  `cert` always holds an optimal completion of
    # the rows not yet fixed, so accepting cert[row] costs nothing; a smaller
    # column only needs the (expensive) subproblem solve when an O(k) upper
    # bound says it could still reach the optimum.
    cert = ci.astype(np.int64)
    perm = np.zeros(k, dtype=np.int64)
    free = np.ones(k, dtype=bool)
    running = 0
    for row in range(k):
        for col in range(k):
            if not free[col]:
                continue
            attempt = running + int(table[row, col])
            if col == cert[row]:
                chosen = col
                break
            rest_rows = np.arange(row + 1, k)
            rest_free = free.copy()
            rest_free[col] = False
            if rest_rows.size:
                ceiling = attempt + int(table[np.ix_(rest_rows, np.flatnonzero(rest_free))].max(axis=1).sum())
            else:
                ceiling = attempt
            if ceiling < optimum:
                continue
            if rest_rows.size == 0:
                if attempt == optimum:
                    chosen = col
                    break
                continue
            cols_left = np.flatnonzero(rest_free)
            sub = table[np.ix_(rest_rows, cols_left)]
            sri, sci = linear_sum_assignment(sub, maximize=True)
            if attempt + int(sub[sri, sci].sum()) == optimum:
                chosen = col
                cert[rest_rows] = cols_left[sci]  # new optimal completion
                break
        perm[row] = chosen + 1
        free[chosen] = False
        running += int(table[row, chosen])
    return perm


def align_labels_heuristic(
    candidate: CrispAssignment, reference: CrispAssignment
) -> np.ndarray:
    """Greedy largest-cell matching.

    Repeatedly fix the pairing of the largest remaining contingency cell
    (ties broken toward the lowest candidate label, then lowest reference
    label) and delete its row and column.  Not guaranteed optimal, but has
    no K bound and runs in O(K^2 log K).
    """
    table = contingency(candidate, reference).counts
    k = table.shape[0]
    # sort all cells once by (-count, row, col); a linear pass then respects
    # the tie order without re-scanning the shrinking table
    rows, cols = np.divmod(np.arange(k * k), k)
    order = np.lexsort((cols, rows, -table.ravel()))
    perm = np.zeros(k, dtype=np.int64)
    row_free = np.ones(k, dtype=bool)
    col_free = np.ones(k, dtype=bool)
    remaining = k
    for idx in order:
        r, c = rows[idx], cols[idx]
        if row_free[r] and col_free[c]:
            perm[r] = c + 1
            row_free[r] = col_free[c] = False
            remaining -= 1
            if remaining == 0:
                break
    return perm


def apply_permutation(assignment: CrispAssignment, perm: np.ndarray) -> CrispAssignment:
    """Relabel: new label = perm[old label] (perm is 1-based, length K).

    Satisfies apply(apply(a, p1), p2) == apply(a, compose(p2, p1)).
    """
    perm = np.asarray(perm, dtype=np.int64)
    k = assignment.k
    if perm.shape != (k,) or not np.array_equal(np.sort(perm), np.arange(1, k + 1)):
        raise NotAPermutation(f"{perm!r} is not a permutation of 1..{k}")
    return CrispAssignment(perm[assignment.labels - 1], k)


def compose(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """compose(p2, p1)[x] = p2[p1[x]], all 1-based."""
    outer = np.asarray(outer, dtype=np.int64)
    inner = np.asarray(inner, dtype=np.int64)
    return outer[inner - 1]


def invert(perm: np.ndarray) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    out = np.empty_like(perm)
    out[perm - 1] = np.arange(1, perm.size + 1)
    return out


def agreement_count(candidate: CrispAssignment, reference: CrispAssignment, perm: np.ndarray) -> int:
    """Number of cases on which the relabeled candidate equals the reference."""
    return int(np.sum(apply_permutation(candidate, perm).labels == reference.labels))

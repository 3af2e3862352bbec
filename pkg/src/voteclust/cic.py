"""Information-theoretic scoring of a membership probability matrix.

Everything here is measured in bits (log base 2).  The headline score is

    cic = information - uncertainty

where uncertainty is the mean row entropy of the probability matrix and
information rewards rows that deviate from the marginal cluster
probabilities, discounted by a relative model complexity (RMC) penalty.

A note on the RMC exponent: the penalty is defined from the *effective
number of clusters* 2**H, H being the entropy of the marginal cluster
probabilities.  Writing the exponent with the opposite sign (the raw sum
of p*log2(p), which is non-positive) would pin RMC at or below zero and
contradict its declared range of [0, 1]; the entropy reading reproduces
both endpoints (0 for a single cluster, 1 for N singletons) and is used
deliberately throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import ProbabilityMatrix, _fmt


class NotADistribution(ValueError):
    """Probability vector entries outside [0,1] or not summing to 1."""


class KTooSmall(ValueError):
    """Operation requires at least two clusters."""


def _xlog2(p: np.ndarray) -> np.ndarray:
    """p * log2(p) with the 0*log(0) := 0 convention."""
    out = np.zeros_like(p, dtype=float)
    nz = p > 0
    out[nz] = p[nz] * np.log2(p[nz])
    return out


def entropy(p) -> float:
    """Shannon entropy of a probability vector, in bits."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise NotADistribution("expected a nonempty probability vector")
    if p.min() < 0 or p.max() > 1 or abs(p.sum() - 1.0) > 1e-9:
        raise NotADistribution(f"not a distribution: {p!r}")
    return float(-_xlog2(p).sum())


def pseudo_log2_likelihood(probs: ProbabilityMatrix) -> float:
    """Sum over cases of log2 of the winning-cluster probability.

    The winner is the row argmax, ties broken toward the lowest cluster
    index.  Zero for a crisp matrix; increasingly negative as rows spread.
    """
    winners = probs.probs.max(axis=1)
    assert winners.min() > 0.0, "a row-stochastic row cannot have max 0"
    return float(np.log2(winners).sum())


def model_uncertainty(probs: ProbabilityMatrix) -> float:
    """Mean row entropy: -(1/N) * sum of p*log2(p) over all cells."""
    return float(-_xlog2(probs.probs).sum() / probs.n_cases)


def cluster_probabilities(probs: ProbabilityMatrix) -> np.ndarray:
    """Marginal cluster probabilities: column sums over total mass."""
    colsum = probs.probs.sum(axis=0)
    return colsum / colsum.sum()


def weighted_log_deviation(probs: ProbabilityMatrix, cluster_probs: np.ndarray) -> np.ndarray:
    """Per-cell conditional information of cases given clusters.

    d[i, k] = -P[i, k] * log2(1 - |P[i, k] - phat[k]|), defined as 0
    wherever P[i, k] = 0.  The log argument can only vanish where the
    multiplier is zero, so no clamping is applied.
    """
    p = probs.probs
    arg = 1.0 - np.abs(p - np.asarray(cluster_probs)[None, :])
    mask = p > 0
    assert np.all(arg[mask] > 0.0), "log argument vanished where P > 0"
    out = np.zeros_like(p)
    out[mask] = -p[mask] * np.log2(arg[mask])
    return out


def relative_model_complexity(cluster_probs: np.ndarray, n_cases: int) -> float:
    """(2**H - 1) / (N - 1): effective cluster count rescaled onto [0, 1].

    0 when all mass sits in one cluster, 1 when every case is its own
    cluster.  See the module docstring for the sign convention.
    """
    if n_cases < 2:
        raise ValueError("need at least 2 cases")
    h = entropy(cluster_probs)
    return float((2.0**h - 1.0) / (n_cases - 1))


def model_information(d_matrix: np.ndarray, rmc: float) -> tuple[float, np.ndarray]:
    """Complexity-discounted information and its per-cell matrix.

    i[i, k] = d[i, k] * (1 - rmc); information = (1/N) * total of i.
    """
    i_matrix = d_matrix * (1.0 - rmc)
    return float(i_matrix.sum() / d_matrix.shape[0]), i_matrix


def gsd(probs: ProbabilityMatrix) -> np.ndarray:
    """Silhouette-style ambiguity of each case's winning cluster.

    2 * best / (best + second) - 1 per row, using the two largest row
    entries; 0 for a perfect tie, 1 for an unambiguous row.
    """
    if probs.k < 2:
        raise KTooSmall("gsd needs at least 2 clusters")
    part = np.partition(probs.probs, probs.k - 2, axis=1)
    best = part[:, -1]
    second = part[:, -2]
    return 2.0 * best / (best + second) - 1.0


@dataclass
class CicBreakdown:
    """Full decomposition of the criterion for one probability matrix."""

    entropy_of_marginals: float
    uncertainty: float
    d_matrix: np.ndarray
    rmc: float
    i_matrix: np.ndarray
    information: float
    cic: float
    cellwise: np.ndarray
    gsd: np.ndarray

    def to_json(self) -> str:
        return json.dumps(
            {
                "entropy_of_marginals": self.entropy_of_marginals,
                "uncertainty": self.uncertainty,
                "rmc": self.rmc,
                "information": self.information,
                "cic": self.cic,
                "gsd": self.gsd.tolist(),
                "cellwise": self.cellwise.tolist(),
            },
            sort_keys=True,
        )

    def to_diagnostics_tsv(self, labels: np.ndarray, row_ids: list[str] | None = None) -> str:
        """Per-case table: case id, majority label, gsd, cellwise row sum."""
        n = self.cellwise.shape[0]
        if row_ids is None:
            row_ids = [str(i + 1) for i in range(n)]
        rows = ["case\tlabel\tgsd\tcic"]
        cic_rows = self.cellwise.sum(axis=1)
        for rid, lab, g, c in zip(row_ids, labels, self.gsd, cic_rows):
            rows.append(f"{rid}\t{int(lab)}\t{_fmt(g)}\t{_fmt(c)}")
        return "\n".join(rows) + "\n"


def cic(probs: ProbabilityMatrix) -> CicBreakdown:
    """Evaluate the full criterion for one probability matrix.

    For a single cluster the score is 0 by definition and every diagnostic
    matrix is zero.
    """
    n, k = probs.n_cases, probs.k
    if k == 1:
        z = np.zeros((n, 1))
        return CicBreakdown(0.0, 0.0, z.copy(), 0.0, z.copy(), 0.0, 0.0, z.copy(), np.zeros(n))
    phat = cluster_probabilities(probs)
    h = entropy(phat)
    unc = model_uncertainty(probs)
    d = weighted_log_deviation(probs, phat)
    rmc = relative_model_complexity(phat, n)
    info, i_matrix = model_information(d, rmc)
    cellwise = i_matrix + _xlog2(probs.probs)  # subtracting -p*log2(p)
    value = info - unc
    return CicBreakdown(h, unc, d, rmc, i_matrix, info, value, cellwise, gsd(probs))

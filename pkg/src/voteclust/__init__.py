"""voteclust: resample-vote cluster aggregation with an information criterion
for choosing the number of clusters.

The package fits many base clusterings on resamples, aligns their labels by
contingency matching, accumulates per-case votes into a membership
probability matrix, and scores candidate cluster counts by information minus
uncertainty (both in bits).
"""

from .core import (
    CrispAssignment,
    Dataset,
    ProbabilityMatrix,
    VoteMatrix,
    ZeroRowSum,
    majority_estimate,
    normalize_votes,
)

__version__ = "0.1.0"

__all__ = [
    "CrispAssignment",
    "Dataset",
    "ProbabilityMatrix",
    "VoteMatrix",
    "ZeroRowSum",
    "majority_estimate",
    "normalize_votes",
    "__version__",
]

"""Synthetic 2-D benchmark shapes with known cluster structure.

Six families: convex blobs on a circle, a four-cluster arrangement in two
close pairs (ambiguous borders), two elongated diagonal clusters, a blob
topologically enclosed by a ring, two interleaved spirals, and a
three-cluster mix of differently shaped groups.  Each generator returns
the points plus the generating labels; `noise` scales the family's
scatter and 0 collapses curve-based shapes onto their exact curves.
"""

from __future__ import annotations

import numpy as np

from .core import CrispAssignment, Dataset


def _split(n: int, groups: int) -> list[int]:
    base, extra = divmod(n, groups)
    return [base + (1 if g < extra else 0) for g in range(groups)]


def _finish(parts, labels_per_part):
    points = np.vstack(parts)
    labels = np.concatenate(
        [np.full(len(p), lab, dtype=np.int64) for p, lab in zip(parts, labels_per_part)]
    )
    return Dataset(points), CrispAssignment(labels, int(labels.max()))


def blobs(n: int, noise: float = 1.0, seed: int = 0, clusters: int = 2):
    """Gaussian blobs at fixed centers evenly spaced on a circle of radius 8."""
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(clusters) / clusters
    centers = 8.0 * np.column_stack([np.cos(angles), np.sin(angles)])
    parts = [
        centers[g] + noise * rng.standard_normal((size, 2))
        for g, size in enumerate(_split(n, clusters))
    ]
    return _finish(parts, range(1, clusters + 1))


def flipper4(n: int, noise: float = 0.8, seed: int = 0):
    """Four convex clusters in two well-separated pairs.

    Within a pair the clusters sit close enough that their border cases
    are genuinely ambiguous, while the pairs themselves are far apart.
    """
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [0.0, 3.0], [10.0, 0.0], [10.0, 3.0]])
    parts = [
        centers[g] + noise * rng.standard_normal((size, 2))
        for g, size in enumerate(_split(n, 4))
    ]
    return _finish(parts, [1, 2, 3, 4])


def elongated2(n: int, noise: float = 0.15, seed: int = 0):
    """Two parallel elongated diagonal clusters."""
    rng = np.random.default_rng(seed)
    sizes = _split(n, 2)
    parts = []
    for g, size in enumerate(sizes):
        t = np.linspace(0.0, 1.0, size)
        spine = np.column_stack([6.0 * t, 6.0 * t])
        offset = np.array([0.0, 0.0]) if g == 0 else np.array([3.5, -3.5])
        parts.append(spine + offset + noise * rng.standard_normal((size, 2)))
    return _finish(parts, [1, 2])


def ring(n: int, noise: float = 0.15, seed: int = 0):
    """A central blob topologically enclosed by an annulus of radius 5."""
    rng = np.random.default_rng(seed)
    n_core, n_ring = _split(n, 2)
    core = 3.0 * noise * rng.standard_normal((n_core, 2))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n_ring)
    radius = 5.0 + noise * rng.standard_normal(n_ring)
    shell = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    return _finish([core, shell], [1, 2])


def spiral(n: int, noise: float = 0.05, seed: int = 0):
    """Two interleaved Archimedean spirals (second rotated by pi).

    With zero noise the points lie exactly on (t cos t, t sin t) and its
    rotation, t evenly spaced over [pi/2, 5pi/2].
    """
    rng = np.random.default_rng(seed)
    parts = []
    for g, size in enumerate(_split(n, 2)):
        t = np.linspace(0.5 * np.pi, 2.5 * np.pi, size)
        arm = np.column_stack([t * np.cos(t), t * np.sin(t)])
        if g == 1:
            arm = -arm
        parts.append(arm + noise * rng.standard_normal((size, 2)))
    return _finish(parts, [1, 2])


def modeclus3(n: int, noise: float = 1.0, seed: int = 0):
    """Three differently shaped clusters: tight blob, elongated band, broad blob."""
    rng = np.random.default_rng(seed)
    s1, s2, s3 = _split(n, 3)
    tight = np.array([-6.0, 0.0]) + 0.4 * noise * rng.standard_normal((s1, 2))
    t = np.linspace(0.0, 1.0, s2)
    band = np.column_stack([2.0 * t, 8.0 * t - 4.0]) + 0.15 * noise * rng.standard_normal(
        (s2, 2)
    )
    broad = np.array([9.0, 0.0]) + 1.0 * noise * rng.standard_normal((s3, 2))
    return _finish([tight, band, broad], [1, 2, 3])


SHAPES = {
    "blobs": blobs,
    "flipper4": flipper4,
    "elongated2": elongated2,
    "ring": ring,
    "spiral": spiral,
    "modeclus3": modeclus3,
}


def generate(shape: str, n: int, noise: float | None = None, seed: int = 0, **kwargs):
    """Dispatch to a named shape; `noise=None` takes the shape's default."""
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; choose from {sorted(SHAPES)}")
    if n < 4:
        raise ValueError("need n >= 4")
    fn = SHAPES[shape]
    if noise is None:
        return fn(n, seed=seed, **kwargs)
    return fn(n, noise=noise, seed=seed, **kwargs)

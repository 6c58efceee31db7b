"""Discrete measures, cost matrices, synthetic generators and file ingestion."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "DiscreteMeasure",
    "CostContext",
    "cost_matrix",
    "fragmented_hypercube",
    "wishart_gaussian_pair",
    "add_noise",
    "load_measure",
    "save_measure",
]

_WEIGHT_SUM_TOL = 1e-12


def _rng(seed: int) -> np.random.Generator:
    # PCG64 is pinned so that seeded runs are bit-identical across platforms.
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class DiscreteMeasure:
    """A weighted point cloud: n support atoms in R^d plus simplex weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        weights = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        if points.ndim != 2:
            raise ValueError(f"points must be a 2-d array, got shape {points.shape}")
        n, d = points.shape
        if n < 1 or d < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got shape {points.shape}")
        if weights.shape != (n,):
            raise ValueError(
                f"weights shape {weights.shape} does not match {n} points"
            )
        if not np.all(np.isfinite(points)):
            raise ValueError("points contain non-finite entries")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, expected 1")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n))


@dataclass(frozen=True)
class CostContext:
    """Pairwise squared-distance matrix plus its sup norm.

    `normalized` records whether `cost` has already been divided by the
    original sup norm (solvers do that internally for stability).
    """

    cost: np.ndarray
    max_abs: float
    normalized: bool = False

    def __post_init__(self):
        cost = np.ascontiguousarray(np.asarray(self.cost, dtype=float))
        if cost.ndim != 2:
            raise ValueError("cost must be a matrix")
        if np.any(cost < 0):
            raise ValueError("cost entries must be nonnegative")
        cost.setflags(write=False)
        object.__setattr__(self, "cost", cost)


def cost_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure) -> CostContext:
    """All pairwise squared Euclidean distances between the two supports."""
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    cost = cdist(mu.points, nu.points, metric="sqeuclidean")
    np.maximum(cost, 0.0, out=cost)
    return CostContext(cost=cost, max_abs=float(np.abs(cost).max()))


def hypercube_shift(points: np.ndarray, k_star: int) -> np.ndarray:
    """Shift the first k_star coordinates by +-2 according to their sign."""
    points = np.asarray(points, dtype=float)
    out = points.copy()
    out[..., :k_star] += 2.0 * np.sign(points[..., :k_star])
    return out


def fragmented_hypercube(
    n: int, d: int, k_star: int, rng_seed: int
) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """Uniform sample on [-1,1]^d and an independent sample pushed off-cube.

    The second measure is an independent uniform sample whose first k_star
    coordinates are shifted by +-2 depending on sign, so the displacement
    lives in a known k_star-dimensional subspace.
    """
    if not 1 <= k_star <= d:
        raise ValueError(f"k_star must be in [1, {d}], got {k_star}")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(rng_seed)
    x = rng.uniform(-1.0, 1.0, size=(n, d))
    y = hypercube_shift(rng.uniform(-1.0, 1.0, size=(n, d)), k_star)
    return DiscreteMeasure.uniform(x), DiscreteMeasure.uniform(y)


def wishart_gaussian_pair(
    n: int, d: int, k_star: int, rng_seed: int
) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """Two Gaussian samples with independent rank-k_star Wishart covariances.

    Each covariance is A A^T with A a d x k_star standard-Gaussian factor, so
    every sampled point lies in a k_star-dimensional subspace.
    """
    if not 1 <= k_star <= d:
        raise ValueError(f"k_star must be in [1, {d}], got {k_star}")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(rng_seed)
    a1 = rng.standard_normal((d, k_star))
    a2 = rng.standard_normal((d, k_star))
    # z @ A.T ~ N(0, A A^T), keeping the low-rank structure exact.
    x = rng.standard_normal((n, k_star)) @ a1.T
    y = rng.standard_normal((n, k_star)) @ a2.T
    return DiscreteMeasure.uniform(x), DiscreteMeasure.uniform(y)


def add_noise(
    measure: DiscreteMeasure, sigma: float, rng_seed: int
) -> DiscreteMeasure:
    """Add independent N(0, sigma^2 I) noise to every support point."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return DiscreteMeasure(measure.points.copy(), measure.weights.copy())
    rng = _rng(rng_seed)
    noisy = measure.points + sigma * rng.standard_normal(measure.points.shape)
    return DiscreteMeasure(noisy, measure.weights.copy())


def _finalize_weights(points: list[list[float]], weights: list[float] | None):
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if weights is None:
        return DiscreteMeasure.uniform(pts)
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    total = w.sum()
    if abs(total - 1.0) > 0.01:
        raise ValueError(f"weights sum to {total}, outside the 1% tolerance")
    return DiscreteMeasure(pts, w / total)


def _load_csv(path: str) -> DiscreteMeasure:
    with open(path, newline="") as handle:
        rows = [row for row in csv.reader(handle) if row]
    if not rows:
        raise ValueError(f"{path}: empty file")
    weight_col = None
    first = rows[0]
    try:
        [float(v) for v in first]
        header = None
    except ValueError:
        header = [h.strip().lower() for h in first]
        rows = rows[1:]
        if not rows:
            raise ValueError(f"{path}: header only, no data rows")
        if header and header[-1] == "weight":
            weight_col = len(header) - 1
    width = len(rows[0])
    points, weights = [], [] if weight_col is not None else None
    for idx, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"{path}: row {idx} has {len(row)} fields, expected {width}")
        values = [float(v) for v in row]
        if weight_col is not None:
            weights.append(values.pop(weight_col))
        points.append(values)
    return _finalize_weights(points, weights)


def _load_jsonl(path: str) -> DiscreteMeasure:
    points, weights = [], []
    with open(path) as handle:
        for idx, line in enumerate(handle):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "point" not in record:
                raise ValueError(f"{path}: line {idx} lacks a 'point' field")
            points.append([float(v) for v in record["point"]])
            if "weight" in record:
                weights.append(float(record["weight"]))
    if not points:
        raise ValueError(f"{path}: no records")
    widths = {len(p) for p in points}
    if len(widths) != 1:
        raise ValueError(f"{path}: inconsistent point dimensions {sorted(widths)}")
    if weights and len(weights) != len(points):
        raise ValueError(f"{path}: weights given for only some records")
    return _finalize_weights(points, weights if weights else None)


def load_measure(path: str, format: str = "csv") -> DiscreteMeasure:
    """Read a measure from disk.

    CSV: one point per row; an optional trailing column titled "weight" in a
    header row carries weights. JSONL: one object per line with a "point"
    array and optional "weight". Missing weights default to uniform; given
    weights are renormalized if their sum is within 1% of 1.
    """
    if format == "csv":
        return _load_csv(path)
    if format == "jsonl":
        return _load_jsonl(path)
    raise ValueError(f"unknown format {format!r}")


def save_measure(measure: DiscreteMeasure, path: str) -> None:
    """Write a measure as CSV with an explicit weight column."""
    d = measure.dim
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"x{i}" for i in range(d)] + ["weight"])
        for point, weight in zip(measure.points, measure.weights):
            writer.writerow([repr(float(v)) for v in point] + [repr(float(weight))])

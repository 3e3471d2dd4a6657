"""Fisher-Jenks natural breaks over 1-D scores, plus silhouette validation."""
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from sklearn.metrics import silhouette_samples
from loguru import logger

from lalita_curate.errors import ClusterError

TIE_TOLERANCE = 1e-12
SILHOUETTE_SAMPLE = 10000


class ClusterModel(BaseModel):
    """
    Contiguous score intervals. Cluster i holds scores in [breaks[i-1], breaks[i]);
    cluster 0 is open below and cluster k-1 open above.
    """
    model_config = ConfigDict(frozen=True)

    k: int
    breaks: List[float]
    counts: List[int]
    sse: float
    fit_min: float
    fit_max: float
    silhouette: Optional[float] = None
    silhouette_sample_size: Optional[int] = None

    @model_validator(mode="after")
    def _check(self):
        if len(self.breaks) != self.k - 1 or len(self.counts) != self.k:
            raise ValueError("breaks must hold k-1 values and counts k values")
        if any(b >= c for b, c in zip(self.breaks, self.breaks[1:])):
            raise ValueError("breaks must be strictly increasing")
        return self

    @property
    def shares(self) -> List[float]:
        total = sum(self.counts)
        return [c / total for c in self.counts]

    def with_silhouette(self, value: float, sample_size: int) -> "ClusterModel":
        return self.model_copy(update={"silhouette": value, "silhouette_sample_size": sample_size})


def _as_array(scores: Sequence[float]) -> np.ndarray:
    x = np.asarray(scores, dtype=np.float64).reshape(-1)
    if np.isnan(x).any():
        raise ClusterError("Scores contain NaN")
    return x


def _fill_row(prev: np.ndarray, cost, u: int, m: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    One DP row by divide and conquer. The earliest optimal cut is non-decreasing
    in the start index, so each midpoint only searches between the cuts chosen
    for its neighbours. Every recursion level is evaluated as one numpy batch.
    """
    row = np.full(u + 1, np.inf)
    choice = np.zeros(u + 1, dtype=np.int64)
    last_cut = u - m + 1
    lo = np.array([0])
    hi = np.array([u - m])
    opt_lo = np.array([1])
    opt_hi = np.array([last_cut])
    while lo.size:
        mid = (lo + hi) // 2
        first = np.maximum(mid + 1, opt_lo)
        lengths = opt_hi - first + 1
        offsets = np.concatenate(([0], np.cumsum(lengths)[:-1]))
        segment = np.repeat(np.arange(mid.size), lengths)
        cuts = first[segment] + np.arange(segment.size) - offsets[segment]
        total = cost(mid[segment], cuts) + prev[cuts]

        lowest = np.minimum.reduceat(total, offsets)
        within = total <= (lowest + TIE_TOLERANCE * np.maximum(1.0, np.abs(lowest)))[segment]
        hits = np.flatnonzero(within)
        picked = hits[np.unique(segment[hits], return_index=True)[1]]
        row[mid] = total[picked]
        choice[mid] = cuts[picked]

        left = lo < mid
        right = mid < hi
        lo, hi, opt_lo, opt_hi = (
            np.concatenate((lo[left], mid[right] + 1)),
            np.concatenate((mid[left] - 1, hi[right])),
            np.concatenate((opt_lo[left], choice[mid[right]])),
            np.concatenate((choice[mid[left]], opt_hi[right])),
        )
    return row, choice


def _optimal_cuts(values: np.ndarray, weights: np.ndarray, k: int) -> List[int]:
    """
    Exact DP over distinct values. Returns the k-1 cut positions (indices into
    `values` where classes 1..k-1 start), earliest positions on ties.
    """
    u = len(values)
    centred = values - np.average(values, weights=weights)
    s0 = np.concatenate(([0.0], np.cumsum(weights)))
    s1 = np.concatenate(([0.0], np.cumsum(weights * centred)))
    s2 = np.concatenate(([0.0], np.cumsum(weights * centred ** 2)))

    def cost(starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
        w = s0[ends] - s0[starts]
        a = s1[ends] - s1[starts]
        return np.maximum(s2[ends] - s2[starts] - a * a / w, 0.0)

    # best[m][i]: minimum cost of splitting values[i:] into m classes
    best = np.full((k + 1, u + 1), np.inf)
    starts = np.arange(u)
    best[1, :u] = cost(starts, np.full(u, u))
    choice = np.zeros((k + 1, u + 1), dtype=np.int64)
    for m in range(2, k + 1):
        best[m], choice[m] = _fill_row(best[m - 1], cost, u, m)

    cuts_out = []
    i = 0
    for m in range(k, 1, -1):
        i = int(choice[m, i])
        cuts_out.append(i)
    return cuts_out


def jenks_breaks(scores: Sequence[float], k: int = 4) -> ClusterModel:
    """Fisher-Jenks optimal partition of `scores` into k contiguous classes."""
    x = _as_array(scores)
    if k < 1:
        raise ClusterError(f"Number of clusters must be at least 1, got {k}")
    if len(x) < k:
        raise ClusterError(f"Need at least {k} scores for {k} clusters, got {len(x)}")
    values, counts = np.unique(x, return_counts=True)
    if k > len(values):
        raise ClusterError(f"Requested {k} clusters but the data holds only {len(values)} distinct values")

    cuts = _optimal_cuts(values, counts.astype(np.float64), k)
    bounds = [0] + cuts + [len(values)]
    breaks = [float(values[c]) for c in cuts]
    class_counts = [int(counts[a:b].sum()) for a, b in zip(bounds, bounds[1:])]

    labels = np.searchsorted(np.array(breaks), x, side="right")
    sse = 0.0
    for c in range(k):
        members = x[labels == c]
        sse += float(np.sum((members - members.mean()) ** 2))

    model = ClusterModel(
        k=k,
        breaks=breaks,
        counts=class_counts,
        sse=sse,
        fit_min=float(values[0]),
        fit_max=float(values[-1]),
    )
    logger.info(f"Fisher-Jenks k={k}: breaks={[round(b, 6) for b in breaks]}, counts={class_counts}")
    return model


def class_sse(scores: Sequence[float], labels: Sequence[int]) -> float:
    x = _as_array(scores)
    y = np.asarray(labels)
    total = 0.0
    for c in np.unique(y):
        members = x[y == c]
        total += float(np.sum((members - members.mean()) ** 2))
    return total


def assign_cluster(model: ClusterModel, score: float) -> int:
    if np.isnan(score):
        raise ClusterError("Cannot assign a NaN score to a cluster")
    return int(np.searchsorted(np.array(model.breaks), score, side="right"))


def assign_clusters(model: ClusterModel, scores: Sequence[float]) -> List[int]:
    x = _as_array(scores)
    return np.searchsorted(np.array(model.breaks), x, side="right").astype(int).tolist()


def silhouette_details(
    scores: Sequence[float],
    labels: Sequence[int],
    max_points: int = SILHOUETTE_SAMPLE,
    seed: int = 0,
) -> Tuple[float, int]:
    """Mean silhouette with |x - y| distance, and the number of points it was computed on."""
    x = _as_array(scores)
    y = np.asarray(labels)
    if len(x) != len(y):
        raise ClusterError(f"{len(x)} scores but {len(y)} labels")
    if len(x) > max_points:
        rng = np.random.default_rng(seed)
        picked = np.sort(rng.choice(len(x), size=max_points, replace=False))
        x, y = x[picked], y[picked]
        logger.warning(f"Silhouette computed on a seeded subsample of {max_points} points")

    n_labels = len(np.unique(y))
    if n_labels < 2:
        raise ClusterError("Silhouette needs at least 2 nonempty clusters")
    if n_labels == len(x):
        return 0.0, len(x)
    values = silhouette_samples(x.reshape(-1, 1), y, metric="manhattan")
    return float(np.mean(values)), len(x)


def silhouette(scores: Sequence[float], labels: Sequence[int], max_points: int = SILHOUETTE_SAMPLE, seed: int = 0) -> float:
    return silhouette_details(scores, labels, max_points, seed)[0]

"""k-medoids and k-means over unit-normalised chunk embeddings.

k-medoids alternates nearest-medoid assignment with per-cluster medoid
updates under cosine distance (1 - cos), then polishes with single medoid
swaps. k-means runs Lloyd iterations under
squared Euclidean distance. Both start from a seeded farthest-point spread and
record the partition cost after every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import EmptyInput

Method = Literal["kmedoids", "kmeans"]
METHODS = ("kmedoids", "kmeans")
MAX_ITER = 100


@dataclass(frozen=True)
class Partition:
    assignments: dict[int, int]
    k: int
    representative_ids: tuple[int, ...] | None = None
    history: tuple[float, ...] = field(default=(), compare=False)

    def clusters(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.k)]
        for item, c in sorted(self.assignments.items()):
            out[c].append(item)
        return out

    def validate(self, ids: Sequence[int] | None = None) -> list[str]:
        """Return a list of invariant violations (empty when valid)."""
        problems = []
        if ids is not None and sorted(self.assignments) != sorted(ids):
            problems.append("assignments do not cover the id universe exactly once")
        for c in self.assignments.values():
            if not 0 <= c < self.k:
                problems.append(f"cluster index {c} outside [0, {self.k})")
        for i, members in enumerate(self.clusters()):
            if not members:
                problems.append(f"cluster {i} is empty")
        if self.representative_ids is not None:
            if len(self.representative_ids) != self.k:
                problems.append("representative count differs from k")
            for i, rep in enumerate(self.representative_ids):
                if self.assignments.get(rep) != i:
                    problems.append(f"representative {rep} is not a member of cluster {i}")
        return problems

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "assignments": {str(i): c for i, c in sorted(self.assignments.items())},
            "representative_ids": list(self.representative_ids)
            if self.representative_ids is not None else None,
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Partition:
        reps = d.get("representative_ids")
        return cls({int(i): int(c) for i, c in d["assignments"].items()}, int(d["k"]),
                   tuple(reps) if reps is not None else None, tuple(d.get("history", ())))


def _cosine_distances(x: np.ndarray) -> np.ndarray:
    return np.clip(1.0 - x @ x.T, 0.0, 2.0)


def _sq_euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _farthest_point_init(dist: np.ndarray, k: int, seed: int) -> list[int]:
    n = dist.shape[0]
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    nearest = dist[chosen[0]].copy()
    while len(chosen) < k:
        masked = nearest.copy()
        masked[chosen] = -np.inf
        nxt = int(np.argmax(masked))  # argmax returns the lowest index on ties
        chosen.append(nxt)
        nearest = np.minimum(nearest, dist[nxt])
    return chosen


def _best_medoid(members: list[int], dist: np.ndarray) -> int:
    sub = dist[np.ix_(members, members)].sum(axis=1)
    return members[int(np.argmin(sub))]


def _relabel(labels: np.ndarray, k: int, reps: list[int] | None):
    """Renumber clusters by their smallest member so labels are order-independent."""
    firsts = sorted(range(k), key=lambda c: int(np.flatnonzero(labels == c)[0]))
    remap = {old: new for new, old in enumerate(firsts)}
    new_labels = np.array([remap[int(c)] for c in labels])
    new_reps = None
    if reps is not None:
        new_reps = [0] * k
        for old, rep in enumerate(reps):
            new_reps[remap[old]] = rep
    return new_labels, new_reps


def _assign(dist: np.ndarray, medoids: list[int]) -> np.ndarray:
    labels = np.argmin(dist[:, medoids], axis=1)
    # a medoid always belongs to its own cluster; with duplicate points the
    # plain argmin could hand it to an identical earlier medoid
    for c, m in enumerate(medoids):
        labels[m] = c
    return labels


def _medoid_cost(dist: np.ndarray, medoids: list[int]) -> float:
    return float(dist[:, medoids].min(axis=1).sum())


def _kmedoids_run(dist: np.ndarray, k: int, seed: int):
    medoids = _farthest_point_init(dist, k, seed)
    history = []
    for _ in range(MAX_ITER):
        labels = _assign(dist, medoids)
        new_medoids = [_best_medoid(list(np.flatnonzero(labels == c)), dist) for c in range(k)]
        history.append(_medoid_cost(dist, new_medoids))
        if new_medoids == medoids:
            break
        medoids = new_medoids

    # swap polish: alternating updates stall in poor local optima on small inputs
    current = history[-1]
    improved = True
    while improved:
        improved = False
        for c in range(k):
            for h in range(dist.shape[0]):
                if h in medoids:
                    continue
                trial = medoids.copy()
                trial[c] = h
                cost = _medoid_cost(dist, trial)
                if cost < current - 1e-12:
                    medoids, current, improved = trial, cost, True
                    history.append(cost)
    return _assign(dist, medoids), medoids, history


def _kmedoids(x: np.ndarray, k: int, seed: int, n_init: int):
    dist = _cosine_distances(x)
    rng = np.random.default_rng(seed)
    seeds = [seed] + [int(s) for s in rng.integers(0, 2**31, size=n_init - 1)]
    best = None
    for s in seeds:
        run = _kmedoids_run(dist, k, s)
        if best is None or run[2][-1] < best[2][-1]:
            best = run
    return best


def _kmeans(x: np.ndarray, k: int, seed: int):
    dist = _sq_euclidean(x, x)
    centers = x[_farthest_point_init(dist, k, seed)].copy()
    history = []
    labels = None
    for _ in range(MAX_ITER):
        d = _sq_euclidean(x, centers)
        new_labels = np.argmin(d, axis=1)
        for c in range(k):
            if not np.any(new_labels == c):
                # repair: steal the point farthest from its own centroid
                own = d[np.arange(len(x)), new_labels]
                counts = np.bincount(new_labels, minlength=k)
                own[counts[new_labels] <= 1] = -np.inf
                victim = int(np.argmax(own))
                new_labels[victim] = c
                d[victim, c] = 0.0
        centers = np.stack([x[new_labels == c].mean(axis=0) for c in range(k)])
        cost = float(sum(np.sum((x[new_labels == c] - centers[c]) ** 2) for c in range(k)))
        history.append(cost)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return new_labels, None, history


def cluster(vectors: Sequence[np.ndarray], k: int, method: Method = "kmedoids",
            seed: int = 0, ids: Sequence[int] | None = None, n_init: int = 10) -> Partition:
    """Partition ``vectors`` into at most ``k`` non-empty clusters.

    ``ids`` names the items (defaults to their positions); ``k`` is reduced to
    the number of vectors when it exceeds it. k-medoids keeps the cheapest of
    ``n_init`` seeded restarts; its ``history`` is that run's cost trajectory.
    """
    if len(vectors) == 0:
        raise EmptyInput("cannot cluster an empty set of vectors")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if method not in METHODS:
        raise ValueError(f"unknown clustering method {method!r}")
    ids = list(range(len(vectors))) if ids is None else list(ids)
    x = np.stack([np.asarray(v, dtype=np.float64) for v in vectors])
    k = min(k, len(x))

    if method == "kmedoids":
        labels, reps, history = _kmedoids(x, k, seed, n_init)
    else:
        labels, reps, history = _kmeans(x, k, seed)
    labels, reps = _relabel(labels, k, reps)
    return Partition(
        {ids[i]: int(c) for i, c in enumerate(labels)}, k,
        tuple(ids[r] for r in reps) if reps is not None else None,
        tuple(history),
    )


def partition_cost(vectors: Sequence[np.ndarray], partition: Partition,
                   method: Method = "kmedoids", ids: Sequence[int] | None = None) -> float:
    """k-medoids: sum of cosine distances to the medoid (the stored one, else the
    best member); k-means: sum of squared distances to the centroid."""
    ids = list(range(len(vectors))) if ids is None else list(ids)
    index = {item: pos for pos, item in enumerate(ids)}
    x = np.stack([np.asarray(v, dtype=np.float64) for v in vectors])
    dist = _cosine_distances(x) if method == "kmedoids" else None
    total = 0.0
    for c, members in enumerate(partition.clusters()):
        rows = [index[m] for m in members]
        if dist is not None:
            if partition.representative_ids is not None:
                medoid = index[partition.representative_ids[c]]
            else:
                medoid = _best_medoid(rows, dist)
            total += float(dist[rows, medoid].sum())
        else:
            centre = x[rows].mean(axis=0)
            total += float(np.sum((x[rows] - centre) ** 2))
    return total

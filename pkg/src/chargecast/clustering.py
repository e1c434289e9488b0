"""k-means over site feature vectors, with deterministic tie handling.

Lloyd's algorithm with k-means++ seeding, run once per (k, seed). All of the
usually-unspecified corners are pinned down so fits are reproducible:

  * distance ties assign to the lowest centroid index;
  * an empty cluster is reseeded with the point farthest from its assigned
    centroid (ties again by lowest point index);
  * iteration stops when the relative inertia improvement drops below ``tol``
    or after ``max_iters`` rounds;
  * final clusters are renumbered by descending member count so labels are
    stable across runs.

The fitted model keeps the feature standardizer used at fit time, which is
what lets a model assign sites it has never seen: featurize with the stored
standardizer, then take the nearest centroid.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import EmptyClusterError, ValidationError
from .features import LAYOUT_VERSION, FeatureVector, Standardizer, weekly_profile
from .fileio import atomic_write_text, read_json, write_json
from .rng import Rng

Assignment = dict[str, int]


@dataclass(frozen=True)
class ClusterModel:
    """Fitted centroids plus everything needed to assign unseen sites."""

    k: int
    centroids: np.ndarray
    standardizer: Standardizer
    inertia: float
    layout_version: str = LAYOUT_VERSION

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != self.k:
            raise ValidationError(f"centroids must be a (k, dim) array with k={self.k}")
        if self.inertia < 0:
            raise ValidationError("inertia must be >= 0")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])


@dataclass(frozen=True)
class LloydResult:
    """Raw fit output on bare points, before any site-id bookkeeping."""

    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    inertia_history: tuple[float, ...]
    n_iters: int


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k); exact expansion is fine at these sizes and avoids cancellation
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = _sq_dists(points, centroids)
    labels = np.argmin(d2, axis=1)  # argmin takes the lowest index on ties
    return labels, d2[np.arange(len(points)), labels]


def _plus_plus_init(points: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    n = len(points)
    chosen = [rng.below(n)]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(k - 1):
        total = float(d2.sum())
        if total < 1e-12:
            # all remaining mass is on already-chosen duplicates; take the
            # lowest-index point not yet chosen
            taken = set(chosen)
            idx = next(i for i in range(n) if i not in taken)
        else:
            r = rng.uniform() * total
            idx = int(min(np.searchsorted(np.cumsum(d2), r, side="right"), n - 1))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return points[chosen].copy()


def lloyd_kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iters: int = 300,
    tol: float = 1e-6,
) -> LloydResult:
    """One seeded k-means++ / Lloyd fit over bare points.

    Returns canonicalized results: clusters sorted by descending member
    count (ties by pre-sort index). ``inertia_history`` holds the inertia
    after the initial assignment and after each iteration; it is
    non-increasing by construction.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise ValidationError("points must be a nonempty (n, dim) array")
    n = len(points)
    if not (1 <= k <= n):
        raise ValueError(f"k must lie in 1..{n}, got {k}")

    centroids = _plus_plus_init(points, k, Rng(seed))
    labels, d2 = _assign(points, centroids)
    inertia = float(d2.sum())
    history = [inertia]

    iters = 0
    for _ in range(max_iters):
        iters += 1
        new_centroids = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for c in range(k):
            if counts[c] > 0:
                new_centroids[c] = points[labels == c].mean(axis=0)
        steal = d2.copy()
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(steal))  # lowest index on ties
            new_centroids[c] = points[far]
            steal[far] = -1.0

        centroids = new_centroids
        labels, d2 = _assign(points, centroids)
        new_inertia = float(d2.sum())
        history.append(new_inertia)
        improvement = inertia - new_inertia
        inertia = new_inertia
        if inertia == 0.0 or improvement < tol * max(history[-2], 1e-300):
            break

    order = np.argsort(-np.bincount(labels, minlength=k), kind="stable")
    relabel = np.empty(k, dtype=np.int64)
    relabel[order] = np.arange(k)
    return LloydResult(
        centroids=centroids[order].copy(),
        labels=relabel[labels],
        inertia=inertia,
        inertia_history=tuple(history),
        n_iters=iters,
    )


def kmeans_fit(
    features: list[FeatureVector] | tuple[FeatureVector, ...],
    k: int,
    seed: int,
    standardizer: Standardizer,
    max_iters: int = 300,
    tol: float = 1e-6,
) -> tuple[ClusterModel, Assignment]:
    """Fit k clusters over site feature vectors.

    Raises ValueError when k falls outside 1..n and ValidationError when the
    vectors disagree on dimension.
    """
    if not features:
        raise ValidationError("cannot cluster zero feature vectors")
    dims = {fv.combined.size for fv in features}
    if len(dims) != 1:
        raise ValidationError(f"feature vectors disagree on dimension: {sorted(dims)}")
    points = np.stack([fv.combined for fv in features])
    result = lloyd_kmeans(points, k, seed, max_iters=max_iters, tol=tol)
    model = ClusterModel(
        k=k,
        centroids=result.centroids,
        standardizer=standardizer,
        inertia=result.inertia,
    )
    assignment = {fv.site_id: int(label) for fv, label in zip(features, result.labels)}
    return model, assignment


def kmeans_predict(m: ClusterModel, v) -> int:
    """Index of the nearest centroid (Euclidean); ties go to the lowest index."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (m.dim,):
        raise ValidationError(f"expected vector of length {m.dim}, got shape {v.shape}")
    d2 = np.sum((m.centroids - v) ** 2, axis=1)
    return int(np.argmin(d2))


def cluster_barycenter(d: Dataset, a: Assignment, c: int) -> np.ndarray:
    """Mean weekly profile over the sites assigned to cluster ``c``."""
    members = sorted(sid for sid, label in a.items() if label == c)
    if not members:
        raise EmptyClusterError(f"cluster {c} has no member sites")
    return np.mean([weekly_profile(d.sites[sid]) for sid in members], axis=0)


def save_cluster_model(m: ClusterModel, path: str | Path) -> Path:
    return write_json(
        path,
        {
            "k": m.k,
            "centroids": [[float(v) for v in row] for row in m.centroids],
            "standardizer": m.standardizer.to_dict(),
            "inertia": float(m.inertia),
            "layout_version": m.layout_version,
        },
    )


def load_cluster_model(path: str | Path) -> ClusterModel:
    obj = read_json(path)
    return ClusterModel(
        k=int(obj["k"]),
        centroids=np.array(obj["centroids"], dtype=np.float64),
        standardizer=Standardizer.from_dict(obj["standardizer"]),
        inertia=float(obj["inertia"]),
        layout_version=str(obj["layout_version"]),
    )


def save_assignment_csv(a: Assignment, path: str | Path) -> Path:
    lines = ["site_id,cluster"]
    lines += [f"{sid},{a[sid]}" for sid in sorted(a)]
    return atomic_write_text(path, "\n".join(lines) + "\n")

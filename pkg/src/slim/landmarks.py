"""Structural landmarks: Student-t soft assignment, sharpened targets, and
the self-training KL loss, plus the k-means initializer.

The K landmark vectors are free parameters after initialization; the Student-t
kernel makes the assignment differentiable with respect to both embeddings and
landmarks. The sharpened target is always treated as a constant: no gradient
flows through it.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class LandmarkSet:
    u: Tensor           # K x d landmark vectors
    dof: float = 1.0    # Student-t degrees of freedom

    def __post_init__(self):
        if self.dof <= 0:
            raise ValueError("dof must be positive")

    @property
    def count(self) -> int:
        return self.u.value.shape[0]


def assign(h: Tensor, landmarks: LandmarkSet) -> Tensor:
    """Row-stochastic soft assignment of embeddings to landmarks.

    W[j, k] = (1 + |h_j - u_k|^2 / dof)^(-(dof+1)/2), normalized over k.
    Differentiable with respect to both h and the landmark vectors.
    """
    d2 = ad.squared_distance_rows(h, landmarks.u)
    return ad.row_normalize(ad.student_t_kernel(d2, landmarks.dof))


def assign_values(h: np.ndarray, u: np.ndarray, dof: float = 1.0) -> np.ndarray:
    """Tape-free assignment on plain arrays."""
    d2 = np.maximum(
        (h * h).sum(axis=1)[:, None] + (u * u).sum(axis=1)[None, :] - 2.0 * h @ u.T, 0.0
    )
    kernel = (1.0 + d2 / dof) ** (-(dof + 1.0) / 2.0)
    return kernel / kernel.sum(axis=1, keepdims=True)


def target_distribution(w: np.ndarray) -> np.ndarray:
    """Sharpened self-training target: square, normalize by column mass, renorm rows.

    Constant by construction; columns with (near) zero mass are guarded.
    """
    mass = w.sum(axis=0)
    scaled = w * w / np.maximum(mass, 1e-12)
    return scaled / scaled.sum(axis=1, keepdims=True)


def cluster_loss(w: Tensor, target: np.ndarray) -> Tensor:
    """KL(target || w); gradient reaches w only."""
    return ad.kl_div(ad.constant(target), w)


def hard_distortion(h: np.ndarray, u: np.ndarray) -> float:
    """Sum of squared distances to the nearest landmark (the hard objective)."""
    d2 = (h * h).sum(axis=1)[:, None] + (u * u).sum(axis=1)[None, :] - 2.0 * h @ u.T
    return float(np.maximum(d2, 0.0).min(axis=1).sum())


def _kmeans_pp_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(len(points))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i] = points[rng.integers(len(points))]
            continue
        centers[i] = points[rng.choice(len(points), p=d2 / total)]
        d2 = np.minimum(d2, ((points - centers[i]) ** 2).sum(axis=1))
    return centers


def _lloyd(points: np.ndarray, centers: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    pp = (points * points).sum(axis=1)
    for _ in range(max_iter):
        d2 = pp[:, None] + (centers * centers).sum(axis=1)[None, :] - 2.0 * points @ centers.T
        nearest = d2.argmin(axis=1)
        new = centers.copy()
        sums = np.zeros_like(centers)
        np.add.at(sums, nearest, points)
        sizes = np.bincount(nearest, minlength=len(centers))
        occupied = sizes > 0
        new[occupied] = sums[occupied] / sizes[occupied, None]
        shift = np.linalg.norm(new - centers, axis=1).max()
        centers = new
        if shift < tol:
            break
    return centers


def init_landmarks(embeddings: np.ndarray, k: int, seed: int,
                   restarts: int = 4, tol: float = 1e-6, max_iter: int = 100) -> np.ndarray:
    """k-means++ seeding followed by Lloyd iterations; best of ``restarts`` runs.

    Duplicate rows below k distinct values trigger a warning and a small
    jitter so the returned landmarks are usable as distinct parameters.
    """
    points = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2 or len(points) < k:
        raise ValueError(f"need at least {k} embedding rows to seed {k} landmarks")
    rng = np.random.default_rng(seed)
    distinct = np.unique(points, axis=0)
    if len(distinct) < k:
        warnings.warn(
            f"only {len(distinct)} distinct rows for {k} landmarks; duplicate "
            "centroids jittered",
            stacklevel=2,
        )
    best, best_cost = None, np.inf
    for _ in range(max(1, restarts)):
        centers = _lloyd(points, _kmeans_pp_seed(points, k, rng), tol, max_iter)
        cost = hard_distortion(points, centers)
        if cost < best_cost:
            best, best_cost = centers, cost
    if len(np.unique(best, axis=0)) < k:
        best = best + rng.normal(scale=1e-4, size=best.shape)
    return best

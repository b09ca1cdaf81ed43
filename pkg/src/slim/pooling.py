"""Identity-preserving graph pooling.

Instead of collapsing a graph into one vector, the soft assignment W projects
per-node structure onto the K landmarks:

  p       landmark densities, column sums of W           (K,)
  M       mean node-type profile per landmark            (c, K)
  C       landmark interaction mass, W' A W              (K, K)
  C_norm  interaction normalized by densities            (K, K)

All quantities are permutation invariant because node identity enters only
through sums over rows. Plain-array versions live here; the differentiable
feature path is assembled from the same formulas via autodiff ops.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

DENSITY_EPS = 1e-8


@dataclass(frozen=True)
class PooledFeatures:
    p: np.ndarray
    m: np.ndarray
    c: np.ndarray
    c_norm: np.ndarray


def density(w: np.ndarray) -> np.ndarray:
    """Soft node count per landmark; sums to the node count."""
    return w.sum(axis=0)


def landmark_means(x: np.ndarray, w: np.ndarray, p: np.ndarray) -> np.ndarray:
    """c x K matrix whose k-th column is the mean node-type profile of landmark k."""
    return (x.T @ w) / (p + DENSITY_EPS)


def interaction(w: np.ndarray, adjacency: np.ndarray) -> np.ndarray:
    """K x K soft count of edges between landmark masses: W' A W."""
    if w.shape[0] != adjacency.shape[0]:
        raise ValueError("assignment and adjacency disagree on node count")
    return w.T @ adjacency @ w


def normalized_interaction(c: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Density-normalized interaction diag(p)^-1 C diag(p)^-1 (guarded)."""
    s = 1.0 / (p + DENSITY_EPS)
    return c * np.outer(s, s)


def pooled_features(x: np.ndarray, w: np.ndarray, adjacency: np.ndarray) -> PooledFeatures:
    p = density(w)
    c = interaction(w, adjacency)
    return PooledFeatures(
        p=p,
        m=landmark_means(x, w, p),
        c=c,
        c_norm=normalized_interaction(c, p),
    )


def graph_feature(pf: PooledFeatures, include_means: bool = False) -> np.ndarray:
    """Classifier feature vector: row-major flattened C_norm.

    With ``include_means`` the densities and flattened landmark means are
    appended (length K^2 + K + c*K instead of K^2).
    """
    flat = pf.c_norm.reshape(-1)
    if include_means:
        return np.concatenate([flat, pf.p, pf.m.reshape(-1)])
    return flat


def feature_width(k: int, c: int, include_means: bool = False) -> int:
    return k * k + (k + c * k if include_means else 0)


def graph_feature_op(w: Tensor, x: np.ndarray, adjacency: np.ndarray,
                     include_means: bool = False) -> Tensor:
    """Differentiable pooled feature row (1 x width) from the assignment tensor.

    Fused into a single tape node: the K x K intermediates dominate time and
    memory at large K, so the backward works directly on the upstream row
    instead of composing elementwise ops.
    """
    n, k = w.value.shape
    wv = w.value
    p = wv.sum(axis=0)
    s = 1.0 / (p + DENSITY_EPS)
    aw = adjacency @ wv
    c = wv.T @ aw
    c_norm = (c * s) * s[:, None]
    if include_means:
        m0 = x.T @ wv
        value = np.concatenate([c_norm.reshape(-1), p, (m0 * s).reshape(-1)])[None, :]
    else:
        value = c_norm.reshape(1, -1)

    def backward(g):
        row = g[0]
        g_tilde = row[: k * k].reshape(k, k)
        g_c = (g_tilde * s) * s[:, None]
        t = g_tilde * c
        ds = t @ s + t.T @ s
        dp = None
        if include_means:
            g_p = row[k * k : k * k + k]
            g_m = row[k * k + k :].reshape(-1, k)
            ds = ds + (g_m * m0).sum(axis=0)
            dp = g_p.copy()
        dq = -(s * s) * ds
        dp = dq if dp is None else dp + dq
        dw = aw @ (g_c + g_c.T) + dp[None, :]
        if include_means:
            dw = dw + x @ (g_m * s)
        w._accumulate(dw)

    return ad._make(value, (w,), backward)


def _register_feature_op():
    def build(include_means):
        def builder(rng):
            n, k, c = 6, 4, 3
            labels = rng.integers(0, c, n)
            x = np.eye(c)[labels]
            a = (rng.random((n, n)) < 0.4).astype(float)
            a = np.triu(a, 1)
            a = a + a.T
            fn = lambda w: graph_feature_op(w, x, a, include_means)
            return fn, [rng.uniform(0.1, 1.0, (n, k))]

        return builder

    ad.OP_REGISTRY["graph_feature"] = build(False)
    ad.OP_REGISTRY["graph_feature_with_means"] = build(True)


_register_feature_op()

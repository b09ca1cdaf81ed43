"""Dictionary-coherence analysis of landmark sets.

Mutual coherence measures landmark redundancy; the support-recovery bound
turns it into the largest sparsity level that sparse coding can provably
recover. The analytic lower bound ties the squared coherence of
clustering-derived landmarks to the dictionary size K, with dimension
constants built from the unit-ball volume. The empirical sweep estimates the
same trend on synthetic Gaussian mixtures via k-means landmarks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .landmarks import init_landmarks


def mutual_coherence(u: np.ndarray) -> float:
    """Largest absolute normalized correlation between two distinct landmarks."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] < 2:
        raise ValueError("mutual coherence needs at least two landmark vectors")
    norms = np.linalg.norm(u, axis=1)
    zero = np.flatnonzero(norms == 0)
    if len(zero):
        raise ArithmeticError(f"landmark {int(zero[0])} has zero norm")
    gram = np.abs((u / norms[:, None]) @ (u / norms[:, None]).T)
    np.fill_diagonal(gram, 0.0)
    return float(min(gram.max(), 1.0))


def recovery_support_bound(mu: float) -> float:
    """Largest sparsity with guaranteed support recovery: (1 + 1/mu) / 2."""
    if mu < 0 or mu > 1:
        raise ValueError("coherence must lie in [0, 1]")
    if mu == 0:
        return math.inf
    return 0.5 * (1.0 + 1.0 / mu)


def unit_ball_volume(d: int) -> float:
    """Volume of the d-dimensional unit ball, 2 Gamma(1/2)^d / (d Gamma(d/2))."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    try:
        return 2.0 * math.pi ** (d / 2.0) / (d * math.gamma(d / 2.0))
    except OverflowError:
        return math.exp(
            math.log(2.0) + (d / 2.0) * math.log(math.pi) - math.log(d) - math.lgamma(d / 2.0)
        )


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the analytic coherence bound; derived constants as properties."""

    d: int
    k: int
    u_max: float
    c_p: float

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("bound constants require dimension >= 2")
        if self.k < 2:
            raise ValueError("bound requires at least two landmarks")
        if self.u_max <= 0:
            raise ValueError("u_max must be positive")

    @property
    def v_d(self) -> float:
        return unit_ball_volume(self.d)

    @property
    def gamma_d(self) -> float:
        return 1.0 + self.d * math.log(self.d * math.log(self.d))

    @property
    def c_d(self) -> float:
        return 1.5 * (1.0 + math.log(self.d) / self.d) * self.gamma_d * self.v_d

    @property
    def ratio(self) -> float:
        """The combined factor C_d * C_p / u_max^2."""
        return self.c_d * self.c_p / (self.u_max**2)


def bound_from_ratio(d: int, k: int, ratio: float) -> float:
    """Lower bound on squared coherence given the combined constant factor.

    1 - (4 * ratio / K^(1/d)) * (1/floor((K/2)^(1/d)) + 1). May be negative
    (vacuous) for small K; returned as-is. NaN if the floor term vanishes,
    which cannot happen for K >= 2.
    """
    if k < 2:
        raise ValueError("bound requires K >= 2")
    shells = math.floor((k / 2.0) ** (1.0 / d))
    if shells < 1:
        return math.nan
    return 1.0 - (4.0 * ratio / k ** (1.0 / d)) * (1.0 / shells + 1.0)


def theorem_lower_bound(bp: BoundParams) -> float:
    """Analytic lower bound on the squared mutual coherence of K landmarks."""
    return bound_from_ratio(bp.d, bp.k, bp.ratio)


def distortion(h: np.ndarray, u: np.ndarray) -> float:
    """Mean euclidean distance (not squared) to the nearest landmark."""
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    d2 = (h * h).sum(axis=1)[:, None] + (u * u).sum(axis=1)[None, :] - 2.0 * h @ u.T
    return float(np.sqrt(np.maximum(d2, 0.0)).min(axis=1).mean())


# ---------------------------------------------------------------------------
# synthetic sweep


@dataclass(frozen=True)
class GaussianMixture:
    """Isotropic Gaussian mixture used as the synthetic landmark population."""

    means: np.ndarray          # m x d component centers
    scale: float = 0.5         # shared isotropic standard deviation
    points: int = 1024         # points per draw

    @staticmethod
    def default_2d(components: int = 4, spread: float = 3.0, scale: float = 0.5,
                   points: int = 1024) -> "GaussianMixture":
        # components sit on a quarter arc so landmark directions are spread
        # but not antipodal: small dictionaries can be incoherent, crowded
        # ones cannot
        angles = 0.5 * math.pi * (np.arange(components) + 0.5) / components
        means = spread * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return GaussianMixture(means=means, scale=scale, points=points)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        comp = rng.integers(0, len(self.means), self.points)
        return self.means[comp] + rng.normal(scale=self.scale, size=(self.points, self.d))

    def density(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        norm = (2.0 * math.pi * self.scale**2) ** (self.d / 2.0)
        d2 = ((z[:, None, :] - self.means[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-d2 / (2.0 * self.scale**2)).mean(axis=1) / norm

    def estimate_c_p(self, grid_points: int = 200, pad: float = 4.0) -> float:
        """Numerically integrate density^(d/(d+1)) on a grid (d <= 3 only)."""
        if self.d > 3:
            raise ValueError("grid estimation of C_p is limited to d <= 3")
        lo = self.means.min(axis=0) - pad * self.scale - 1.0
        hi = self.means.max(axis=0) + pad * self.scale + 1.0
        axes = [np.linspace(lo[i], hi[i], grid_points) for i in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        cell = np.prod([(ax[1] - ax[0]) for ax in axes])
        integral = float((self.density(pts) ** (self.d / (self.d + 1.0))).sum() * cell)
        return integral ** ((self.d + 1.0) / self.d)


@dataclass(frozen=True)
class SweepCell:
    k: int
    seed: int
    coherence: float | None   # None when K == 1 (undefined)
    distortion: float
    bound: float | None

    def csv_row(self) -> str:
        coh = "" if self.coherence is None else f"{self.coherence:.6f}"
        bound = "" if self.bound is None else f"{self.bound:.6f}"
        return f"{self.k},{self.seed},{coh},{self.distortion:.6f},{bound}"


def empirical_coherence_sweep(generator: GaussianMixture, k_values: list[int],
                              seeds: list[int], kmeans_restarts: int = 2) -> list[SweepCell]:
    """k-means landmarks on fresh mixture draws, one cell per (K, seed)."""
    if max(k_values) > generator.points:
        raise ValueError("generator must produce at least max(K) points per draw")
    c_p = generator.estimate_c_p() if generator.d <= 3 else None
    cells = []
    for k in k_values:
        for seed in seeds:
            rng = np.random.default_rng(seed)
            data = generator.sample(rng)
            u = init_landmarks(data, k, seed, restarts=kmeans_restarts)
            coh = mutual_coherence(u) if k >= 2 else None
            bound = None
            if k >= 2 and c_p is not None:
                bp = BoundParams(d=generator.d, k=k,
                                 u_max=float(np.linalg.norm(u, axis=1).max()),
                                 c_p=c_p)
                bound = theorem_lower_bound(bp)
            cells.append(SweepCell(k=k, seed=seed, coherence=coh,
                                   distortion=distortion(data, u), bound=bound))
    return cells


def sweep_summary(cells: list[SweepCell]):
    """Per-K mean coherence and distortion over seeds; skips undefined cells."""
    ks = sorted(set(c.k for c in cells))
    rows = []
    for k in ks:
        group = [c for c in cells if c.k == k]
        cohs = [c.coherence for c in group if c.coherence is not None]
        rows.append({
            "k": k,
            "mean_coherence": float(np.mean(cohs)) if cohs else None,
            "mean_distortion": float(np.mean([c.distortion for c in group])),
        })
    return rows


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("spearman needs two equal-length sequences of >= 2 values")

    def ranks(v):
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        r[order] = np.arange(1, len(v) + 1, dtype=np.float64)
        for val in np.unique(v):
            mask = v == val
            if mask.sum() > 1:
                r[mask] = r[mask].mean()
        return r

    rx, ry = ranks(x), ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx * rx).sum() * (ry * ry).sum()))
    if denom == 0:
        return 0.0
    return float((rx * ry).sum() / denom)

"""Two-layer substructure encoder and the neighborhood co-occurrence loss.

The encoder maps substructure rows to a d-dimensional latent space,
H = act(act(Z T1 + b1) T2 + b2). The co-occurrence loss is a full softmax
over the nodes of one graph: connected substructures are pushed to have
large inner products relative to everything else in that graph.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

ACTIVATIONS = {"sigmoid": ad.sigmoid, "tanh": ad.tanh}


@dataclass
class EncoderParams:
    t1: Tensor
    b1: Tensor
    t2: Tensor
    b2: Tensor
    activation: str = "sigmoid"

    def tensors(self) -> list[Tensor]:
        return [self.t1, self.b1, self.t2, self.b2]


def scaled_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; fan_in is the first axis."""
    bound = 1.0 / math.sqrt(shape[0])
    return rng.uniform(-bound, bound, shape)


def init_encoder(width_in: int, hidden: int, latent: int,
                 rng: np.random.Generator, activation: str = "sigmoid") -> EncoderParams:
    if activation not in ACTIVATIONS:
        raise ValueError(f"activation must be one of {sorted(ACTIVATIONS)}")
    return EncoderParams(
        t1=Tensor(scaled_uniform(rng, (width_in, hidden)), requires_grad=True),
        b1=Tensor(np.zeros(hidden), requires_grad=True),
        t2=Tensor(scaled_uniform(rng, (hidden, latent)), requires_grad=True),
        b2=Tensor(np.zeros(latent), requires_grad=True),
        activation=activation,
    )


def encode(z: Tensor, params: EncoderParams) -> Tensor:
    """Differentiable encoder forward pass; rows of z map independently."""
    act = ACTIVATIONS[params.activation]
    h1 = act(ad.add(ad.matmul(z, params.t1), params.b1))
    return act(ad.add(ad.matmul(h1, params.t2), params.b2))


def encode_values(z: np.ndarray, params: EncoderParams) -> np.ndarray:
    """Tape-free encoder forward (used for evaluation and target refreshes)."""
    return encode(ad.constant(z), params).value


def cooccurrence_loss(h: Tensor, adjacency: np.ndarray) -> Tensor:
    """Negated co-occurrence log-likelihood of one graph.

    For every directed neighbor pair (i, j), the log-probability of j under a
    softmax over all nodes of the same graph (including i) is accumulated; the
    loss is the negated sum, so it is 0 for graphs without edges and positive
    otherwise.
    """
    if h.value.shape[0] != adjacency.shape[0]:
        raise ValueError("embedding row count must match node count")
    scores = ad.matmul(h, ad.transpose(h))
    logp = ad.log_softmax_rows(scores)
    return ad.mul(ad.sum_all(ad.mul(logp, ad.constant(adjacency))), ad.constant(-1.0))


def cooccurrence_loss_reference(h: np.ndarray, adjacency: np.ndarray) -> float:
    """Brute-force evaluation with explicit loops; the oracle for the op above."""
    n = h.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(n):
            if adjacency[i, j] <= 0:
                continue
            scores = [float(h[i] @ h[jp]) for jp in range(n)]
            m = max(scores)
            log_denom = m + math.log(sum(math.exp(s - m) for s in scores))
            total += float(h[i] @ h[j]) - log_denom
    return -total

"""The full differentiable pipeline and its parameter container.

Per graph: substructure rows -> encoder -> soft landmark assignment ->
pooled interaction features. Per batch: pooled feature rows are stacked and
classified by a one-hidden-layer FC network. The joint loss combines the
classification cross-entropy with the weighted co-occurrence and clustering
terms.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import embedding, landmarks, pooling
from .autodiff import Tensor
from .datasets import DatasetBundle, Graph, one_hot_features
from .substructure import SubstructureConfig, build_substructures

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class GraphData:
    """Per-graph constants, computed once per dataset and configuration."""

    z: np.ndarray          # n x D substructure matrix
    x: np.ndarray          # n x c one-hot node types
    adjacency: np.ndarray  # n x n
    label: int


def prepare_graph(g: Graph, c: int, cfg: SubstructureConfig) -> GraphData:
    x = one_hot_features(g, c)
    z = build_substructures(g, x, cfg).values
    return GraphData(z=z, x=x, adjacency=g.adjacency, label=g.class_label)


def prepare_bundle(bundle: DatasetBundle, cfg: SubstructureConfig) -> list[GraphData]:
    return [prepare_graph(g, bundle.node_label_count, cfg) for g in bundle.graphs]


@dataclass
class ClassifierParams:
    w_hidden: Tensor
    b_hidden: Tensor
    w_out: Tensor
    b_out: Tensor

    def tensors(self) -> list[Tensor]:
        return [self.w_hidden, self.b_hidden, self.w_out, self.b_out]


def init_classifier(width_in: int, hidden: int, classes: int,
                    rng: np.random.Generator) -> ClassifierParams:
    return ClassifierParams(
        w_hidden=Tensor(embedding.scaled_uniform(rng, (width_in, hidden)), requires_grad=True),
        b_hidden=Tensor(np.zeros(hidden), requires_grad=True),
        w_out=Tensor(embedding.scaled_uniform(rng, (hidden, classes)), requires_grad=True),
        b_out=Tensor(np.zeros(classes), requires_grad=True),
    )


@dataclass
class ModelState:
    encoder: embedding.EncoderParams
    landmarks: landmarks.LandmarkSet
    classifier: ClassifierParams
    include_means: bool = False
    # constant offset subtracted from classifier inputs, fitted once on the
    # training features when the landmarks are initialized
    feature_center: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def parameters(self) -> list[Tensor]:
        return (self.encoder.tensors() + [self.landmarks.u] + self.classifier.tensors())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


def classifier_logits(features: Tensor, params: ClassifierParams,
                      center: np.ndarray | None = None) -> Tensor:
    # saturating hidden activation: a relu head can die wholesale during the
    # optimizer cold start on these weak-variance features and never recover.
    # centering removes the large shared feature baseline, whose l1 mass
    # otherwise makes the first adaptive steps saturate every hidden unit
    if center is not None:
        features = ad.sub(features, ad.constant(center))
    hidden = ad.tanh(ad.add(ad.matmul(features, params.w_hidden), params.b_hidden))
    return ad.add(ad.matmul(hidden, params.w_out), params.b_out)


def graph_terms(data: GraphData, state: ModelState):
    """Tape for one graph: (pooled feature row, assignment W, embedding H)."""
    h = embedding.encode(ad.constant(data.z), state.encoder)
    w = landmarks.assign(h, state.landmarks)
    feat = pooling.graph_feature_op(w, data.x, data.adjacency, state.include_means)
    return feat, w, h


@dataclass
class LossBreakdown:
    total: float
    cross_entropy: float
    embed: float
    cluster: float


def joint_loss(batch: list[GraphData], state: ModelState,
               lambda_embed: float, lambda_cluster: float,
               targets_w: list[np.ndarray] | None = None,
               labeled: list[bool] | None = None) -> tuple[Tensor, LossBreakdown]:
    """Mean cross-entropy over labeled graphs plus weighted unsupervised terms.

    The co-occurrence and clustering terms sum over every graph in the batch
    (labeled or not); ``targets_w`` holds the per-graph sharpened targets
    frozen at the latest refresh. Raises NumericError with diagnostics if any
    term goes non-finite.
    """
    if not batch:
        raise ValueError("joint_loss: batch must be non-empty")
    labeled = [True] * len(batch) if labeled is None else labeled
    rows, labels, embed_terms, cluster_terms = [], [], [], []
    for i, data in enumerate(batch):
        h = embedding.encode(ad.constant(data.z), state.encoder)
        w = landmarks.assign(h, state.landmarks)
        if labeled[i]:
            rows.append(pooling.graph_feature_op(w, data.x, data.adjacency,
                                                 state.include_means))
            labels.append(data.label)
        if lambda_embed > 0:
            embed_terms.append(embedding.cooccurrence_loss(h, data.adjacency))
        if lambda_cluster > 0 and targets_w is not None:
            cluster_terms.append(landmarks.cluster_loss(w, targets_w[i]))

    parts = []
    ce_value = 0.0
    if rows:
        logits = classifier_logits(ad.concat_rows(rows), state.classifier,
                                   state.feature_center)
        ce = ad.cross_entropy(logits, np.asarray(labels))
        ce_value = float(ce.value)
        parts.append(ce)
    embed_value = cluster_value = 0.0
    if embed_terms:
        tot = embed_terms[0]
        for t in embed_terms[1:]:
            tot = ad.add(tot, t)
        embed_value = float(tot.value)
        parts.append(ad.mul(tot, ad.constant(lambda_embed)))
    if cluster_terms:
        tot = cluster_terms[0]
        for t in cluster_terms[1:]:
            tot = ad.add(tot, t)
        cluster_value = float(tot.value)
        parts.append(ad.mul(tot, ad.constant(lambda_cluster)))
    if not parts:
        raise ValueError("joint_loss: no labeled graphs and no active unsupervised terms")
    total = parts[0]
    for t in parts[1:]:
        total = ad.add(total, t)
    breakdown = LossBreakdown(
        total=float(total.value),
        cross_entropy=ce_value,
        embed=embed_value,
        cluster=cluster_value,
    )
    if not np.isfinite(breakdown.total):
        raise ad.NumericError(
            f"non-finite joint loss: ce={ce_value} embed={embed_value} "
            f"cluster={cluster_value}"
        )
    return total, breakdown


# ---------------------------------------------------------------------------
# tape-free forward paths (evaluation, target refresh, inspection)


def forward_values(data: GraphData, state: ModelState):
    """(H, W, PooledFeatures) without building a tape."""
    h = embedding.encode_values(data.z, state.encoder)
    w = landmarks.assign_values(h, state.landmarks.u.value, state.landmarks.dof)
    return h, w, pooling.pooled_features(data.x, w, data.adjacency)


def predict_logits(data: GraphData, state: ModelState) -> np.ndarray:
    _, _, pf = forward_values(data, state)
    v = pooling.graph_feature(pf, state.include_means)
    if state.feature_center is not None:
        v = v - state.feature_center
    cp = state.classifier
    hidden = np.tanh(v @ cp.w_hidden.value + cp.b_hidden.value)
    return hidden @ cp.w_out.value + cp.b_out.value


def predict(data: GraphData, state: ModelState) -> int:
    return int(np.argmax(predict_logits(data, state)))


def accuracy(graphs: list[GraphData], state: ModelState) -> float:
    """Fraction of graphs predicted correctly (one batched classifier pass)."""
    if not graphs:
        return float("nan")
    feats = np.stack([
        pooling.graph_feature(forward_values(g, state)[2], state.include_means)
        for g in graphs
    ])
    if state.feature_center is not None:
        feats = feats - state.feature_center
    cp = state.classifier
    hidden = np.tanh(feats @ cp.w_hidden.value + cp.b_hidden.value)
    logits = hidden @ cp.w_out.value + cp.b_out.value
    labels = np.array([g.label for g in graphs])
    return float((logits.argmax(axis=1) == labels).mean())


# ---------------------------------------------------------------------------
# serialization


def save_model(path: str, state: ModelState):
    """Write all parameter matrices plus a JSON meta header to one .npz file."""
    meta = dict(state.meta)
    meta.update(
        format_version=MODEL_FORMAT_VERSION,
        dof=state.landmarks.dof,
        activation=state.encoder.activation,
        include_means=state.include_means,
    )
    center = (np.zeros(0) if state.feature_center is None else state.feature_center)
    np.savez(
        path,
        meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
        feature_center=center,
        t1=state.encoder.t1.value,
        b1=state.encoder.b1.value,
        t2=state.encoder.t2.value,
        b2=state.encoder.b2.value,
        u=state.landmarks.u.value,
        w_hidden=state.classifier.w_hidden.value,
        b_hidden=state.classifier.b_hidden.value,
        w_out=state.classifier.w_out.value,
        b_out=state.classifier.b_out.value,
    )


def load_model(path: str) -> ModelState:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version: {meta.get('format_version')}")
        enc = embedding.EncoderParams(
            t1=Tensor(data["t1"], requires_grad=True),
            b1=Tensor(data["b1"], requires_grad=True),
            t2=Tensor(data["t2"], requires_grad=True),
            b2=Tensor(data["b2"], requires_grad=True),
            activation=meta["activation"],
        )
        lm = landmarks.LandmarkSet(Tensor(data["u"], requires_grad=True), dof=meta["dof"])
        clf = ClassifierParams(
            w_hidden=Tensor(data["w_hidden"], requires_grad=True),
            b_hidden=Tensor(data["b_hidden"], requires_grad=True),
            w_out=Tensor(data["w_out"], requires_grad=True),
            b_out=Tensor(data["b_out"], requires_grad=True),
        )
        center = data["feature_center"]
    return ModelState(
        encoder=enc,
        landmarks=lm,
        classifier=clf,
        include_means=bool(meta["include_means"]),
        feature_center=None if center.size == 0 else center,
        meta=meta,
    )

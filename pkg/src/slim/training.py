"""Joint training of encoder, landmarks and classifier; cross-validation.

Protocol: landmarks are initialized by k-means on the epoch-0 embeddings of
the training graphs; the sharpened clustering targets are refreshed once per
epoch; mini-batches are drawn in a seeded shuffle; the reported epoch of a
cross-validation run is the one whose validation accuracy, averaged over all
folds, is highest.
"""
from __future__ import annotations

import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import model as M
from .autodiff import Tensor
from .datasets import DatasetBundle, FoldPlan
from .embedding import init_encoder
from .landmarks import LandmarkSet, init_landmarks, target_distribution
from .pooling import feature_width, graph_feature
from .substructure import SubstructureConfig, Variant

LEARNING_RATE_GRID = (1e-2, 5e-2, 1e-3, 5e-3, 1e-4)
DIVERGENCE_LIMIT = 1e6
# parameters above this many elements use the chunked in-place update path
CHUNKED_PARAM_ELEMENTS = 1 << 25


class DivergenceError(RuntimeError):
    """Training loss exceeded the divergence limit."""


@dataclass(frozen=True)
class TrainConfig:
    hops: int = 3
    variant: Variant = Variant.NODE_DISTRIBUTION
    layer_decay: float = 0.5
    k: int = 100
    latent: int = 32
    hidden: int | str = "2D"          # "D", "D/2", "2D" resolve against input width
    classifier_hidden: int = 64
    optimizer: str = "adagrad"        # "sgd" or "adagrad"
    learning_rate: float = 1e-2
    epochs: int = 300
    batch_size: int = 32
    lambda_embed: float = 0.01
    lambda_cluster: float = 0.01
    seed: int = 0
    semi_supervised: bool = False
    include_means: bool = False
    activation: str = "tanh"          # "sigmoid" available behind this switch
    kmeans_restarts: int = 4

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.lambda_embed < 0 or self.lambda_cluster < 0:
            raise ValueError("loss weights must be non-negative")
        if self.optimizer not in ("sgd", "adagrad"):
            raise ValueError("optimizer must be 'sgd' or 'adagrad'")
        if self.k < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("k, epochs and batch_size must be positive")

    def substructure(self) -> SubstructureConfig:
        return SubstructureConfig(hops=self.hops, variant=self.variant,
                                  layer_decay=self.layer_decay)

    def resolve_hidden(self, width_in: int) -> int:
        if isinstance(self.hidden, int):
            return self.hidden
        table = {"D": width_in, "D/2": max(1, width_in // 2), "2D": 2 * width_in}
        if self.hidden not in table:
            raise ValueError(f"hidden must be an int or one of {sorted(table)}")
        return table[self.hidden]


# ---------------------------------------------------------------------------
# optimizers


class SGD:
    def __init__(self, params: list[Tensor], lr: float):
        self.params = params
        self.lr = lr

    def step(self):
        for p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            g *= self.lr             # grads are never reused after a step
            np.subtract(p.value, g, out=p.value)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def make_sink(self, p: Tensor):
        lr = self.lr

        def sink(r0, r1, g_block):
            g_block *= lr
            np.subtract(p.value[r0:r1], g_block, out=p.value[r0:r1])

        return sink


class Adagrad:
    """Adagrad with the accumulator initialized at 1e-8."""

    def __init__(self, params: list[Tensor], lr: float):
        self.params = params
        self.lr = lr
        self.accumulators = [np.full_like(p.value, 1e-8) for p in params]

    def step(self):
        for p, acc in zip(self.params, self.accumulators):
            if p.grad is None:
                continue
            acc += p.grad * p.grad
            p.value -= self.lr * p.grad / np.sqrt(acc)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def make_sink(self, p: Tensor):
        acc = np.full_like(p.value, 1e-8)
        lr = self.lr

        def sink(r0, r1, g_block):
            a = acc[r0:r1]
            a += g_block * g_block
            g_block *= lr
            g_block /= np.sqrt(a)
            np.subtract(p.value[r0:r1], g_block, out=p.value[r0:r1])

        return sink


def make_optimizer(name: str, params: list[Tensor], lr: float):
    return SGD(params, lr) if name == "sgd" else Adagrad(params, lr)


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    loss_ce: float
    loss_embed: float
    loss_cluster: float
    val_accuracy: float | None

    def as_dict(self):
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "loss_ce": self.loss_ce,
            "loss_embed": self.loss_embed,
            "loss_cluster": self.loss_cluster,
            "val_accuracy": self.val_accuracy,
        }


def init_state(cfg: TrainConfig, width_in: int, c: int, classes: int,
               rng: np.random.Generator) -> M.ModelState:
    hidden = cfg.resolve_hidden(width_in)
    encoder = init_encoder(width_in, hidden, cfg.latent, rng, cfg.activation)
    lm = LandmarkSet(Tensor(np.zeros((cfg.k, cfg.latent)), requires_grad=True), dof=1.0)
    clf = M.init_classifier(feature_width(cfg.k, c, cfg.include_means),
                            cfg.classifier_hidden, classes, rng)
    return M.ModelState(encoder=encoder, landmarks=lm, classifier=clf,
                        include_means=cfg.include_means)


def refresh_targets(graphs: list[M.GraphData], state: M.ModelState) -> list[np.ndarray]:
    targets = []
    for data in graphs:
        _, w, _ = M.forward_values(data, state)
        targets.append(target_distribution(w))
    return targets


def train(train_graphs: list[M.GraphData], cfg: TrainConfig, classes: int, c: int,
          val_graphs: list[M.GraphData] | None = None,
          unlabeled_graphs: list[M.GraphData] | None = None,
          seed_seq: np.random.SeedSequence | None = None):
    """Train one model; returns (ModelState, list[EpochMetrics]).

    ``unlabeled_graphs`` join the co-occurrence and clustering terms but never
    the classification loss; their labels are not read anywhere.
    """
    if not train_graphs:
        raise ValueError("training split must be non-empty")
    seed_seq = np.random.SeedSequence(cfg.seed) if seed_seq is None else seed_seq
    init_seed, kmeans_seed, shuffle_seed = seed_seq.spawn(3)
    rng = np.random.default_rng(init_seed)
    width_in = train_graphs[0].z.shape[1]
    state = init_state(cfg, width_in, c, classes, rng)

    pool = list(train_graphs) + list(unlabeled_graphs or [])
    labeled_mask = [True] * len(train_graphs) + [False] * len(unlabeled_graphs or [])

    # landmark initialization on epoch-0 embeddings
    stacked = np.vstack([M.forward_values(d, state)[0] for d in pool])
    k = min(cfg.k, len(stacked))
    if k < cfg.k:
        warnings.warn(f"only {len(stacked)} substructure rows; lowering K to {k}",
                      stacklevel=2)
        state.landmarks.u.value = np.zeros((k, cfg.latent))
        state.classifier = M.init_classifier(feature_width(k, c, cfg.include_means),
                                             cfg.classifier_hidden, classes, rng)
    state.landmarks.u.value = init_landmarks(
        stacked, k, int(kmeans_seed.generate_state(1)[0]), restarts=cfg.kmeans_restarts
    )
    center = None
    for d in pool:  # running mean; a stacked copy would not fit at large K
        v = graph_feature(M.forward_values(d, state)[2], cfg.include_means)
        center = v if center is None else center + v
    state.feature_center = center / len(pool)

    opt = make_optimizer(cfg.optimizer, state.parameters(), cfg.learning_rate)
    wh = state.classifier.w_hidden
    if wh.value.size >= CHUNKED_PARAM_ELEMENTS:
        if cfg.optimizer != "sgd":
            raise ValueError(
                "classifier weight too large for materialized optimizer state; "
                "use optimizer='sgd' for this K"
            )
        wh.grad_sink = opt.make_sink(wh)

    shuffle_rng = np.random.default_rng(shuffle_seed)
    history: list[EpochMetrics] = []
    for epoch in range(cfg.epochs):
        targets = refresh_targets(pool, state) if cfg.lambda_cluster > 0 else None
        order = shuffle_rng.permutation(len(pool))
        sums = np.zeros(4)
        batches = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = [pool[i] for i in idx]
            batch_targets = None if targets is None else [targets[i] for i in idx]
            batch_labeled = [labeled_mask[i] for i in idx]
            if not any(batch_labeled) and cfg.lambda_embed == 0 and cfg.lambda_cluster == 0:
                continue
            opt.zero_grad()
            loss, parts = M.joint_loss(batch, state, cfg.lambda_embed,
                                       cfg.lambda_cluster, batch_targets,
                                       batch_labeled)
            if parts.total > DIVERGENCE_LIMIT:
                raise DivergenceError(
                    f"loss {parts.total:.3e} exceeded {DIVERGENCE_LIMIT:.0e} "
                    f"at epoch {epoch}"
                )
            loss.backward()
            opt.step()
            sums += (parts.total, parts.cross_entropy, parts.embed, parts.cluster)
            batches += 1
        div = max(batches, 1)
        history.append(EpochMetrics(
            epoch=epoch,
            train_loss=sums[0] / div,
            loss_ce=sums[1] / div,
            loss_embed=sums[2] / div,
            loss_cluster=sums[3] / div,
            val_accuracy=M.accuracy(val_graphs, state) if val_graphs else None,
        ))
    return state, history


# ---------------------------------------------------------------------------
# cross-validation


@dataclass
class CVResult:
    per_fold: list[float]
    mean: float
    std: float
    selected_epoch: int
    epoch_curve: list[float]

    def as_dict(self):
        return {
            "per_fold": self.per_fold,
            "mean": self.mean,
            "std": self.std,
            "selected_epoch": self.selected_epoch,
            "epoch_curve": self.epoch_curve,
        }


def _run_fold(args):
    graphs, cfg, classes, c, train_idx, val_idx, seed_seq = args
    train_graphs = [graphs[i] for i in train_idx]
    val_graphs = [graphs[i] for i in val_idx]
    unlabeled = val_graphs if cfg.semi_supervised else None
    _, history = train(
        train_graphs, cfg, classes, c,
        val_graphs=val_graphs,
        unlabeled_graphs=unlabeled,
        seed_seq=seed_seq,
    )
    return [m.as_dict() for m in history]


def cross_validate(bundle: DatasetBundle, cfg: TrainConfig, plan: FoldPlan,
                   jobs: int = 1, metrics_path: str | None = None) -> CVResult:
    """Train one model per fold; select the epoch with the best fold-averaged
    validation accuracy and report per-fold accuracies at that epoch."""
    if cfg.epochs < 1:
        raise ValueError("cross-validation needs at least one epoch")
    graphs = M.prepare_bundle(bundle, cfg.substructure())
    master = np.random.SeedSequence(cfg.seed)
    fold_seeds = master.spawn(plan.fold_count)
    tasks = []
    for fold in range(plan.fold_count):
        train_idx, val_idx = plan.split(fold)
        tasks.append((graphs, cfg, bundle.class_count,
                      bundle.node_label_count, train_idx, val_idx,
                      fold_seeds[fold]))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            fold_histories = list(pool.map(_run_fold, tasks))
    else:
        fold_histories = [_run_fold(t) for t in tasks]

    if metrics_path:
        with open(metrics_path, "w", encoding="utf-8") as fh:
            for fold, history in enumerate(fold_histories):
                for m in history:
                    fh.write(json.dumps({"fold": fold, **m}) + "\n")

    acc = np.array([[m["val_accuracy"] for m in history] for history in fold_histories])
    epoch_curve = acc.mean(axis=0)
    selected = int(np.argmax(epoch_curve))
    per_fold = acc[:, selected]
    return CVResult(
        per_fold=[float(a) for a in per_fold],
        mean=float(per_fold.mean()),
        std=float(per_fold.std()),
        selected_epoch=selected,
        epoch_curve=[float(a) for a in epoch_curve],
    )


@dataclass
class SweepRow:
    k: int
    mean_acc: float
    std_acc: float


def sweep_k(bundle: DatasetBundle, cfg: TrainConfig, k_values: list[int],
            plan: FoldPlan, jobs: int = 1) -> list[SweepRow]:
    """Cross-validate once per K (deduplicated, ascending), same seeds."""
    uniq = sorted(set(int(k) for k in k_values))
    if len(uniq) < len(k_values):
        warnings.warn("duplicate K values removed from sweep", stacklevel=2)
    rows = []
    for k in uniq:
        result = cross_validate(bundle, replace(cfg, k=k), plan, jobs=jobs)
        rows.append(SweepRow(k=k, mean_acc=result.mean, std_acc=result.std))
    return rows


def write_sweep_csv(rows: list[SweepRow], path: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("K,mean_acc,std_acc\n")
        for row in rows:
            fh.write(f"{row.k},{row.mean_acc:.6f},{row.std_acc:.6f}\n")

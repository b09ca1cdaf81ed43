"""From substructures to identity-preserving graph features.

Substructure rows are encoded into a latent space, landmarks are fitted by
k-means, and each graph is summarized by how its parts map onto landmarks
(densities p, type profiles M) and how those parts interconnect (interaction
C and its normalized form).
"""
import numpy as np

from slim import model as M
from slim.landmarks import assign_values, init_landmarks, target_distribution
from slim.pooling import graph_feature, pooled_features
from slim.synthetic import make_bundle
from slim.training import TrainConfig, init_state

bundle = make_bundle(n_graphs=40, seed=0)
cfg = TrainConfig(k=8, latent=8, epochs=1)
graphs = M.prepare_bundle(bundle, cfg.substructure())
state = init_state(cfg, graphs[0].z.shape[1], bundle.node_label_count,
                   bundle.class_count, np.random.default_rng(0))

# fit landmarks on the pooled embeddings of every graph
stacked = np.vstack([M.forward_values(g, state)[0] for g in graphs])
state.landmarks.u.value = init_landmarks(stacked, cfg.k, seed=0)
print(f"{stacked.shape[0]} substructure instances -> {cfg.k} landmarks")

data = graphs[0]
h, w, pf = M.forward_values(data, state)
print(f"\ngraph 0: {data.z.shape[0]} nodes, class {data.label}")
print("soft assignment row 0:", np.round(w[0], 3))
print("sharpened target row 0:", np.round(target_distribution(w)[0], 3))
print("\nlandmark densities p (sum = node count):", np.round(pf.p, 2))
print("interaction matrix C (sum = 2|E| =", int(pf.c.sum() + 0.5), "):")
print(np.round(pf.c, 2))
print("normalized interaction:")
print(np.round(pf.c_norm, 3))
print("\nclassifier feature vector length:", graph_feature(pf).shape[0])

"""Build per-node substructure descriptors for a toy molecule.

Each node of a graph contributes one substructure instance: the node-type
counts inside its k-hop BFS ball. The four layouts trade off how much of the
layer structure is kept.
"""
import numpy as np

from slim.datasets import Graph, one_hot_features
from slim.substructure import (
    SubstructureConfig,
    Variant,
    build_substructures,
    exact_layer_adjacency,
    khop_adjacency,
)

# a 6-ring with two pendant atoms, three node types
ring = np.zeros((8, 8))
for i in range(6):
    ring[i, (i + 1) % 6] = ring[(i + 1) % 6, i] = 1
ring[0, 6] = ring[6, 0] = 1
ring[3, 7] = ring[7, 3] = 1
mol = Graph(adjacency=ring, node_labels=np.array([0, 1, 0, 1, 0, 1, 2, 2]), class_label=0)
x = one_hot_features(mol, 3)

print("adjacency:\n", mol.adjacency.astype(int))
print("\n2-hop reachability (self included):\n", khop_adjacency(mol.adjacency, 2).astype(int))
print("\nexactly-2-hops shell:\n", exact_layer_adjacency(mol.adjacency, 2).astype(int))

for variant in Variant:
    cfg = SubstructureConfig(hops=2, variant=variant)
    z = build_substructures(mol, x, cfg)
    print(f"\n{variant.value} (width {z.feature_width}):")
    print(np.round(z.values, 2))

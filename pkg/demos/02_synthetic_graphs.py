"""Generate preferential-attachment graphs at a chosen homophily level.

Run: python3 demos/02_synthetic_graphs.py
"""

import numpy as np

from heterograph import GenConfig, SyntheticFeatures, attach_features, edge_homophily, generate_graph, make_splits
from heterograph.synth import compatibility_from_h

print("target h -> measured h, edge count, max degree")
for h in (0.0, 0.2, 0.5, 0.8, 1.0):
    g = generate_graph(GenConfig(n=2000, num_classes=5, target_h=h, edges_per_node=2, seed=7))
    print(f"  {h:.1f} -> {edge_homophily(g):.3f}   |E|={g.num_edges}   d_max={g.degrees.max()}")

# Edge count is fixed by construction: a ring over one seed node per class,
# then m edges for each later node.
print("\nexpected |E| = m(n - classes) + classes =", 2 * (2000 - 5) + 5)

print("\ncompatibility used at h = 0.3 with 4 classes:")
print(compatibility_from_h(0.3, 4))

# Degrees are heavy-tailed: a few hubs and many nodes at the minimum.
g = generate_graph(GenConfig(n=5000, num_classes=5, target_h=0.5, edges_per_node=2, seed=1))
q = np.quantile(g.degrees, [0.5, 0.9, 0.99])
print(f"\ndegree quantiles (50/90/99%): {q}, max {g.degrees.max()}")

g = attach_features(g, SyntheticFeatures(dim=100, signal_strength=0.2), seed=2)
split = make_splits(g, (0.25, 0.25, 0.5), seed=3)
print(f"features {g.features.shape}, split sizes train/val/test = "
      f"{split.train.size}/{split.val.size}/{split.test.size}")

"""Homophily, class compatibility and exact k-hop neighborhoods on a toy graph.

Run: python3 demos/01_graph_basics.py
"""

import numpy as np

from heterograph import (compatibility_matrix, edge_homophily, exact_khop_adjacency, from_edge_list,
                         merged_khop_adjacency, sym_normalize)

# A 6-cycle whose labels alternate: every edge joins two different classes.
edges = [(i, (i + 1) % 6) for i in range(6)]
g = from_edge_list(edges, 6, labels=[0, 1, 0, 1, 0, 1])
print(f"alternating 6-cycle: {g.num_edges} edges, edge homophily h = {edge_homophily(g):.2f}")
print("class compatibility matrix (row i: where class-i edges land):")
print(compatibility_matrix(g))

# Under heterophily the 1-hop neighbors disagree with the ego, but the
# nodes at distance exactly two share its class.
one, two = exact_khop_adjacency(g, 1), exact_khop_adjacency(g, 2)
print("\nexact 2-hop neighbors of node 0:", sorted(v for u, v in two.pairs() if u == 0))
same = np.mean([g.labels[u] == g.labels[v] for u, v in two.pairs()])
print(f"fraction of 2-hop pairs with matching labels: {same:.2f}")

# The GCN-style operator mixes the ego into its neighborhood (A + I); the
# exact operators keep them apart.
merged = merged_khop_adjacency(g, 1)
print(f"\nnonzeros: exact 1-hop {one.nnz}, merged 1-hop with self-loops {merged.nnz}")
norm = sym_normalize(one).toarray()
print("symmetrically normalized 1-hop row of node 0:", np.round(norm[0], 3))

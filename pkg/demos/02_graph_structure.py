"""
Graph distances and the structure distribution around a head
=============================================================

"""

import numpy as np

from kgcl.data import KnowledgeGraph
from kgcl.graph import (
    alpha_distribution,
    build_structure_index,
    distances_within,
    shortest_path_length,
    two_hop_neighborhoods,
)

# Build a small knowledge graph: a path a-b-c-d-e plus a shortcut a-f-e.
rows = [
    ("a", "r", "b"),
    ("b", "r", "c"),
    ("c", "r", "d"),
    ("d", "r", "e"),
    ("a", "s", "f"),
    ("f", "s", "e"),
]
kg = KnowledgeGraph.from_string_triples(rows, [], [])
idx = build_structure_index(kg)
name = kg.entities.token_of
ident = kg.entities.id_of

# The index treats every fact as an undirected edge and ignores relation
# labels; structure only cares about who is connected to whom.
print("undirected edges:", idx.edge_count())

# Bounded breadth-first search from one entity.
dist = distances_within(idx, ident("a"), cap=3)
print("distances from a (cap 3):",
      {name(v): d for v, d in sorted(dist.items())})

print("shortest a-e path:", shortest_path_length(idx, ident("a"), ident("e"), cap=5))

# The 1-hop and 2-hop rings around a head entity.
n1, n2 = two_hop_neighborhoods(idx, ident("a"))
print("1-hop of a:", sorted(name(v) for v in n1))
print("2-hop of a:", sorted(name(v) for v in n2))

# The structure distribution is uniform over that union; the debiased
# losses draw their likely-false-negative samples from it, because an
# entity close to the head is far more likely to be a hidden true tail.
alpha = alpha_distribution(idx, ident("a"))
print("support:", [name(v) for v in alpha.support],
      "each with probability", round(alpha.probability, 4))

draws = alpha.sample(8, np.random.default_rng(0))
print("eight draws:", [name(v) for v in draws])

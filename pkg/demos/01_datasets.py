"""
Loading triple datasets and generating synthetic ones
======================================================

"""

import os
import tempfile

from kgcl.data import augment_reverse, load_dataset
from kgcl.synthetic import SyntheticKGSpec, generate_synthetic_kg, write_dataset_files

# A dataset is three TSV files of (head, relation, tail) rows. The synthetic
# generator plants a blocky community graph and hides a fraction of its
# facts in the valid/test splits, so they are genuinely missing from train.
spec = SyntheticKGSpec(
    block_count=3,
    entities_per_block=8,
    relation_count=2,
    intra_block_edge_probability=0.5,
    inter_block_edge_probability=0.03,
    missing_fraction=0.3,
    seed=0,
)
dataset = generate_synthetic_kg(spec)
print("generated facts per split:", {s: len(rows) for s, rows in dataset.items()})

out_dir = tempfile.mkdtemp(prefix="kgcl_demo_")
paths = write_dataset_files(dataset, out_dir)
print("wrote", sorted(os.path.basename(p) for p in paths.values()), "to", out_dir)

# Loading assigns integer ids in order of first appearance and indexes the
# known positive tails of every (head, relation) pair for filtered ranking.
kg = load_dataset(paths["train"], paths["valid"], paths["test"])
print("entities:", kg.num_entities(), "relations:", kg.num_relations())
print("train/valid/test:", len(kg.train), len(kg.valid), len(kg.test))

first = kg.train[0]
h_name = kg.entities.token_of(first.head)
r_name = kg.relations.token_of(first.relation)
t_name = kg.entities.token_of(first.tail)
print("first train triple:", (h_name, r_name, t_name), "->", first)

tails = kg.known_positive_tails[(first.head, first.relation)]
print("all known tails of that (head, relation):", sorted(tails))

# Reverse augmentation doubles every split with (tail, twin relation, head)
# rows, the standard trick that lets one tail-ranking model answer head
# queries too.
aug = augment_reverse(kg)
print("after augmentation:", len(aug.train), "train triples,",
      aug.num_relations(), "relations")

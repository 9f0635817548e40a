"""
Sweeping tau: how much debiasing helps
=======================================

"""

import os
import tempfile

from kgcl.synthetic import SyntheticKGSpec, generate_knowledge_graph
from kgcl.training import TrainConfig, sweep_tau, train, write_sweep_csv

spec = SyntheticKGSpec(
    block_count=4,
    entities_per_block=12,
    relation_count=2,
    intra_block_edge_probability=0.6,
    inter_block_edge_probability=0.02,
    missing_fraction=0.3,
    seed=0,
)
kg = generate_knowledge_graph(spec)

shared = dict(aggregator="sum", dim=16, batch_size=16, epochs=40,
              learning_rate=0.01, weight_decay=0.0, m_structure=8, seed=0)

# Baseline: hard negatives with the self-normalized negative mass. That is
# exactly what the debiased loss reduces to at tau = 0, so the sweep's
# first row must reproduce it.
baseline = train(TrainConfig(loss_mode="hard", self_normalized=True, **shared), kg)
print("hard baseline valid MRR: %.4f" % baseline.final_valid.mrr)

# One training run per tau; each subdirectory keeps its own checkpoints.
out_dir = tempfile.mkdtemp(prefix="kgcl_demo_sweep_")
cfg = TrainConfig(loss_mode="hasa", out_dir=out_dir, **shared)
rows = sweep_tau(cfg, [0.0, 0.1, 0.2, 0.3], kg)

print()
print("  tau    valid MRR   hits@10")
for row in rows:
    marker = "  (= baseline)" if row["mrr"] == baseline.final_valid.mrr else ""
    print("  %-5g  %.4f      %.4f%s" % (row["tau"], row["mrr"], row["hit10"], marker))

csv_path = os.path.join(out_dir, "tau_sweep.csv")
write_sweep_csv(rows, csv_path)
print()
print("table written to", csv_path)

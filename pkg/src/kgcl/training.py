"""Training loop: sparse Adam with decoupled weight decay, deterministic
batch and sampling streams, JSON-lines logging, and checkpointing.

Reproducibility contract: a (config, seed) pair pins the initial model, the
batch order of every epoch, and every random draw, so two runs produce
byte-identical checkpoints and logs. Log records therefore carry no
timestamps."""

import csv
import json
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from .data import KnowledgeGraph, make_batches
from .evaluation import MetricsReport, default_candidate_limit, evaluate
from .graph import StructureIndex, build_structure_index
from .losses import LossConfig, hard_infonce, hasa_loss, hasa_plus_loss, simple_infonce
from .model import EmbeddingModel, GradientTape, init_model, save_checkpoint
from .sampling import assemble_training_negatives

LOSS_MODES = ("simple", "hard", "hasa", "hasa_plus")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# stream tags keep the per-purpose random streams disjoint
_STREAM_BATCHES = 11
_STREAM_STRUCTURE = 22


class TrainingDiverged(RuntimeError):
    """Raised when a step produces a non-finite loss."""


@dataclass
class TrainConfig:
    loss_mode: str = "simple"
    aggregator: str = "gru"
    dim: int = 100
    batch_size: int = 256
    epochs: int = 1
    learning_rate: float = 2e-5
    weight_decay: float = 1e-4
    tau: float = 2e-5
    m_structure: int = 8
    debias_variant: str = "eq7"
    floor_epsilon: float = 1e-6
    self_normalized: bool = False
    hard_k: int = 3
    seed: int = 0
    init_scale: float = 0.05
    eval_every: int = 0
    eval_candidates: int = 0
    workers: int = 1
    train_path: str = ""
    valid_path: str = ""
    test_path: str = ""
    out_dir: str = ""

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        # delegate range checks for the loss knobs
        self.loss_config()

    def loss_config(self) -> LossConfig:
        if self.loss_mode == "hard" and self.self_normalized:
            # the self-normalized estimator at tau 0 with no structure term
            # is the hard loss with the ratio-form negative mass
            return LossConfig(
                tau=0.0,
                m_structure=0,
                floor_epsilon=self.floor_epsilon,
                debias_variant="eq7",
            )
        return LossConfig(
            tau=self.tau,
            m_structure=self.m_structure,
            floor_epsilon=self.floor_epsilon,
            debias_variant=self.debias_variant,
        )


@dataclass
class TrainResult:
    model: EmbeddingModel
    log: list[dict]
    best_valid_mrr: float | None
    final_valid: MetricsReport | None


def _derived_seed(*keys: int) -> list[int]:
    return [int(k) for k in keys]


class AdamState:
    """Adam moments stored sparsely per touched table row, with one global
    step counter for bias correction. Weight decay is decoupled from the
    gradient and from the learning rate: every touched row is shrunk by
    (1 - weight_decay) before the Adam step, so a zero learning rate leaves
    pure shrinkage."""

    def __init__(self, model: EmbeddingModel):
        self.step = 0
        self.entity_m: dict[int, np.ndarray] = {}
        self.entity_v: dict[int, np.ndarray] = {}
        self.relation_m: dict[int, np.ndarray] = {}
        self.relation_v: dict[int, np.ndarray] = {}
        self.agg_m = {name: np.zeros_like(arr) for name, arr in model.aggregator.items()}
        self.agg_v = {name: np.zeros_like(arr) for name, arr in model.aggregator.items()}

    def _update_table(self, table, m_store, v_store, ids, grads, lr, decay, bc1, bc2):
        for pos in range(ids.size):
            row = int(ids[pos])
            g = grads[pos]
            m = m_store.get(row)
            if m is None:
                m = np.zeros_like(g)
                v = np.zeros_like(g)
            else:
                v = v_store[row]
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
            m_store[row] = m
            v_store[row] = v
            if decay:
                table[row] *= 1.0 - decay
            table[row] -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPSILON)

    def apply(self, model: EmbeddingModel, tape: GradientTape, lr: float, decay: float) -> None:
        self.step += 1
        bc1 = 1.0 - ADAM_BETA1**self.step
        bc2 = 1.0 - ADAM_BETA2**self.step
        ent_ids, ent_grads = tape.entity_rows()
        self._update_table(
            model.entity_table, self.entity_m, self.entity_v, ent_ids, ent_grads, lr, decay, bc1, bc2
        )
        rel_ids, rel_grads = tape.relation_rows()
        self._update_table(
            model.relation_table,
            self.relation_m,
            self.relation_v,
            rel_ids,
            rel_grads,
            lr,
            decay,
            bc1,
            bc2,
        )
        for name, g in tape.aggregator.items():
            m = self.agg_m[name]
            v = self.agg_v[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            param = model.aggregator[name]
            if decay:
                param *= 1.0 - decay
            param -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPSILON)


def _loss_step(cfg: TrainConfig, batch, negatives, model, tape):
    if cfg.loss_mode == "simple":
        return simple_infonce(batch, negatives, model, tape)
    if cfg.loss_mode == "hard":
        if cfg.self_normalized:
            return hasa_loss(batch, negatives, model, cfg.loss_config(), tape)
        return hard_infonce(batch, negatives, model, tape)
    if cfg.loss_mode == "hasa":
        return hasa_loss(batch, negatives, model, cfg.loss_config(), tape)
    return hasa_plus_loss(batch, negatives, model, cfg.loss_config(), tape)


def _dump_diverged_batch(cfg: TrainConfig, epoch, step, batch, value) -> None:
    if not cfg.out_dir:
        return
    payload = {
        "epoch": epoch,
        "step": step,
        "loss": repr(value.loss),
        "triples": [list(t) for t in batch.triples],
    }
    path = os.path.join(cfg.out_dir, "diverged_batch.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write("\n")


def train(
    cfg: TrainConfig, kg: KnowledgeGraph, idx: StructureIndex | None = None
) -> TrainResult:
    """Run the configured training loop over kg.train.

    The structure index is only consulted by the debiased modes and is built
    from the train split on demand when not supplied. Checkpoints
    (checkpoint_final.kge, checkpoint_best.kge) and the JSON-lines log
    (train_log.jsonl) are written to cfg.out_dir when it is set; best means
    highest validation MRR seen at any evaluation point."""
    needs_structure = cfg.loss_mode in ("hasa", "hasa_plus")
    if needs_structure and idx is None:
        idx = build_structure_index(kg)
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
    model = init_model(
        kg.num_entities(),
        kg.num_relations(),
        cfg.dim,
        kind=cfg.aggregator,
        seed=cfg.seed,
        init_scale=cfg.init_scale,
    )
    optimizer = AdamState(model)
    log: list[dict] = []
    best_mrr: float | None = None
    best_model: EmbeddingModel | None = None
    candidate_limit = default_candidate_limit(kg.num_entities(), cfg.eval_candidates)

    def run_validation(step: int) -> MetricsReport | None:
        nonlocal best_mrr, best_model
        if not kg.valid:
            return None
        report = evaluate(
            model,
            kg,
            split="valid",
            filtered=True,
            candidate_limit=candidate_limit,
            seed=cfg.seed,
            workers=cfg.workers,
        )
        record = {"event": "validation", "step": step}
        record.update(report.to_dict())
        log.append(record)
        if best_mrr is None or report.mrr > best_mrr:
            best_mrr = report.mrr
            best_model = model.copy()
        return report

    step = 0
    m_structure = cfg.m_structure if needs_structure else 0
    sample_mode = cfg.loss_mode
    for epoch in range(cfg.epochs):
        batch_seed = np.random.SeedSequence(
            _derived_seed(cfg.seed, _STREAM_BATCHES, epoch)
        ).generate_state(1)[0]
        batches = make_batches(kg, cfg.batch_size, int(batch_seed))
        for batch in batches:
            step += 1
            structure_seed = np.random.SeedSequence(
                _derived_seed(cfg.seed, _STREAM_STRUCTURE, step)
            ).generate_state(1)[0]
            negatives = assemble_training_negatives(
                batch,
                model,
                kg,
                idx,
                m_structure,
                int(structure_seed),
                sample_mode,
                hard_k=cfg.hard_k,
            )
            tape = GradientTape(model)
            value = _loss_step(cfg, batch, negatives, model, tape)
            if not np.isfinite(value.loss):
                _dump_diverged_batch(cfg, epoch, step, batch, value)
                raise TrainingDiverged(
                    f"non-finite loss {value.loss!r} at epoch {epoch} step {step}"
                )
            optimizer.apply(model, tape, cfg.learning_rate, cfg.weight_decay)
            log.append(
                {
                    "event": "step",
                    "epoch": epoch,
                    "step": step,
                    "loss_mean": value.mean,
                    "pos": value.pos,
                    "neg": value.neg,
                    "false_neg": value.false_neg,
                    "neg_hasa": value.neg_hasa,
                    "clamp_hits": value.clamp_hits,
                    "k_mean": negatives.mean_negative_count(),
                }
            )
            if cfg.eval_every and step % cfg.eval_every == 0:
                run_validation(step)
    final_valid = run_validation(step)
    if best_model is None:
        best_model = model
    if cfg.out_dir:
        save_checkpoint(model, os.path.join(cfg.out_dir, "checkpoint_final.kge"))
        save_checkpoint(best_model, os.path.join(cfg.out_dir, "checkpoint_best.kge"))
        write_log(log, os.path.join(cfg.out_dir, "train_log.jsonl"))
    return TrainResult(model=model, log=log, best_valid_mrr=best_mrr, final_valid=final_valid)


def write_log(log: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in log:
            handle.write(json.dumps(record, sort_keys=True))
            handle.write("\n")


def sweep_tau(
    cfg: TrainConfig,
    tau_values: list[float],
    kg: KnowledgeGraph,
    idx: StructureIndex | None = None,
) -> list[dict]:
    """Train one model per tau, sharing the seed and every other knob, and
    report final validation metrics per value. Rows come back in the input
    tau order."""
    if cfg.loss_mode not in ("hasa", "hasa_plus"):
        raise ValueError("the tau sweep applies to the debiased loss modes")
    if idx is None:
        idx = build_structure_index(kg)
    rows = []
    for tau in tau_values:
        sub_dir = os.path.join(cfg.out_dir, f"tau_{tau:g}") if cfg.out_dir else ""
        run_cfg = replace(cfg, tau=tau, out_dir=sub_dir)
        result = train(run_cfg, kg, idx)
        row = {"tau": tau}
        if result.final_valid is not None:
            row.update(result.final_valid.to_dict())
        rows.append(row)
    return rows


def write_sweep_csv(rows: list[dict], path: str) -> None:
    fields = ["tau", "mr", "mrr", "hit1", "hit3", "hit10", "triple_count"]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fields})


def config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)

"""Contrastive losses over (head, relation, tail) triples.

All four losses share the same positive term exp(e_hr . e_t) and differ in
how the negative mass in the denominator is built:

  simple_infonce   negative mass is the sum of exponentiated scores of the
                   in-batch negatives
  hard_infonce     identical form; the negative ids are expected to come
                   from the model-ranked hard sampler
  hasa_loss        debiased negative mass: an estimate of the full negative
                   expectation minus a tau-weighted estimate of the
                   likely-false-negative expectation taken over structure
                   samples from the head's 1-/2-hop ring, scaled back to K
                   negatives and clamped to a positive floor
  hasa_plus_loss   hasa_loss plus a reversed term that pushes the tail away
                   from the other (head, relation) queries of the batch

Losses return the batch sum plus diagnostics, and accumulate exact analytic
gradients into a GradientTape when one is passed. Every formula here is
paired with an independent scalar oracle in the test suite, and all
gradients are verified against central finite differences.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import TripleBatch
from .model import EmbeddingModel, GradientTape, aggregate_batch, backward
from .sampling import NegativeSampleBatch

DEBIAS_VARIANTS = ("eq7", "alg1")


def _exp(x: float) -> float:
    """exp that saturates to inf instead of raising, so a diverging run
    surfaces as a non-finite loss the training loop can report."""
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class LossConfig:
    """Knobs of the debiased losses.

    tau is the prior probability that a sampled negative is actually a true
    fact; m_structure is how many structure samples estimate the
    false-negative term; floor_epsilon bounds the debiased negative mass
    away from zero (the clamp is K * floor_epsilon).

    The eq7 variant uses self-normalized estimates sum(exp(2s))/sum(exp(s))
    for both terms and divides their difference by (1 - tau); the alg1
    variant uses plain averages of exp(s) and rescales only the full
    negative term by 1/(1 - tau).
    """

    tau: float = 0.0
    m_structure: int = 0
    floor_epsilon: float = 1e-6
    debias_variant: str = "eq7"

    def __post_init__(self):
        if not 0.0 <= self.tau < 1.0:
            raise ValueError(f"tau must lie in [0, 1), got {self.tau}")
        if self.m_structure < 0:
            raise ValueError(f"m_structure must be >= 0, got {self.m_structure}")
        if self.floor_epsilon <= 0.0:
            raise ValueError(f"floor_epsilon must be > 0, got {self.floor_epsilon}")
        if self.debias_variant not in DEBIAS_VARIANTS:
            raise ValueError(
                f"debias_variant must be one of {DEBIAS_VARIANTS}, got {self.debias_variant!r}"
            )


@dataclass
class LossValue:
    """Batch loss plus the mean per-triple diagnostics of its pieces: the
    exponentiated positive score, the negative mass, the false-negative
    estimate, the debiased (clamped) negative mass, and how many triples hit
    the clamp."""

    loss: float
    triple_count: int
    pos: float
    neg: float
    false_neg: float
    neg_hasa: float
    clamp_hits: int

    @property
    def mean(self) -> float:
        return self.loss / self.triple_count if self.triple_count else 0.0


def self_normalized_exp_estimate(scores: np.ndarray) -> float:
    """sum(exp(2s)) / sum(exp(s)), evaluated stably.

    For scores of samples drawn from a proposal distribution this is the
    self-normalized importance estimate of E[exp(s)] under the proposal
    tilted by exp(s); it is exact (equals the tilted expectation) when the
    samples enumerate the support once each.
    """
    value, _ = _self_normalized_with_grad(np.asarray(scores, dtype=np.float64))
    return value


def mean_exp_estimate(scores: np.ndarray) -> float:
    """Plain Monte Carlo average of exp(s), evaluated stably."""
    value, _ = _mean_exp_with_grad(np.asarray(scores, dtype=np.float64))
    return value


def _self_normalized_with_grad(scores: np.ndarray) -> tuple[float, np.ndarray]:
    c = float(scores.max())
    w = np.exp(scores - c)
    s1 = float(w.sum())
    s2 = float((w * w).sum())
    value = _exp(c) * s2 / s1
    # d value / d s_j = exp(s_j) (2 exp(s_j) - value) / sum(exp(s))
    grad = w * (2.0 * _exp(c) * w - value) / s1
    return value, grad


def _mean_exp_with_grad(scores: np.ndarray) -> tuple[float, np.ndarray]:
    c = float(scores.max())
    w = np.exp(scores - c)
    value = _exp(c) * float(w.mean())
    grad = _exp(c) * w / scores.size
    return value, grad


def _debias_terms(neg_scores: np.ndarray, structure_scores: np.ndarray, cfg: LossConfig):
    """Assemble the debiased negative mass and everything its gradient
    needs. Returns (value, clamped, neg, false_neg, d_neg, d_false,
    coef_neg, coef_false)."""
    estimator = (
        _self_normalized_with_grad if cfg.debias_variant == "eq7" else _mean_exp_with_grad
    )
    neg, d_neg = estimator(neg_scores)
    if structure_scores.size:
        false_neg, d_false = estimator(structure_scores)
    else:
        false_neg, d_false = 0.0, None
    k = neg_scores.size
    tau = cfg.tau
    if cfg.debias_variant == "eq7":
        raw = k * (neg - tau * false_neg) / (1.0 - tau)
        coef_neg = k / (1.0 - tau)
        coef_false = -k * tau / (1.0 - tau)
    else:
        raw = k * (neg / (1.0 - tau) - tau * false_neg)
        coef_neg = k / (1.0 - tau)
        coef_false = -k * tau
    floor = k * cfg.floor_epsilon
    clamped = raw < floor
    value = floor if clamped else raw
    return value, clamped, neg, false_neg, d_neg, d_false, coef_neg, coef_false


def debiased_negative_estimate(
    neg_scores: np.ndarray, structure_scores: np.ndarray, cfg: LossConfig
) -> float:
    """The clamped debiased negative mass for one triple, given the scores
    of its K negatives and of its structure samples. An empty structure
    array drops the correction term, leaving the plain estimate."""
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    structure_scores = np.asarray(structure_scores, dtype=np.float64)
    if neg_scores.size == 0:
        raise ValueError("need at least one negative score")
    value, *_ = _debias_terms(neg_scores, structure_scores, cfg)
    return value


def _batch_arrays(batch: TripleBatch):
    return batch.heads(), batch.relations(), batch.tails()


def _check_sizes(batch: TripleBatch, negatives: NegativeSampleBatch, need_structure: bool):
    if len(negatives.hard_and_batch_negatives) != len(batch):
        raise ValueError("negative sample batch does not match the triple batch size")
    if need_structure and len(negatives.structure_samples) != len(batch):
        raise ValueError("structure samples missing for some triples")


def _infonce(
    batch: TripleBatch,
    negatives: NegativeSampleBatch,
    model: EmbeddingModel,
    tape: GradientTape | None,
) -> LossValue:
    _check_sizes(batch, negatives, need_structure=False)
    heads, rels, _ = _batch_arrays(batch)
    queries, cache = aggregate_batch(model, heads, rels)
    table = model.entity_table
    d_queries = np.zeros_like(queries) if tape is not None else None
    total = 0.0
    pos_acc = 0.0
    neg_acc = 0.0
    for i, triple in enumerate(batch.triples):
        q = queries[i]
        e_t = table[triple.tail]
        s_pos = float(q @ e_t)
        pos_acc += _exp(s_pos)
        neg_ids = negatives.hard_and_batch_negatives[i]
        if neg_ids.size == 0:
            continue
        neg_emb = table[neg_ids]
        s_neg = neg_emb @ q
        m = max(s_pos, float(s_neg.max()))
        w_pos = math.exp(s_pos - m)
        w_neg = np.exp(s_neg - m)
        z = w_pos + float(w_neg.sum())
        total += (m + math.log(z)) - s_pos
        neg_acc += float(np.exp(s_neg).sum())
        if tape is not None:
            p_pos = w_pos / z
            p_neg = w_neg / z
            tape.add_entity(np.array([triple.tail]), ((p_pos - 1.0) * q)[None, :])
            tape.add_entity(neg_ids, p_neg[:, None] * q[None, :])
            d_queries[i] = (p_pos - 1.0) * e_t + p_neg @ neg_emb
    if tape is not None:
        backward(model, cache, d_queries, tape)
    n = len(batch)
    return LossValue(
        loss=total,
        triple_count=n,
        pos=pos_acc / n,
        neg=neg_acc / n,
        false_neg=0.0,
        neg_hasa=neg_acc / n,
        clamp_hits=0,
    )


def simple_infonce(
    batch: TripleBatch,
    negatives: NegativeSampleBatch,
    model: EmbeddingModel,
    tape: GradientTape | None = None,
) -> LossValue:
    """Contrastive loss -log(exp(s+) / (exp(s+) + sum_j exp(s_j))) summed
    over the batch, with in-batch negatives. A triple with no negatives
    contributes zero loss and no gradient."""
    return _infonce(batch, negatives, model, tape)


def hard_infonce(
    batch: TripleBatch,
    negatives: NegativeSampleBatch,
    model: EmbeddingModel,
    tape: GradientTape | None = None,
) -> LossValue:
    """Same functional form as simple_infonce; the difference is only where
    the negatives came from, so with identical negative ids the two losses
    agree exactly."""
    return _infonce(batch, negatives, model, tape)


def _hasa(
    batch: TripleBatch,
    negatives: NegativeSampleBatch,
    model: EmbeddingModel,
    cfg: LossConfig,
    tape: GradientTape | None,
    bidirectional: bool,
) -> LossValue:
    _check_sizes(batch, negatives, need_structure=True)
    heads, rels, _ = _batch_arrays(batch)
    queries, cache = aggregate_batch(model, heads, rels)
    table = model.entity_table
    d_queries = np.zeros_like(queries) if tape is not None else None
    total = 0.0
    pos_acc = 0.0
    neg_acc = 0.0
    false_acc = 0.0
    hasa_acc = 0.0
    clamp_hits = 0
    for i, triple in enumerate(batch.triples):
        q = queries[i]
        e_t = table[triple.tail]
        s_pos = float(q @ e_t)
        pos_acc += _exp(s_pos)
        d_tail = np.zeros(model.dim) if tape is not None else None
        touched = False
        neg_ids = negatives.hard_and_batch_negatives[i]
        if neg_ids.size:
            neg_emb = table[neg_ids]
            sigma = neg_emb @ q
            struct_ids = negatives.structure_samples[i]
            if struct_ids.size:
                struct_emb = table[struct_ids]
                rho = struct_emb @ q
            else:
                struct_emb = None
                rho = np.zeros(0)
            value, clamped, neg_v, false_v, d_neg, d_false, c_neg, c_false = _debias_terms(
                sigma, rho, cfg
            )
            neg_acc += neg_v
            false_acc += false_v
            hasa_acc += value
            clamp_hits += int(clamped)
            log_mass = math.log(value)
            m = max(s_pos, log_mass)
            z = math.exp(s_pos - m) + math.exp(log_mass - m)
            lse = m + math.log(z)
            total += lse - s_pos
            if tape is not None:
                touched = True
                p_pos = math.exp(s_pos - lse)
                d_tail += (p_pos - 1.0) * q
                d_queries[i] += (p_pos - 1.0) * e_t
                if not clamped:
                    # d loss / d mass = (1 - p_pos) / mass, always finite
                    # because the mass is floored away from zero
                    d_mass = (1.0 - p_pos) / value
                    d_sigma = (d_mass * c_neg) * d_neg
                    tape.add_entity(neg_ids, d_sigma[:, None] * q[None, :])
                    d_queries[i] += d_sigma @ neg_emb
                    if rho.size and c_false != 0.0:
                        d_rho = (d_mass * c_false) * d_false
                        tape.add_entity(struct_ids, d_rho[:, None] * q[None, :])
                        d_queries[i] += d_rho @ struct_emb
        if bidirectional:
            ctx = negatives.negative_contexts[i]
            if ctx.size:
                ctx_queries = queries[ctx]
                ctx_scores = ctx_queries @ e_t
                m2 = max(s_pos, float(ctx_scores.max()))
                w_pos = math.exp(s_pos - m2)
                w_ctx = np.exp(ctx_scores - m2)
                z2 = w_pos + float(w_ctx.sum())
                total += (m2 + math.log(z2)) - s_pos
                if tape is not None:
                    touched = True
                    p_pos2 = w_pos / z2
                    p_ctx = w_ctx / z2
                    d_tail += (p_pos2 - 1.0) * q + p_ctx @ ctx_queries
                    d_queries[i] += (p_pos2 - 1.0) * e_t
                    np.add.at(d_queries, ctx, p_ctx[:, None] * e_t[None, :])
        if tape is not None and touched:
            tape.add_entity(np.array([triple.tail]), d_tail[None, :])
    if tape is not None:
        backward(model, cache, d_queries, tape)
    n = len(batch)
    return LossValue(
        loss=total,
        triple_count=n,
        pos=pos_acc / n,
        neg=neg_acc / n,
        false_neg=false_acc / n,
        neg_hasa=hasa_acc / n,
        clamp_hits=clamp_hits,
    )


def hasa_loss(
    batch: TripleBatch,
    negatives: NegativeSampleBatch,
    model: EmbeddingModel,
    cfg: LossConfig,
    tape: GradientTape | None = None,
) -> LossValue:
    """Debiased contrastive loss log(exp(s+) + NegMass) - s+ per triple,
    where NegMass subtracts a tau-weighted structure-sample estimate of the
    false-negative contribution from the plain negative mass. Triples whose
    head has no 1-/2-hop ring fall back to an uncorrected negative mass."""
    return _hasa(batch, negatives, model, cfg, tape, bidirectional=False)


def hasa_plus_loss(
    batch: TripleBatch,
    negatives: NegativeSampleBatch,
    model: EmbeddingModel,
    cfg: LossConfig,
    tape: GradientTape | None = None,
) -> LossValue:
    """hasa_loss plus, per triple, -log(exp(s+) / (exp(s+) +
    sum_j exp(e_t . q_j))) over the other (head, relation) queries q_j of
    the batch, so the tail embedding is also contrasted against competing
    contexts."""
    return _hasa(batch, negatives, model, cfg, tape, bidirectional=True)

"""Link-prediction evaluation: tail ranking with tie-averaged ranks, the
filtered protocol, and aggregate metrics."""

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import KnowledgeGraph
from .model import EmbeddingModel, aggregate, aggregate_batch

FULL_CANDIDATE_THRESHOLD = 20000
SUBSAMPLE_CANDIDATES = 10000


@dataclass(frozen=True)
class RankingResult:
    rank: int
    candidate_count: int


@dataclass
class MetricsReport:
    mr: float
    mrr: float
    hit1: float
    hit3: float
    hit10: float
    triple_count: int
    ranks: list[int] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "mr": self.mr,
            "mrr": self.mrr,
            "hit1": self.hit1,
            "hit3": self.hit3,
            "hit10": self.hit10,
            "triple_count": self.triple_count,
        }

    def write_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, sort_keys=True, indent=2)
            handle.write("\n")

    def write_ranks_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["triple_index", "rank"])
            for i, rank in enumerate(self.ranks):
                writer.writerow([i, rank])


def rank_from_scores(gold_score: float, other_scores: np.ndarray) -> int:
    """Rank of the gold candidate among other_scores: one plus the number of
    strictly better scores, with ties counted at their average position,
    rounded up."""
    above = int(np.count_nonzero(other_scores > gold_score))
    ties = int(np.count_nonzero(other_scores == gold_score))
    return 1 + above + (ties + 1) // 2


def metrics_from_ranks(ranks: list[int]) -> MetricsReport:
    if not ranks:
        return MetricsReport(0.0, 0.0, 0.0, 0.0, 0.0, 0)
    arr = np.asarray(ranks, dtype=np.float64)
    return MetricsReport(
        mr=float(arr.mean()),
        mrr=float((1.0 / arr).mean()),
        hit1=float((arr <= 1).mean()),
        hit3=float((arr <= 3).mean()),
        hit10=float((arr <= 10).mean()),
        triple_count=len(ranks),
        ranks=list(ranks),
    )


def rank_tail(
    model: EmbeddingModel,
    head: int,
    relation: int,
    gold_tail: int,
    kg: KnowledgeGraph,
    filtered: bool = True,
    candidate_ids: np.ndarray | None = None,
) -> RankingResult:
    """Rank the gold tail for (head, relation) against candidate entities.

    Under the filtered protocol every other entity known to be a true tail
    of (head, relation) in any split is removed from the candidates before
    ranking; the gold tail itself always stays. candidate_ids restricts the
    comparison set (the gold tail is added if absent); by default all
    entities compete.
    """
    query = aggregate(model, head, relation)
    if candidate_ids is None:
        candidates = np.arange(model.num_entities(), dtype=np.int64)
    else:
        candidates = np.unique(np.asarray(candidate_ids, dtype=np.int64))
        if gold_tail not in candidates:
            candidates = np.sort(np.append(candidates, gold_tail))
    if filtered:
        known = kg.known_positive_tails.get((head, relation), frozenset()) - {gold_tail}
        if known:
            known_arr = np.fromiter(known, dtype=np.int64, count=len(known))
            candidates = candidates[~np.isin(candidates, known_arr)]
    scores = model.entity_table[candidates] @ query
    gold_score = float(model.entity_table[gold_tail] @ query)
    others = scores[candidates != gold_tail]
    return RankingResult(
        rank=rank_from_scores(gold_score, others),
        candidate_count=int(candidates.size),
    )


def _rank_chunk(model, kg, triples, filtered, base_candidates):
    heads = np.fromiter((t.head for t in triples), dtype=np.int64, count=len(triples))
    rels = np.fromiter((t.relation for t in triples), dtype=np.int64, count=len(triples))
    queries, _ = aggregate_batch(model, heads, rels)
    table = model.entity_table
    if base_candidates is None:
        scores = queries @ table.T
        pool = None
    else:
        scores = queries @ table[base_candidates].T
        pool = base_candidates
    ranks = []
    for i, triple in enumerate(triples):
        gold = triple.tail
        gold_score = float(table[gold] @ queries[i])
        row = scores[i]
        if pool is None:
            keep = np.ones(row.size, dtype=bool)
            keep[gold] = False
            if filtered:
                known = kg.known_positive_tails.get((triple.head, triple.relation), frozenset())
                for entity in known:
                    keep[entity] = False
            others = row[keep]
        else:
            keep = pool != gold
            if filtered:
                known = kg.known_positive_tails.get(
                    (triple.head, triple.relation), frozenset()
                ) - {gold}
                if known:
                    known_arr = np.fromiter(known, dtype=np.int64, count=len(known))
                    keep &= ~np.isin(pool, known_arr)
            others = row[keep]
        ranks.append(rank_from_scores(gold_score, others))
    return ranks


def evaluate(
    model: EmbeddingModel,
    kg: KnowledgeGraph,
    split: str = "valid",
    filtered: bool = True,
    candidate_limit: int = 0,
    seed: int = 0,
    workers: int = 1,
    chunk_size: int = 256,
) -> MetricsReport:
    """Tail-ranking metrics (MR, MRR, Hit@1/3/10) over a split.

    candidate_limit > 0 ranks against a seeded entity subsample of that size
    (plus the gold tail when it falls outside); 0 keeps the full entity set.
    Results are deterministic for a given seed and independent of workers.
    """
    triples = kg.split(split)
    if not triples:
        return MetricsReport(0.0, 0.0, 0.0, 0.0, 0.0, 0)
    if model.num_entities() != kg.num_entities():
        raise ValueError(
            f"model has {model.num_entities()} entities but the dataset has {kg.num_entities()}"
        )
    base = None
    if candidate_limit and candidate_limit < kg.num_entities():
        rng = np.random.default_rng(seed)
        base = np.sort(rng.choice(kg.num_entities(), size=candidate_limit, replace=False))
    chunks = [triples[i : i + chunk_size] for i in range(0, len(triples), chunk_size)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            results = list(
                pool_exec.map(lambda c: _rank_chunk(model, kg, c, filtered, base), chunks)
            )
    else:
        results = [_rank_chunk(model, kg, c, filtered, base) for c in chunks]
    ranks = [r for chunk_ranks in results for r in chunk_ranks]
    return metrics_from_ranks(ranks)


def default_candidate_limit(num_entities: int, requested: int = 0) -> int:
    """The validation-time candidate budget: full set for small entity
    vocabularies, a subsample above the threshold, or the explicit request."""
    if requested > 0:
        return min(requested, num_entities)
    if num_entities <= FULL_CANDIDATE_THRESHOLD:
        return 0
    return SUBSAMPLE_CANDIDATES

# src/maschine/eval_lp.py
"""Filtered link-prediction ranks and the MRR, Hits@K and Sem@K metrics."""

from __future__ import annotations

import logging
from collections import defaultdict
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .errors import EvaluationError
from .kg import Schema, type_closure
from .kgem import ModelParams, score_heads_batch, score_tails_batch

logger = logging.getLogger(__name__)

DEFAULT_KS: tuple[int, ...] = (1, 3, 10)


class FilterIndex:
    """Known answers of every ``(h, r, ?)`` and ``(?, r, t)`` query."""

    _EMPTY = np.empty(0, dtype=np.int64)

    def __init__(self, triples: Iterable[np.ndarray]) -> None:
        tails: dict[tuple[int, int], set[int]] = defaultdict(set)
        heads: dict[tuple[int, int], set[int]] = defaultdict(set)
        for arr in triples:
            for h, r, t in np.asarray(arr).reshape(-1, 3).tolist():
                tails[(h, r)].add(t)
                heads[(r, t)].add(h)
        self._tails = {k: np.fromiter(sorted(v), dtype=np.int64) for k, v in tails.items()}
        self._heads = {k: np.fromiter(sorted(v), dtype=np.int64) for k, v in heads.items()}

    def tails(self, h: int, r: int) -> np.ndarray:
        return self._tails.get((h, r), self._EMPTY)

    def heads(self, r: int, t: int) -> np.ndarray:
        return self._heads.get((r, t), self._EMPTY)


class LPReport(BaseModel):
    """Link-prediction metrics over pooled head and tail ranks."""

    mrr: float = Field(..., ge=0.0, le=1.0)
    hits_at_1: float = Field(..., ge=0.0, le=1.0)
    hits_at_3: float = Field(..., ge=0.0, le=1.0)
    hits_at_10: float = Field(..., ge=0.0, le=1.0)
    sem_at_1: float | None = Field(default=None, ge=0.0, le=1.0)
    sem_at_3: float | None = Field(default=None, ge=0.0, le=1.0)
    sem_at_10: float | None = Field(default=None, ge=0.0, le=1.0)
    n_triples: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _hits_monotone(self) -> LPReport:
        if not self.hits_at_1 <= self.hits_at_3 <= self.hits_at_10:
            raise ValueError("Hits@K must be nondecreasing in K")
        return self


def realistic_rank(scores: np.ndarray, target: int, filtered: np.ndarray) -> int:
    """``1 + #greater + floor(#ties / 2)`` after dropping the other known answers."""
    true_score = scores[target]
    keep = np.ones(len(scores), dtype=bool)
    keep[filtered] = False
    keep[target] = False
    others = scores[keep]
    greater = int(np.count_nonzero(others > true_score))
    ties = int(np.count_nonzero(others == true_score))
    return 1 + greater + ties // 2


def _head_scores(params: ModelParams, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    # Models trained with inverse relations answer (?, r, t) as (t, r^-1, ?).
    if params.inverse_relations:
        return score_tails_batch(params, t, r + params.n_relations)
    return score_heads_batch(params, r, t)


def rank(
    params: ModelParams, triple: Sequence[int], filter_index: FilterIndex
) -> tuple[int, int]:
    """Filtered realistic ``(head rank, tail rank)`` of one test triple."""
    h, r, t = (int(x) for x in triple)
    tail_scores = score_tails_batch(params, np.array([h]), np.array([r]))[0]
    head_scores = _head_scores(params, np.array([r]), np.array([t]))[0]
    return (
        realistic_rank(head_scores, h, filter_index.heads(r, t)),
        realistic_rank(tail_scores, t, filter_index.tails(h, r)),
    )


def mrr(ranks: Sequence[int] | np.ndarray) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise EvaluationError("MRR of an empty rank list")
    return float(np.mean(1.0 / ranks))


def hits_at_k(ranks: Sequence[int] | np.ndarray, k: int) -> float:
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise EvaluationError("Hits@K of an empty rank list")
    return float(np.mean(ranks <= k))


def top_k_filtered(scores: np.ndarray, target: int, filtered: np.ndarray, k: int) -> np.ndarray:
    """Best ``k`` candidates once the other known answers are removed; ties by lowest id."""
    masked = scores.astype(np.float64, copy=True)
    masked[filtered] = -np.inf
    masked[target] = scores[target]
    order = np.argsort(-masked, kind="stable")
    available = len(scores) - int(np.count_nonzero(np.isneginf(masked)))
    return order[: min(k, available)]


class TypeOracle:
    """Cached entity membership masks for the classes Sem@K asks about."""

    def __init__(self, schema: Schema, n_entities: int) -> None:
        self.schema = schema
        self.n_entities = n_entities
        self._closures = [type_closure(e, schema) for e in range(n_entities)]
        self._masks: dict[int, np.ndarray] = {}

    def members(self, c: int) -> np.ndarray:
        mask = self._masks.get(c)
        if mask is None:
            mask = np.fromiter((c in cl for cl in self._closures), dtype=bool, count=self.n_entities)
            self._masks[c] = mask
        return mask


class _SideTally(BaseModel):
    ranks: list[int] = Field(default_factory=list)
    head_sem: dict[int, list[float]] = Field(default_factory=dict)
    tail_sem: dict[int, list[float]] = Field(default_factory=dict)


def _evaluate_chunk(
    params: ModelParams,
    triples: np.ndarray,
    filter_index: FilterIndex,
    oracle: TypeOracle | None,
    ks: Sequence[int],
) -> _SideTally:
    tally = _SideTally(
        head_sem={k: [] for k in ks}, tail_sem={k: [] for k in ks}
    )
    if len(triples) == 0:
        return tally
    h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
    tail_scores = score_tails_batch(params, h, r)
    head_scores = _head_scores(params, r, t)
    k_max = max(ks)
    schema = oracle.schema if oracle is not None else None

    for i, (hi, ri, ti) in enumerate(triples.tolist()):
        head_filter = filter_index.heads(ri, ti)
        tail_filter = filter_index.tails(hi, ri)
        tally.ranks.append(realistic_rank(head_scores[i], hi, head_filter))
        tally.ranks.append(realistic_rank(tail_scores[i], ti, tail_filter))
        if oracle is None or schema is None:
            continue
        for side, scores, target, filtered, axioms in (
            (tally.head_sem, head_scores[i], hi, head_filter, schema.domain),
            (tally.tail_sem, tail_scores[i], ti, tail_filter, schema.range),
        ):
            required = axioms.get(ri)
            if required is None:
                continue
            top = top_k_filtered(scores, target, filtered, k_max)
            valid = oracle.members(required)[top]
            for k in ks:
                side[k].append(float(valid[:k].sum()) / k)
    return tally


def _sem(head: list[float], tail: list[float]) -> float | None:
    sides = [float(np.mean(values)) for values in (head, tail) if values]
    return float(np.mean(sides)) if sides else None


def sem_at_k(
    params: ModelParams,
    triples: np.ndarray,
    schema: Schema,
    k: int,
    filter_index: FilterIndex | None = None,
) -> float | None:
    """Share of filtered top-K predictions typed by the relation's domain (heads) or range (tails).

    Head and tail sides are averaged with equal weight; a side is skipped for
    relations without the matching axiom. ``None`` when no side qualifies.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    filter_index = filter_index or FilterIndex([triples])
    oracle = TypeOracle(schema, params.n_entities)
    tally = _evaluate_chunk(params, triples, filter_index, oracle, [k])
    return _sem(tally.head_sem[k], tally.tail_sem[k])


def evaluate_link_prediction(
    params: ModelParams,
    triples: np.ndarray,
    filter_index: FilterIndex,
    schema: Schema | None = None,
    *,
    threads: int = 1,
    chunk_size: int = 128,
) -> LPReport:
    """Rank every triple on both sides and summarise; scores are computed in float64."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(triples) == 0:
        raise EvaluationError("no triples to evaluate")
    params64 = params.astype(np.float64)
    oracle = TypeOracle(schema, params.n_entities) if schema is not None else None
    chunks = [triples[i : i + chunk_size] for i in range(0, len(triples), chunk_size)]

    def run(chunk: np.ndarray) -> _SideTally:
        return _evaluate_chunk(params64, chunk, filter_index, oracle, DEFAULT_KS)

    if threads > 1:
        if oracle is not None:
            # Fill the mask cache before the workers share it.
            for c in {*oracle.schema.domain.values(), *oracle.schema.range.values()}:
                oracle.members(c)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            tallies = list(pool.map(run, chunks))
    else:
        tallies = [run(c) for c in chunks]

    ranks = [x for tally in tallies for x in tally.ranks]
    sem: dict[int, float | None] = {}
    for k in DEFAULT_KS:
        head = [x for tally in tallies for x in tally.head_sem[k]]
        tail = [x for tally in tallies for x in tally.tail_sem[k]]
        sem[k] = _sem(head, tail)

    report = LPReport(
        mrr=mrr(ranks),
        hits_at_1=hits_at_k(ranks, 1),
        hits_at_3=hits_at_k(ranks, 3),
        hits_at_10=hits_at_k(ranks, 10),
        sem_at_1=sem[1],
        sem_at_3=sem[3],
        sem_at_10=sem[10],
        n_triples=len(triples),
    )
    logger.debug("link prediction over %d triples: MRR %.4f", len(triples), report.mrr)
    return report

# tests/test_eval_lp.py
"""Test filtered ranking, MRR/Hits@K and the type-aware Sem@K metric."""

from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from maschine.errors import EvaluationError
from maschine.eval_lp import (
    FilterIndex,
    LPReport,
    evaluate_link_prediction,
    hits_at_k,
    mrr,
    rank,
    realistic_rank,
    sem_at_k,
    top_k_filtered,
)
from maschine.ingest import DatasetBundle
from maschine.kg import Schema, transitive_superclasses
from maschine.kgem import ModelParams, init_params, score


MODELS = ["transe", "distmult", "complex", "tucker"]


def head_score(params: ModelParams, h: int, r: int, t: int) -> float:
    """Score used to rank head ``h``; inverse-relation models query ``(t, r^-1, h)``."""
    if params.inverse_relations:
        return score(params, t, r + params.n_relations, h)
    return score(params, h, r, t)


def line_params(values: list[float]) -> ModelParams:
    """1-d DistMult where every score is proportional to the candidate's value."""
    return ModelParams(
        model="distmult", dim=1, entity=np.array([[v] for v in values]),
        relation=np.array([[1.0]]), n_relations=1,
    )


def brute_rank(scores: list[float], target: int, known: set[int]) -> int:
    s = scores[target]
    others = [x for e, x in enumerate(scores) if e != target and e not in known]
    return 1 + sum(x > s for x in others) + sum(x == s for x in others) // 2


class TestRealisticRank:
    """Hand-worked ranks."""

    def test_best_candidate(self) -> None:
        assert realistic_rank(np.array([3.0, 5.0, 1.0]), 1, np.array([], dtype=np.int64)) == 1

    def test_counts_greater(self) -> None:
        assert realistic_rank(np.array([3.0, 5.0, 4.0, 1.0]), 0, np.array([], dtype=np.int64)) == 3

    def test_ties_take_half(self) -> None:
        assert realistic_rank(np.ones(4), 0, np.array([], dtype=np.int64)) == 2
        assert realistic_rank(np.ones(2), 1, np.array([], dtype=np.int64)) == 1

    def test_filtered_answers_dropped(self) -> None:
        scores = np.array([9.0, 5.0, 1.0])
        assert realistic_rank(scores, 1, np.array([0])) == 1
        assert realistic_rank(scores, 1, np.array([0, 1])) == 1

    def test_bounds(self, rng: np.random.Generator) -> None:
        for _ in range(50):
            scores = rng.normal(size=12)
            target = int(rng.integers(0, 12))
            raw = realistic_rank(scores, target, np.array([], dtype=np.int64))
            filtered = realistic_rank(scores, target, rng.choice(12, size=4, replace=False))
            assert 1 <= filtered <= raw <= 12


class TestRank:
    """Both-side ranks against a brute-force scan."""

    @pytest.mark.parametrize("model", MODELS)
    def test_matches_brute_force(self, model: str, rng: np.random.Generator) -> None:
        params = init_params(model, 8, 3, 4, seed=3, dtype=np.float64)  # type: ignore[arg-type]
        known = rng.integers(0, [8, 3, 8], size=(20, 3))
        index = FilterIndex([known])
        for h, r, t in known[:10].tolist():
            tails = [score(params, h, r, e) for e in range(8)]
            heads = [head_score(params, e, r, t) for e in range(8)]
            known_tails = {int(x) for x in index.tails(h, r)}
            known_heads = {int(x) for x in index.heads(r, t)}
            assert rank(params, (h, r, t), index) == (
                brute_rank(heads, h, known_heads),
                brute_rank(tails, t, known_tails),
            )

    def test_inverse_relation_heads(self) -> None:
        params = init_params("tucker", 6, 2, 3, seed=1, dtype=np.float64)
        index = FilterIndex([np.array([[0, 1, 2]])])
        heads = [score(params, 2, 1 + params.n_relations, e) for e in range(6)]
        head_rank, _ = rank(params, (0, 1, 2), index)
        assert head_rank == brute_rank(heads, 0, {0})

    def test_filter_index_lookup(self) -> None:
        index = FilterIndex([np.array([[0, 0, 1], [0, 0, 2]]), np.array([[3, 0, 1]])])
        assert index.tails(0, 0).tolist() == [1, 2]
        assert index.heads(0, 1).tolist() == [0, 3]
        assert index.tails(5, 5).size == 0


class TestMetrics:
    """Test MRR and Hits@K summaries."""

    def test_mrr(self) -> None:
        assert mrr([1, 2, 4]) == pytest.approx((1 + 0.5 + 0.25) / 3)

    def test_hits(self) -> None:
        ranks = [1, 2, 4, 11]
        assert hits_at_k(ranks, 1) == 0.25
        assert hits_at_k(ranks, 3) == 0.5
        assert hits_at_k(ranks, 10) == 0.75

    def test_empty_ranks(self) -> None:
        with pytest.raises(EvaluationError):
            mrr([])
        with pytest.raises(EvaluationError):
            hits_at_k([], 1)

    def test_report_requires_monotone_hits(self) -> None:
        with pytest.raises(ValidationError, match="nondecreasing"):
            LPReport(mrr=0.5, hits_at_1=0.6, hits_at_3=0.5, hits_at_10=0.7, n_triples=1)

    def test_report_bounds(self) -> None:
        with pytest.raises(ValidationError):
            LPReport(mrr=1.5, hits_at_1=0.1, hits_at_3=0.2, hits_at_10=0.3, n_triples=1)


class TestTopK:
    def test_ties_broken_by_lowest_id(self) -> None:
        top = top_k_filtered(np.array([1.0, 2.0, 2.0, 0.0]), 3, np.array([], dtype=np.int64), 2)
        assert top.tolist() == [1, 2]

    def test_filtered_removed_but_target_kept(self) -> None:
        top = top_k_filtered(np.array([5.0, 4.0, 3.0]), 1, np.array([0, 1]), 3)
        assert top.tolist() == [1, 2]


# Entities 0, 1 are of class 0; 2, 3 of class 1. Relation 0: class 0 -> class 1.
TYPED = {0: frozenset({0}), 1: frozenset({0}), 2: frozenset({1}), 3: frozenset({1})}


class TestSemAtK:
    """Hand-worked Sem@K on four entities ranked 2 > 0 > 3 > 1."""

    params = line_params([1.0, 0.1, 2.0, 0.5])
    test = np.array([[0, 0, 2]])

    def test_both_sides(self) -> None:
        schema = Schema(n_classes=2, domain={0: 0}, range={0: 1}, types=TYPED)
        # heads top-1 [2] -> 0, tails top-1 [2] -> 1
        assert sem_at_k(self.params, self.test, schema, 1) == pytest.approx(0.5)
        # heads [2, 0, 3] -> 1/3, tails [2, 0, 3] -> 2/3
        assert sem_at_k(self.params, self.test, schema, 3) == pytest.approx(0.5)

    def test_side_without_axiom_skipped(self) -> None:
        schema = Schema(n_classes=2, domain={0: 0}, types=TYPED)
        assert sem_at_k(self.params, self.test, schema, 1) == 0.0
        assert sem_at_k(self.params, self.test, schema, 3) == pytest.approx(1 / 3)

    def test_no_axioms_gives_none(self) -> None:
        schema = Schema(n_classes=2, types=TYPED)
        assert sem_at_k(self.params, self.test, schema, 3) is None

    def test_known_answers_leave_the_list(self) -> None:
        schema = Schema(n_classes=2, range={0: 1}, types=TYPED)
        index = FilterIndex([self.test, np.array([[0, 0, 3]])])
        # tails [2, 0, 1] once 3 is filtered
        assert sem_at_k(self.params, self.test, schema, 3, index) == pytest.approx(1 / 3)

    def test_k_beyond_candidates(self) -> None:
        schema = Schema(n_classes=2, range={0: 1}, types=TYPED)
        # all four tails shown, two of them valid, still divided by K
        assert sem_at_k(self.params, self.test, schema, 10) == pytest.approx(0.2)

    def test_subclass_members_count(self) -> None:
        types = {**TYPED, 3: frozenset({2})}
        schema = Schema(n_classes=3, range={0: 1}, types=types, subclass_of=frozenset({(2, 1)}))
        index = FilterIndex([self.test])
        assert sem_at_k(self.params, self.test, schema, 3, index) == pytest.approx(2 / 3)


def random_kg(
    rng: np.random.Generator, n_entities: int = 12, n_relations: int = 3, n_classes: int = 5
) -> tuple[np.ndarray, np.ndarray, Schema]:
    """Known triples, a test slice of them and a small schema with a hierarchy."""
    known = np.unique(rng.integers(0, [n_entities, n_relations, n_entities], size=(30, 3)), axis=0)
    types = {
        e: frozenset(int(c) for c in rng.choice(n_classes, size=int(rng.integers(1, 3)), replace=False))
        for e in range(n_entities)
        if rng.random() < 0.8
    }
    schema = Schema(
        n_classes=n_classes,
        domain={r: int(rng.integers(0, n_classes)) for r in range(n_relations) if r != 2},
        range={r: int(rng.integers(0, n_classes)) for r in range(n_relations)},
        subclass_of=frozenset({(2, 0), (3, 1), (4, 3)}),
        types=types,
    )
    return known, known[:8], schema


def oracle_sem(
    params: ModelParams, test: np.ndarray, known: np.ndarray, schema: Schema, k: int
) -> float | None:
    """Sem@K from scalar scores and a per-candidate scan of the type hierarchy."""
    n = params.n_entities
    facts = {tuple(x) for x in known.tolist()}

    def is_member(e: int, c: int) -> bool:
        return any(c in transitive_superclasses(t, schema) for t in schema.types_of(e))

    def shown(scores: list[float], target: int, answers: set[int]) -> list[int]:
        candidates = [e for e in range(n) if e == target or e not in answers]
        return sorted(candidates, key=lambda e: (-scores[e], e))[:k]

    head_side: list[float] = []
    tail_side: list[float] = []
    for h, r, t in test.tolist():
        if r in schema.domain:
            scores = [head_score(params, e, r, t) for e in range(n)]
            answers = {e for e in range(n) if (e, r, t) in facts}
            top = shown(scores, h, answers)
            head_side.append(sum(is_member(e, schema.domain[r]) for e in top) / k)
        if r in schema.range:
            scores = [score(params, h, r, e) for e in range(n)]
            answers = {e for e in range(n) if (h, r, e) in facts}
            top = shown(scores, t, answers)
            tail_side.append(sum(is_member(e, schema.range[r]) for e in top) / k)
    sides = [sum(v) / len(v) for v in (head_side, tail_side) if v]
    return sum(sides) / len(sides) if sides else None


class TestRandomGraphOracle:
    """Evaluation on small random graphs against scalar brute-force scans."""

    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_sem_at_k(self, model: str, seed: int) -> None:
        rng = np.random.default_rng(seed)
        known, test, schema = random_kg(rng)
        params = init_params(model, 12, 3, 4, seed=seed, dtype=np.float64)  # type: ignore[arg-type]
        index = FilterIndex([known])
        for k in (1, 3, 10):
            expected = oracle_sem(params, test, known, schema, k)
            assert expected is not None
            assert sem_at_k(params, test, schema, k, index) == pytest.approx(expected, abs=1e-12)

    def test_five_entities_two_classes(self) -> None:
        rng = np.random.default_rng(7)
        known = np.array([[0, 0, 1], [2, 0, 3], [4, 0, 1], [1, 1, 2]])
        schema = Schema(
            n_classes=2, domain={0: 0, 1: 1}, range={0: 1},
            types={0: frozenset({0}), 1: frozenset({1}), 2: frozenset({0}), 3: frozenset({1})},
        )
        for model in MODELS:
            seed = int(rng.integers(100))
            params = init_params(model, 5, 2, 3, seed=seed, dtype=np.float64)  # type: ignore[arg-type]
            for k in (1, 3, 10):
                assert sem_at_k(params, known, schema, k, FilterIndex([known])) == pytest.approx(
                    oracle_sem(params, known, known, schema, k), abs=1e-12
                )

    @pytest.mark.parametrize("model", MODELS)
    def test_report_matches_scan(self, model: str) -> None:
        rng = np.random.default_rng(11)
        known, test, schema = random_kg(rng)
        params = init_params(model, 12, 3, 4, seed=5, dtype=np.float64)  # type: ignore[arg-type]
        index = FilterIndex([known])
        facts = {tuple(x) for x in known.tolist()}
        ranks = []
        for h, r, t in test.tolist():
            heads = [head_score(params, e, r, t) for e in range(12)]
            tails = [score(params, h, r, e) for e in range(12)]
            ranks.append(brute_rank(heads, h, {e for e in range(12) if (e, r, t) in facts}))
            ranks.append(brute_rank(tails, t, {e for e in range(12) if (h, r, e) in facts}))

        report = evaluate_link_prediction(params, test, index, schema)

        assert report.mrr == pytest.approx(sum(1 / x for x in ranks) / len(ranks), abs=1e-12)
        assert report.hits_at_3 == pytest.approx(sum(x <= 3 for x in ranks) / len(ranks), abs=1e-12)
        assert report.sem_at_10 == pytest.approx(oracle_sem(params, test, known, schema, 10), abs=1e-12)


class TestEvaluateLinkPrediction:
    """Test the full evaluation over a split."""

    def _params(self, toy: DatasetBundle) -> ModelParams:
        return init_params("complex", toy.kg.n_entities, toy.kg.n_relations, 4, seed=0)

    def test_toy_report(self, toy: DatasetBundle) -> None:
        kg = toy.kg
        index = FilterIndex([kg.train, kg.valid, kg.test])
        report = evaluate_link_prediction(self._params(toy), kg.test, index, toy.schema)
        assert report.n_triples == 2
        assert 0.0 < report.mrr <= 1.0
        assert report.sem_at_3 is not None

    def test_without_schema_no_sem(self, toy: DatasetBundle) -> None:
        kg = toy.kg
        report = evaluate_link_prediction(self._params(toy), kg.test, FilterIndex([kg.test]))
        assert report.sem_at_1 is report.sem_at_10 is None

    def test_threads_do_not_change_results(self, toy: DatasetBundle) -> None:
        kg = toy.kg
        index = FilterIndex([kg.train, kg.valid, kg.test])
        params = self._params(toy)
        one = evaluate_link_prediction(params, kg.train, index, toy.schema, chunk_size=3)
        many = evaluate_link_prediction(params, kg.train, index, toy.schema, threads=4, chunk_size=3)
        assert one == many

    def test_matches_rank(self, toy: DatasetBundle) -> None:
        kg = toy.kg
        index = FilterIndex([kg.train, kg.valid, kg.test])
        params = self._params(toy).astype(np.float64)
        ranks = [x for triple in kg.valid.tolist() for x in rank(params, triple, index)]
        report = evaluate_link_prediction(params, kg.valid, index)
        assert report.mrr == pytest.approx(mrr(ranks))

    def test_empty_split(self, toy: DatasetBundle) -> None:
        with pytest.raises(EvaluationError, match="no triples"):
            evaluate_link_prediction(self._params(toy), np.zeros((0, 3)), FilterIndex([]))

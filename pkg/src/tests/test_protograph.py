# tests/test_protograph.py
"""Test P1/P2 protograph construction against a hand-enumerated oracle."""

from __future__ import annotations

from pathlib import Path

import pytest

from maschine.ingest import DatasetBundle, load_triples
from maschine.kg import Schema, Vocabulary
from maschine.protograph import (
    build_mapping,
    build_p1,
    build_p2,
    build_protograph,
    export_mapping,
    export_protograph,
)

P1_TOY = {
    ("Person", "livesIn", "City"),
    ("Person", "bornIn", "Place"),
    ("Person", "wrote", "Book"),
    ("City", "locatedIn", "Country"),
    ("Person", "worksFor", "Organization"),
    ("Country", "hasCapital", "City"),
}

P2_TOY = P1_TOY | {
    ("Scientist", "livesIn", "City"),
    ("Artist", "livesIn", "City"),
    ("Scientist", "bornIn", "Place"),
    ("Artist", "bornIn", "Place"),
    ("Person", "bornIn", "City"),
    ("Person", "bornIn", "Country"),
    ("Scientist", "wrote", "Book"),
    ("Artist", "wrote", "Book"),
    ("Scientist", "worksFor", "Organization"),
    ("Artist", "worksFor", "Organization"),
}


def _named(bundle: DatasetBundle, triples: list[tuple[int, int, int]]) -> set[tuple[str, str, str]]:
    vocab = bundle.kg.vocabulary
    return {
        (vocab.classes.name_of(h), vocab.relations.name_of(r), vocab.classes.name_of(t))
        for h, r, t in triples
    }


class TestBuildProtograph:
    """Test the two heuristics."""

    def test_p1_oracle(self, toy: DatasetBundle) -> None:
        proto = build_p1(toy.schema, range(toy.kg.n_relations))
        assert _named(toy, proto.triples) == P1_TOY
        assert proto.stats_line() == "6 7 6"

    def test_p2_oracle(self, toy: DatasetBundle) -> None:
        proto = build_p2(toy.schema, range(toy.kg.n_relations))
        assert _named(toy, proto.triples) == P2_TOY
        assert proto.stats_line() == "8 7 16"

    def test_p1_subset_of_p2(self, toy: DatasetBundle) -> None:
        relations = range(toy.kg.n_relations)
        p1 = build_p1(toy.schema, relations)
        p2 = build_p2(toy.schema, relations)
        assert set(p1.triples) <= set(p2.triples)
        assert set(p1.classes) <= set(p2.classes)

    def test_one_triple_per_complete_relation(self, toy: DatasetBundle) -> None:
        proto = build_p1(toy.schema, range(toy.kg.n_relations))
        relations = [r for _, r, _ in proto.triples]
        assert len(relations) == len(set(relations)) == len(toy.kg.vocabulary.relations) - 1

    def test_no_double_substitution(self, toy: DatasetBundle) -> None:
        """A P2 triple never swaps in subclasses on both sides at once."""
        schema = toy.schema
        proto = build_p2(schema, range(toy.kg.n_relations))
        for h, r, t in proto.triples:
            assert h == schema.domain[r] or t == schema.range[r]

    def test_triples_sorted_and_unique(self, toy: DatasetBundle) -> None:
        proto = build_p2(toy.schema, range(toy.kg.n_relations))
        assert proto.triples == sorted(set(proto.triples))

    def test_no_subclasses_makes_p1_equal_p2(self) -> None:
        schema = Schema(n_classes=2, domain={0: 0, 1: 1}, range={0: 1, 1: 0})
        assert build_p1(schema, [0, 1]).triples == build_p2(schema, [0, 1]).triples

    def test_empty_schema(self) -> None:
        proto = build_protograph(Schema(n_classes=0), range(5), "p2")
        assert proto.n_triples == 0
        assert proto.classes == []
        assert proto.stats_line() == "0 5 0"

    def test_relation_with_domain_only_skipped(self) -> None:
        schema = Schema(n_classes=2, domain={0: 0}, range={1: 1})
        assert build_p1(schema, [0, 1]).triples == []

    def test_heuristic_dispatch(self, toy: DatasetBundle) -> None:
        relations = range(toy.kg.n_relations)
        assert build_protograph(toy.schema, relations, "p1").heuristic == "p1"
        assert build_protograph(toy.schema, relations, "p2").n_triples == 16

    def test_diamond_subclass_in_p2(self, diamond_schema: tuple[Vocabulary, Schema]) -> None:
        vocab, base = diamond_schema
        vocab.relations.intern("r")
        a, b, c = (vocab.classes.id_of(n) for n in "ABC")
        schema = Schema(n_classes=4, domain={0: a}, range={0: a}, subclass_of=base.subclass_of)
        triples = set(build_p2(schema, [0]).triples)
        assert triples == {(a, 0, a), (b, 0, a), (c, 0, a), (a, 0, b), (a, 0, c)}


class TestMapping:
    """Test the entity-to-class mapping dictionary."""

    def test_toy_mapping(self, toy: DatasetBundle) -> None:
        vocab = toy.kg.vocabulary
        mapping = build_mapping(toy.kg, toy.schema)
        by_name = {
            vocab.entities.name_of(e): {vocab.classes.name_of(c) for c in cs}
            for e, cs in mapping.mapping.items()
        }
        assert by_name["alice"] == {"Scientist"}
        assert by_name["carol"] == {"Scientist", "Artist"}
        assert by_name["paris"] == {"City"}
        assert mapping.untyped == {vocab.entities.id_of("erin")}
        assert len(mapping.mapping) == 14

    def test_classes_of_untyped(self, toy: DatasetBundle) -> None:
        mapping = build_mapping(toy.kg, toy.schema)
        assert mapping.classes_of(toy.kg.vocabulary.entities.id_of("erin")) == frozenset()


class TestExport:
    """Test protograph and mapping files."""

    def test_protograph_round_trip(self, toy: DatasetBundle, temp_dir: Path) -> None:
        vocab = toy.kg.vocabulary
        proto = build_p2(toy.schema, range(toy.kg.n_relations))
        export_protograph(temp_dir / "proto.txt", proto, vocab)

        reread = Vocabulary()
        arr = load_triples(temp_dir / "proto.txt", reread)
        names = {
            (reread.entities.name_of(h), reread.relations.name_of(r), reread.entities.name_of(t))
            for h, r, t in arr.tolist()
        }
        assert names == P2_TOY

    def test_mapping_file(self, toy: DatasetBundle, temp_dir: Path) -> None:
        mapping = build_mapping(toy.kg, toy.schema)
        export_mapping(temp_dir / "mapping.txt", mapping, toy.kg.vocabulary)
        lines = (temp_dir / "mapping.txt").read_text().splitlines()
        assert "alice\tScientist" in lines
        assert "carol\tArtist" in lines and "carol\tScientist" in lines
        assert len(lines) == 16

    @pytest.mark.parametrize("heuristic", ["p1", "p2"])
    def test_export_is_deterministic(
        self, toy: DatasetBundle, temp_dir: Path, heuristic: str
    ) -> None:
        vocab = toy.kg.vocabulary
        for name in ("a.txt", "b.txt"):
            proto = build_protograph(toy.schema, range(toy.kg.n_relations), heuristic)  # type: ignore[arg-type]
            export_protograph(temp_dir / name, proto, vocab)
        assert (temp_dir / "a.txt").read_bytes() == (temp_dir / "b.txt").read_bytes()

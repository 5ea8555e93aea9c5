# tests/test_ingest.py
"""Test triple, schema and label file readers."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from maschine.config import DatasetLayout
from maschine.errors import DataError, MalformedLineError, SchemaCycleError, SchemaError
from maschine.ingest import (
    DatasetBundle,
    load_dataset,
    load_labels,
    load_schema,
    load_triples,
    save_triples,
)
from maschine.kg import Vocabulary


class TestLoadTriples:
    """Test triple file parsing."""

    def test_interns_in_file_order(self, temp_dir: Path) -> None:
        path = temp_dir / "t.txt"
        path.write_text("a\tr\tb\nb\ts\tc\n\na\tr\tc\n")
        vocab = Vocabulary()
        arr = load_triples(path, vocab)
        assert vocab.entities.names == ["a", "b", "c"]
        assert vocab.relations.names == ["r", "s"]
        assert arr.tolist() == [[0, 0, 1], [1, 1, 2], [0, 0, 2]]

    def test_head_tail_relation_order(self, temp_dir: Path) -> None:
        path = temp_dir / "t.txt"
        path.write_text("a\tb\tr\n")
        vocab = Vocabulary()
        arr = load_triples(path, vocab, order="htr")
        assert vocab.relations.names == ["r"]
        assert arr.tolist() == [[0, 0, 1]]

    def test_whitespace_separated_lines(self, temp_dir: Path) -> None:
        path = temp_dir / "t.txt"
        path.write_text("a r b\n")
        vocab = Vocabulary()
        assert load_triples(path, vocab).shape == (1, 3)

    def test_wrong_field_count_names_line(self, temp_dir: Path) -> None:
        path = temp_dir / "t.txt"
        path.write_text("a\tr\tb\na\tr\n")
        with pytest.raises(MalformedLineError) as info:
            load_triples(path, Vocabulary())
        assert info.value.line_no == 2
        assert "t.txt:2" in str(info.value)

    def test_empty_field(self, temp_dir: Path) -> None:
        path = temp_dir / "t.txt"
        path.write_text("a\t\tb\n")
        with pytest.raises(MalformedLineError, match="empty field"):
            load_triples(path, Vocabulary())

    def test_save_then_load_is_identity(self, toy_dir: Path, temp_dir: Path) -> None:
        vocab = Vocabulary()
        original = load_triples(toy_dir / "train.txt", vocab)
        save_triples(temp_dir / "out.txt", original.tolist(), vocab.entities, vocab.relations)
        assert (temp_dir / "out.txt").read_text() == (toy_dir / "train.txt").read_text()
        again = load_triples(temp_dir / "out.txt", vocab)
        np.testing.assert_array_equal(again, original)


class TestLoadSchema:
    """Test schema axiom parsing."""

    def _vocab(self) -> Vocabulary:
        vocab = Vocabulary()
        vocab.entities.intern("e")
        vocab.relations.intern("r")
        return vocab

    def test_axioms(self, temp_dir: Path) -> None:
        path = temp_dir / "schema.txt"
        path.write_text(
            "r\trdfs:domain\tA\n"
            "r\trdfs:range\tB\n"
            "A\trdfs:subClassOf\tC\n"
            "e\trdf:type\tA\n"
        )
        vocab = self._vocab()
        schema = load_schema(path, vocab)
        a, b, c = (vocab.classes.id_of(n) for n in "ABC")
        assert schema.domain == {0: a}
        assert schema.range == {0: b}
        assert schema.subclass_of == {(a, c)}
        assert schema.types == {0: frozenset({a})}

    def test_conflicting_domains(self, temp_dir: Path) -> None:
        path = temp_dir / "schema.txt"
        path.write_text("r\trdfs:domain\tA\nr\trdfs:domain\tB\n")
        with pytest.raises(SchemaError, match="two rdfs:domain"):
            load_schema(path, self._vocab())

    def test_repeated_axiom_is_fine(self, temp_dir: Path) -> None:
        path = temp_dir / "schema.txt"
        path.write_text("r\trdfs:range\tA\nr\trdfs:range\tA\n")
        assert len(load_schema(path, self._vocab()).range) == 1

    def test_unknown_keyword(self, temp_dir: Path) -> None:
        path = temp_dir / "schema.txt"
        path.write_text("r\towl:sameAs\tA\n")
        with pytest.raises(MalformedLineError, match="unknown schema keyword"):
            load_schema(path, self._vocab())

    def test_cycle_named_by_class(self, temp_dir: Path) -> None:
        path = temp_dir / "schema.txt"
        path.write_text("A\trdfs:subClassOf\tB\nB\trdfs:subClassOf\tA\n")
        with pytest.raises(SchemaCycleError) as info:
            load_schema(path, self._vocab())
        assert set(info.value.cycle) == {"A", "B"}

    def test_unknown_relation_and_entity_skipped(self, temp_dir: Path) -> None:
        path = temp_dir / "schema.txt"
        path.write_text("other\trdfs:domain\tA\nnobody\trdf:type\tA\n")
        vocab = self._vocab()
        schema = load_schema(path, vocab)
        assert schema.domain == {}
        assert schema.types == {}
        assert vocab.n_relations == 1

    def test_add_relations(self, temp_dir: Path) -> None:
        path = temp_dir / "schema.txt"
        path.write_text("other\trdfs:domain\tA\n")
        vocab = self._vocab()
        schema = load_schema(path, vocab, add_relations=True)
        assert schema.domain == {vocab.relations.id_of("other"): vocab.classes.id_of("A")}


class TestLoadLabels:
    """Test gold label files."""

    def test_unknown_entities_counted(self, toy: DatasetBundle, toy_dir: Path) -> None:
        labels = load_labels(toy_dir / "labels.txt", toy.kg.vocabulary)
        assert labels.skipped == 1
        assert len(labels.labels) == 13
        assert labels.n_labels == 4
        assert labels.label_names[0] == "Person"

    def test_arrays_sorted_by_entity(self, toy: DatasetBundle, toy_dir: Path) -> None:
        labels = load_labels(toy_dir / "labels.txt", toy.kg.vocabulary)
        entities, y = labels.arrays()
        assert list(entities) == sorted(entities)
        assert len(y) == len(entities)


class TestLoadDataset:
    """Test whole-directory loading."""

    def test_toy_counts(self, toy: DatasetBundle) -> None:
        kg = toy.kg
        assert (kg.n_entities, kg.n_relations) == (15, 7)
        assert (len(kg.train), len(kg.valid), len(kg.test)) == (20, 2, 2)
        assert toy.schema.n_classes == 10
        assert toy.name == "toy"

    def test_digests_cover_inputs(self, toy: DatasetBundle) -> None:
        assert set(toy.file_digests) == {"train.txt", "valid.txt", "test.txt", "schema.txt"}

    def test_incomplete_relations(self, toy: DatasetBundle) -> None:
        knows = toy.kg.vocabulary.relations.id_of("knows")
        assert toy.incomplete_relations == [knows]

    def test_missing_train(self, temp_dir: Path) -> None:
        with pytest.raises(DataError, match="missing training file"):
            load_dataset(temp_dir)

    def test_missing_schema_gives_empty_schema(self, toy_copy: Path) -> None:
        (toy_copy / "schema.txt").unlink()
        bundle = load_dataset(toy_copy)
        assert bundle.schema.n_classes == 0

    def test_custom_layout(self, toy_copy: Path) -> None:
        (toy_copy / "train.txt").rename(toy_copy / "train2id.txt")
        bundle = load_dataset(toy_copy, DatasetLayout(train="train2id.txt"))
        assert len(bundle.kg.train) == 20

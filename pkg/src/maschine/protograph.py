# src/maschine/protograph.py
"""Schema-derived protographs (P1, P2) and the KG-to-protograph mapping."""

from __future__ import annotations

import logging
from collections.abc import Iterable
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, computed_field

from .config import Heuristic
from .ingest import save_triples
from .kg import KnowledgeGraph, Schema, Vocabulary, as_triple_array, most_specific_classes

logger = logging.getLogger(__name__)


class Protograph(BaseModel):
    """Triples over class ids sharing the KG's relation set."""

    heuristic: Heuristic
    triples: list[tuple[int, int, int]] = Field(
        default_factory=list, description="Sorted, deduplicated (class, relation, class)"
    )
    relations: list[int] = Field(default_factory=list, description="KG relation ids")

    @computed_field  # type: ignore[prop-decorator]
    @property
    def classes(self) -> list[int]:
        """Classes appearing in at least one triple."""
        return sorted({c for h, _, t in self.triples for c in (h, t)})

    @property
    def n_triples(self) -> int:
        return len(self.triples)

    def as_array(self) -> np.ndarray:
        return as_triple_array(self.triples)

    def stats_line(self) -> str:
        """``|E| |R| |T|`` in the layout of the dataset statistics table."""
        return f"{len(self.classes)} {len(self.relations)} {self.n_triples}"


class MappingDictionary(BaseModel):
    """Each typed KG entity mapped to its most specific classes."""

    mapping: dict[int, frozenset[int]] = Field(default_factory=dict)
    untyped: frozenset[int] = Field(default_factory=frozenset)

    def classes_of(self, entity: int) -> frozenset[int]:
        return self.mapping.get(entity, frozenset())


def _axiom_relations(schema: Schema, relations: Iterable[int]) -> list[tuple[int, int, int]]:
    """(domain, relation, range) for every relation carrying both axioms."""
    return [
        (schema.domain[r], r, schema.range[r])
        for r in sorted(set(relations))
        if r in schema.domain and r in schema.range
    ]


def build_p1(schema: Schema, relations: Iterable[int]) -> Protograph:
    """One triple ``(domain(r), r, range(r))`` per relation with both axioms."""
    relations = sorted(set(relations))
    triples = sorted(set(_axiom_relations(schema, relations)))
    return Protograph(heuristic="p1", triples=triples, relations=relations)


def build_p2(schema: Schema, relations: Iterable[int]) -> Protograph:
    """P1 plus one triple per direct subclass of the domain (head side only)
    and per direct subclass of the range (tail side only).

    Subclasses are never substituted on both sides of the same triple.
    """
    relations = sorted(set(relations))
    triples: set[tuple[int, int, int]] = set()
    for d, r, g in _axiom_relations(schema, relations):
        triples.add((d, r, g))
        triples.update((sub, r, g) for sub in schema.children(d))
        triples.update((d, r, sub) for sub in schema.children(g))
    return Protograph(heuristic="p2", triples=sorted(triples), relations=relations)


def build_protograph(schema: Schema, relations: Iterable[int], heuristic: Heuristic) -> Protograph:
    builder = build_p1 if heuristic == "p1" else build_p2
    proto = builder(schema, relations)
    logger.info(
        "built %s protograph: %d classes, %d relations, %d triples",
        heuristic.upper(), len(proto.classes), len(proto.relations), proto.n_triples,
    )
    return proto


def build_mapping(kg: KnowledgeGraph, schema: Schema) -> MappingDictionary:
    """Map every typed KG entity to its most specific classes."""
    mapping: dict[int, frozenset[int]] = {}
    untyped: set[int] = set()
    for e in range(kg.n_entities):
        classes = most_specific_classes(e, schema)
        if classes:
            mapping[e] = classes
        else:
            untyped.add(e)
    if untyped:
        logger.info("%d of %d entities are untyped", len(untyped), kg.n_entities)
    return MappingDictionary(mapping=mapping, untyped=frozenset(untyped))


def export_protograph(path: Path | str, proto: Protograph, vocab: Vocabulary) -> None:
    """Write protograph triples by class and relation name."""
    save_triples(path, proto.triples, vocab.classes, vocab.relations)


def export_mapping(path: Path | str, mapping: MappingDictionary, vocab: Vocabulary) -> None:
    """Write one ``entity<TAB>class`` row per mapped pair, in id order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [
        f"{vocab.entities.name_of(e)}\t{vocab.classes.name_of(c)}\n"
        for e in sorted(mapping.mapping)
        for c in sorted(mapping.mapping[e])
    ]
    path.write_text("".join(rows), encoding="utf-8")

# src/maschine/kg.py
"""Interned vocabularies, triple storage and the RDFS schema."""

from __future__ import annotations

import hashlib
from collections.abc import Iterable
from typing import Any, NamedTuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

from .errors import DataError, SchemaCycleError, SchemaError, UnknownIdError


class Triple(NamedTuple):
    """A fact ``(head, relation, tail)`` over interned ids."""

    head: int
    relation: int
    tail: int


class Interner(BaseModel):
    """Bijection between names and dense ids, assigned in first-seen order."""

    kind: str = Field(default="name", description="What the names denote")
    names: list[str] = Field(default_factory=list)

    _index: dict[str, int] = PrivateAttr(default_factory=dict)

    def model_post_init(self, __context: Any) -> None:
        self._index = {name: i for i, name in enumerate(self.names)}
        if len(self._index) != len(self.names):
            raise ValueError(f"duplicate {self.kind} names in interner")

    def intern(self, name: str) -> int:
        """Return the id of ``name``, assigning the next free id if unseen."""
        idx = self._index.get(name)
        if idx is None:
            idx = len(self.names)
            self.names.append(name)
            self._index[name] = idx
        return idx

    def get(self, name: str) -> int | None:
        return self._index.get(name)

    def id_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownIdError(f"unknown {self.kind}: {name!r}") from None

    def name_of(self, idx: int) -> str:
        if not 0 <= idx < len(self.names):
            raise UnknownIdError(f"unknown {self.kind} id: {idx}")
        return self.names[idx]

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self._index


class Vocabulary(BaseModel):
    """Entity, relation and class id spaces. Classes never share ids with entities."""

    entities: Interner = Field(default_factory=lambda: Interner(kind="entity"))
    relations: Interner = Field(default_factory=lambda: Interner(kind="relation"))
    classes: Interner = Field(default_factory=lambda: Interner(kind="class"))

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def digest(self) -> str:
        """Content hash over entity and relation names in id order."""
        h = hashlib.sha256()
        for section, interner in (("E", self.entities), ("R", self.relations)):
            h.update(f"{section}\t{len(interner)}\n".encode())
            for name in interner.names:
                h.update(name.encode("utf-8") + b"\n")
        return h.hexdigest()[:16]


def as_triple_array(triples: Iterable[tuple[int, int, int]]) -> np.ndarray:
    """Pack triples into a read-only ``(n, 3)`` int64 array."""
    arr = np.asarray(list(triples), dtype=np.int64).reshape(-1, 3)
    arr.setflags(write=False)
    return arr


class KnowledgeGraph(BaseModel):
    """Train/valid/test triple arrays sharing one vocabulary."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    vocabulary: Vocabulary
    train: np.ndarray = Field(default_factory=lambda: as_triple_array([]))
    valid: np.ndarray = Field(default_factory=lambda: as_triple_array([]))
    test: np.ndarray = Field(default_factory=lambda: as_triple_array([]))

    @model_validator(mode="after")
    def _check_splits(self) -> KnowledgeGraph:
        n_e, n_r = self.vocabulary.n_entities, self.vocabulary.n_relations
        seen: dict[str, set[tuple[int, int, int]]] = {}
        for split in ("train", "valid", "test"):
            arr = as_triple_array(getattr(self, split).tolist())
            object.__setattr__(self, split, arr)
            if len(arr) and (
                arr[:, [0, 2]].min() < 0
                or arr[:, [0, 2]].max() >= n_e
                or arr[:, 1].min() < 0
                or arr[:, 1].max() >= n_r
            ):
                raise DataError(f"{split} split references ids outside the vocabulary")
            seen[split] = set(map(tuple, arr.tolist()))

        for a, b in (("train", "valid"), ("train", "test"), ("valid", "test")):
            shared = seen[a] & seen[b]
            if shared:
                raise DataError(
                    f"{len(shared)} triples occur in both {a} and {b}, "
                    f"e.g. {self.format_triple(Triple(*min(shared)))}"
                )
        return self

    @property
    def n_entities(self) -> int:
        return self.vocabulary.n_entities

    @property
    def n_relations(self) -> int:
        return self.vocabulary.n_relations

    @property
    def all_triples(self) -> np.ndarray:
        return np.concatenate([self.train, self.valid, self.test])

    @property
    def n_triples(self) -> int:
        return len(self.train) + len(self.valid) + len(self.test)

    def format_triple(self, triple: Triple) -> str:
        v = self.vocabulary
        return (
            f"({v.entities.name_of(triple.head)}, "
            f"{v.relations.name_of(triple.relation)}, "
            f"{v.entities.name_of(triple.tail)})"
        )


class Schema(BaseModel):
    """Domain/range axioms, direct subClassOf edges and asserted entity types."""

    model_config = ConfigDict(frozen=True)

    n_classes: int = Field(..., ge=0, description="Size of the class id space")
    domain: dict[int, int] = Field(default_factory=dict)
    range: dict[int, int] = Field(default_factory=dict)
    subclass_of: frozenset[tuple[int, int]] = Field(default_factory=frozenset)
    types: dict[int, frozenset[int]] = Field(default_factory=dict)

    _hierarchy: nx.DiGraph = PrivateAttr()
    _supers: dict[int, frozenset[int]] = PrivateAttr(default_factory=dict)

    def model_post_init(self, __context: Any) -> None:
        classes = [
            *self.domain.values(),
            *self.range.values(),
            *(c for edge in self.subclass_of for c in edge),
            *(c for ts in self.types.values() for c in ts),
        ]
        bad = [c for c in classes if not 0 <= c < self.n_classes]
        if bad:
            raise SchemaError(f"axioms reference unknown class ids {sorted(set(bad))}")

        # Edges point child -> parent, so descendants are superclasses.
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n_classes))
        graph.add_edges_from(self.subclass_of)
        try:
            cycle = nx.find_cycle(graph)
        except nx.NetworkXNoCycle:
            cycle = None
        if cycle is not None:
            raise SchemaCycleError([str(child) for child, _ in cycle])
        self._hierarchy = graph

    @property
    def hierarchy(self) -> nx.DiGraph:
        return self._hierarchy

    def parents(self, c: int) -> list[int]:
        """Direct superclasses of ``c``."""
        self._check_class(c)
        return sorted(self._hierarchy.successors(c))

    def children(self, c: int) -> list[int]:
        """Direct subclasses of ``c``."""
        self._check_class(c)
        return sorted(self._hierarchy.predecessors(c))

    def is_root(self, c: int) -> bool:
        return self._hierarchy.out_degree(c) == 0

    def types_of(self, e: int) -> frozenset[int]:
        return self.types.get(e, frozenset())

    def _check_class(self, c: int) -> None:
        if not 0 <= c < self.n_classes:
            raise UnknownIdError(f"unknown class id: {c}")


def transitive_superclasses(c: int, schema: Schema) -> frozenset[int]:
    """Reflexive-transitive subClassOf closure upward from ``c``."""
    cached = schema._supers.get(c)
    if cached is not None:
        return cached
    schema._check_class(c)
    closure = frozenset(nx.descendants(schema.hierarchy, c)) | {c}
    schema._supers[c] = closure
    return closure


def type_closure(e: int, schema: Schema) -> frozenset[int]:
    """Every class an entity belongs to once subClassOf is applied."""
    out: set[int] = set()
    for c in schema.types_of(e):
        out |= transitive_superclasses(c, schema)
    return frozenset(out)


def most_specific_classes(e: int, schema: Schema) -> frozenset[int]:
    """Asserted types of ``e`` with no strict subclass also asserted.

    Untyped entities yield an empty set; callers decide how to treat them.
    """
    asserted = schema.types_of(e)
    dominated: set[int] = set()
    for t in asserted:
        dominated |= transitive_superclasses(t, schema) - {t}
    return frozenset(asserted - dominated)


def most_generic_classes(e: int, schema: Schema) -> frozenset[int]:
    """Hierarchy roots reachable upward from any asserted type of ``e``."""
    return frozenset(c for c in type_closure(e, schema) if schema.is_root(c))

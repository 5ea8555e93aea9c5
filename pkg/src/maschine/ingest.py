# src/maschine/ingest.py
"""Readers and writers for tab-separated triple, schema and label files."""

from __future__ import annotations

import hashlib
import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, computed_field

from .config import DatasetLayout
from .errors import DataError, MalformedLineError, SchemaCycleError, SchemaError
from .kg import Interner, KnowledgeGraph, Schema, Vocabulary, as_triple_array

logger = logging.getLogger(__name__)

DOMAIN = "rdfs:domain"
RANGE = "rdfs:range"
SUBCLASS_OF = "rdfs:subClassOf"
TYPE = "rdf:type"
SCHEMA_KEYWORDS = (DOMAIN, RANGE, SUBCLASS_OF, TYPE)

TripleOrder = Literal["hrt", "htr"]


def _iter_rows(path: Path, width: int) -> Iterator[tuple[int, list[str]]]:
    """Yield ``(line_no, fields)`` for every non-blank line of ``path``."""
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            # Whitespace-separated files are accepted when names have no spaces.
            fields = line.split("\t") if "\t" in line else line.split()
            fields = [f.strip() for f in fields]
            if len(fields) != width:
                raise MalformedLineError(
                    path, line_no, line, f"expected {width} fields, got {len(fields)}"
                )
            if not all(fields):
                raise MalformedLineError(path, line_no, line, "empty field")
            yield line_no, fields


def file_digest(path: Path) -> str:
    """sha256 of a file's bytes."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_triples(
    path: Path | str, vocab: Vocabulary, order: TripleOrder = "hrt"
) -> np.ndarray:
    """Read a triple file, interning unseen names into ``vocab`` in file order."""
    path = Path(path)
    rows: list[tuple[int, int, int]] = []
    for _, fields in _iter_rows(path, 3):
        if order == "hrt":
            h, r, t = fields
        else:
            h, t, r = fields
        rows.append(
            (vocab.entities.intern(h), vocab.relations.intern(r), vocab.entities.intern(t))
        )
    logger.debug("loaded %d triples from %s", len(rows), path)
    return as_triple_array(rows)


def save_triples(
    path: Path | str,
    triples: Iterable[tuple[int, int, int]],
    entities: Interner,
    relations: Interner,
    order: TripleOrder = "hrt",
) -> None:
    """Write triples by name; ``entities`` may be the class interner for protographs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for h, r, t in triples:
        head, tail = entities.name_of(int(h)), entities.name_of(int(t))
        rel = relations.name_of(int(r))
        cols = (head, rel, tail) if order == "hrt" else (head, tail, rel)
        lines.append("\t".join(cols))
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


def load_schema(
    path: Path | str, vocab: Vocabulary, *, add_relations: bool = False
) -> Schema:
    """Parse ``subject<TAB>keyword<TAB>object`` axioms into a Schema.

    Classes are interned into ``vocab.classes``. Relations and typed entities
    must already be known to ``vocab`` (they are skipped with a warning
    otherwise) unless ``add_relations`` is set.
    """
    path = Path(path)
    domain: dict[int, int] = {}
    range_: dict[int, int] = {}
    subclass_of: set[tuple[int, int]] = set()
    types: dict[int, set[int]] = {}
    skipped_relations: set[str] = set()
    skipped_entities: set[str] = set()

    def relation_id(name: str) -> int | None:
        if add_relations:
            return vocab.relations.intern(name)
        rid = vocab.relations.get(name)
        if rid is None:
            skipped_relations.add(name)
        return rid

    for line_no, (subject, keyword, obj) in _iter_rows(path, 3):
        if keyword not in SCHEMA_KEYWORDS:
            raise MalformedLineError(path, line_no, keyword, "unknown schema keyword")

        if keyword in (DOMAIN, RANGE):
            rid = relation_id(subject)
            if rid is None:
                continue
            cid = vocab.classes.intern(obj)
            axioms = domain if keyword == DOMAIN else range_
            previous = axioms.setdefault(rid, cid)
            if previous != cid:
                raise SchemaError(
                    f"{path}:{line_no}: relation {subject!r} has two {keyword} axioms "
                    f"({vocab.classes.name_of(previous)}, {obj})"
                )
        elif keyword == SUBCLASS_OF:
            subclass_of.add((vocab.classes.intern(subject), vocab.classes.intern(obj)))
        else:
            cid = vocab.classes.intern(obj)
            eid = vocab.entities.get(subject)
            if eid is None:
                skipped_entities.add(subject)
                continue
            types.setdefault(eid, set()).add(cid)

    if skipped_relations:
        logger.warning(
            "%s: ignored axioms of %d relations absent from the KG",
            path, len(skipped_relations),
        )
    if skipped_entities:
        logger.warning(
            "%s: ignored type assertions of %d entities absent from the KG",
            path, len(skipped_entities),
        )

    try:
        return Schema(
            n_classes=vocab.n_classes,
            domain=domain,
            range=range_,
            subclass_of=frozenset(subclass_of),
            types={e: frozenset(cs) for e, cs in types.items()},
        )
    except SchemaCycleError as exc:
        names = [vocab.classes.name_of(int(c)) for c in exc.cycle]
        raise SchemaCycleError(names) from None


class LabelSet(BaseModel):
    """Gold-standard labels resolved against a vocabulary."""

    labels: dict[int, int] = Field(default_factory=dict, description="entity id -> label id")
    label_names: list[str] = Field(default_factory=list)
    skipped: int = Field(default=0, description="Rows naming unknown entities")

    @computed_field  # type: ignore[prop-decorator]
    @property
    def n_labels(self) -> int:
        return len(self.label_names)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Entity ids and label ids, ordered by entity id."""
        entities = np.array(sorted(self.labels), dtype=np.int64)
        return entities, np.array([self.labels[int(e)] for e in entities], dtype=np.int64)


def load_labels(path: Path | str, vocab: Vocabulary) -> LabelSet:
    """Read ``entity<TAB>label`` rows; unresolvable entities are counted and skipped."""
    path = Path(path)
    label_ids = Interner(kind="label")
    labels: dict[int, int] = {}
    skipped = 0
    for _, (entity, label) in _iter_rows(path, 2):
        eid = vocab.entities.get(entity)
        if eid is None:
            skipped += 1
            continue
        labels[eid] = label_ids.intern(label)

    if skipped:
        logger.warning("%s: %d rows name entities absent from the KG", path, skipped)
    if not labels:
        logger.warning("%s: no row could be resolved against the vocabulary", path)
    return LabelSet(labels=labels, label_names=label_ids.names, skipped=skipped)


@dataclass(frozen=True)
class DatasetBundle:
    """A KG with its schema, as loaded from one dataset directory."""

    name: str
    kg: KnowledgeGraph
    schema: Schema
    file_digests: dict[str, str] = field(default_factory=dict)

    @property
    def incomplete_relations(self) -> list[int]:
        """Relations lacking a domain or a range axiom."""
        s = self.schema
        return [
            r for r in range(self.kg.n_relations) if r not in s.domain or r not in s.range
        ]


def load_dataset(
    directory: Path | str, layout: DatasetLayout | None = None, name: str | None = None
) -> DatasetBundle:
    """Load train/valid/test and the schema of a dataset directory."""
    directory = Path(directory)
    layout = layout or DatasetLayout()
    vocab = Vocabulary()
    splits: dict[str, np.ndarray] = {}
    digests: dict[str, str] = {}

    for split in ("train", "valid", "test"):
        file = directory / getattr(layout, split)
        if not file.exists():
            if split == "train":
                raise DataError(f"missing training file: {file}")
            logger.warning("no %s split at %s", split, file)
            splits[split] = as_triple_array([])
            continue
        splits[split] = load_triples(file, vocab, layout.triple_order)
        digests[file.name] = file_digest(file)

    schema_file = directory / layout.schema_file
    if schema_file.exists():
        schema = load_schema(schema_file, vocab)
        digests[schema_file.name] = file_digest(schema_file)
    else:
        logger.warning("no schema file at %s", schema_file)
        schema = Schema(n_classes=0)

    kg = KnowledgeGraph(vocabulary=vocab, **splits)
    bundle = DatasetBundle(
        name=name or directory.name, kg=kg, schema=schema, file_digests=digests
    )
    if bundle.incomplete_relations:
        logger.info(
            "%d of %d relations lack a domain or range axiom",
            len(bundle.incomplete_relations), kg.n_relations,
        )
    return bundle

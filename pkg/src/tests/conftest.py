# tests/conftest.py
"""Shared test fixtures and configuration."""

from __future__ import annotations

import json
from collections.abc import Callable, Iterator
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
import pytest

from maschine.ingest import DatasetBundle, load_dataset
from maschine.kg import Schema, Vocabulary

TOY_DIR = Path(__file__).parent / "data" / "toy"


@pytest.fixture
def temp_dir() -> Iterator[Path]:
    """Create temporary directory for tests."""
    with TemporaryDirectory() as temp_dir:
        yield Path(temp_dir)


@pytest.fixture
def toy_dir() -> Path:
    """Bundled toy dataset: 15 entities, 7 relations, 10 classes."""
    return TOY_DIR


@pytest.fixture
def toy(toy_dir: Path) -> DatasetBundle:
    return load_dataset(toy_dir)


@pytest.fixture
def toy_copy(temp_dir: Path, toy_dir: Path) -> Path:
    """Writable copy of the toy dataset."""
    target = temp_dir / "toy"
    target.mkdir()
    for file in toy_dir.iterdir():
        (target / file.name).write_bytes(file.read_bytes())
    return target


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def diamond_schema() -> tuple[Vocabulary, Schema]:
    """A <- B, A <- C, B <- D, C <- D, with entity x typed D and B."""
    vocab = Vocabulary()
    a, b, c, d = (vocab.classes.intern(n) for n in "ABCD")
    x = vocab.entities.intern("x")
    schema = Schema(
        n_classes=4,
        subclass_of=frozenset({(b, a), (c, a), (d, b), (d, c)}),
        types={x: frozenset({d, b})},
    )
    return vocab, schema


@pytest.fixture
def make_runspec(temp_dir: Path) -> Callable[..., Path]:
    """Writer of small, fast run specs for pipeline and CLI tests."""

    def write(
        dataset: Path, output: Path, name: str = "runspec.json", **overrides: object
    ) -> Path:
        spec = {
            "dataset": str(dataset),
            "model": overrides.pop("model", "transe"),
            "setting": overrides.pop("setting", "V"),
            "output": str(output),
            "seed": overrides.pop("seed", 0),
            "train": {
                "dim": 8,
                "epochs_kg": 4,
                "epochs_proto": 2,
                "eval_every": 2,
                "batch_size": 8,
                "learning_rate": 0.01,
                **overrides,
            },
        }
        path = temp_dir / name
        path.write_text(json.dumps(spec), encoding="utf-8")
        return path

    return write


@pytest.fixture(autouse=True)
def reset_report_templates() -> Iterator[None]:
    """Reset the global report template registry after each test."""
    from maschine.reports import REPORT_TEMPLATES

    original = REPORT_TEMPLATES.templates.copy()

    yield

    REPORT_TEMPLATES.templates.clear()
    REPORT_TEMPLATES.templates.update(original)
    REPORT_TEMPLATES._environment = None

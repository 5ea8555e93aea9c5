#!/usr/bin/env -S uv run
# /// script
# requires-python = ">=3.11"
# dependencies = [
#   "typer>=0.12",
#   "rich>=13",
#   "numpy>=1.24"
# ]
# ///
"""Generate a typed synthetic KG with a two-level class hierarchy.

Writes train/valid/test/schema files in the layout ``maschine`` reads, plus a
``labels.txt`` mapping every entity to its root class.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import typer
from rich.console import Console

app = typer.Typer(add_completion=False, no_args_is_help=True)
console = Console()


def _write(path: Path, rows: list[tuple[str, str, str]] | list[tuple[str, str]]) -> None:
    path.write_text("".join("\t".join(row) + "\n" for row in rows), encoding="utf-8")


@app.command()
def main(
    out: Path = typer.Argument(..., help="Dataset directory to create"),
    roots: int = typer.Option(3, min=2, help="Root classes"),
    children: int = typer.Option(2, min=1, help="Subclasses per root"),
    entities_per_class: int = typer.Option(20, min=2, help="Entities typed by each leaf class"),
    relations: int = typer.Option(6, min=1, help="Relations with domain and range"),
    triples_per_relation: int = typer.Option(60, min=3, help="Facts sampled per relation"),
    untyped: int = typer.Option(5, min=0, help="Entities without any type"),
    seed: int = typer.Option(0, help="Random seed"),
    force: bool = typer.Option(False, "--force", "-f", help="Overwrite an existing directory"),
) -> None:
    """Create a dataset whose facts respect domain and range axioms."""
    if out.exists() and any(out.iterdir()) and not force:
        console.print(f"❌ {out} is not empty. Use --force to overwrite.", style="red")
        raise typer.Exit(1)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    schema: list[tuple[str, str, str]] = []
    labels: list[tuple[str, str]] = []
    leaves: dict[str, list[str]] = {}
    members: dict[str, list[str]] = {}

    for r in range(roots):
        root = f"Root{r}"
        members[root] = []
        for c in range(children):
            leaf = f"Class{r}_{c}"
            schema.append((leaf, "rdfs:subClassOf", root))
            names = [f"e{r}_{c}_{i}" for i in range(entities_per_class)]
            leaves[leaf] = names
            members[leaf] = names
            members[root].extend(names)
            schema.extend((name, "rdf:type", leaf) for name in names)
            labels.extend((name, root) for name in names)

    # Axioms mix roots and leaves so P2 has subclasses to expand.
    candidates = sorted(members)
    facts: set[tuple[str, str, str]] = set()
    for i in range(relations):
        rel = f"rel{i}"
        domain, range_ = rng.choice(candidates, size=2)
        schema.append((rel, "rdfs:domain", str(domain)))
        schema.append((rel, "rdfs:range", str(range_)))
        heads = rng.choice(members[str(domain)], size=triples_per_relation)
        tails = rng.choice(members[str(range_)], size=triples_per_relation)
        facts.update((str(h), rel, str(t)) for h, t in zip(heads, tails, strict=True) if h != t)

    every_typed = [name for names in leaves.values() for name in names]
    for u in range(untyped):
        facts.add((f"untyped{u}", "related", str(rng.choice(every_typed))))

    ordered = sorted(facts)
    order = rng.permutation(len(ordered))
    n_held = max(1, len(ordered) // 10)
    valid = [ordered[i] for i in order[:n_held]]
    test = [ordered[i] for i in order[n_held : 2 * n_held]]
    train = [ordered[i] for i in order[2 * n_held :]]

    _write(out / "train.txt", train)
    _write(out / "valid.txt", valid)
    _write(out / "test.txt", test)
    _write(out / "schema.txt", schema)
    _write(out / "labels.txt", labels)
    console.print(
        f"✅ {len(train)}/{len(valid)}/{len(test)} train/valid/test triples, "
        f"{len(members)} classes written to {out}",
        style="green",
    )


if __name__ == "__main__":
    app()

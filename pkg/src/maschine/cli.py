# src/maschine/cli.py
"""Command line interface for maschine."""

from __future__ import annotations

from collections.abc import Iterator
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Annotated, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .config import (
    DATA_ROOT_ENV,
    DatasetLayout,
    Heuristic,
    RunSpec,
    TrainConfig,
    data_root,
    resolve_dataset_dir,
)
from .downstream import (
    entity_clustering_eval,
    export_pca_csv,
    label_clustering_eval,
    nc_eval,
    pca_2d,
    root_class_labels,
)
from .errors import DataError, MaschineError
from .eval_lp import FilterIndex, evaluate_link_prediction
from .ingest import DatasetBundle, file_digest, load_dataset, load_labels
from .kgem import CheckpointHeader, export_embeddings, load_checkpoint, relation_row_names, save_checkpoint
from .log import configure_logging
from .protograph import build_mapping, build_protograph, export_mapping, export_protograph
from .reports import (
    EvaluationRecord,
    MetricReport,
    RunManifest,
    render_cluster_table,
    render_lp_table,
    render_metric_report,
    render_nc_table,
    render_stats_table,
    write_json,
)
from .training import run_maschine

console = Console()
app = typer.Typer(
    name="maschine",
    help="Protograph pre-training and evaluation of knowledge graph embeddings",
    rich_markup_mode="rich",
    no_args_is_help=True,
)

CHECKPOINT_FILE = "checkpoint.bin"
EMBEDDINGS_FILE = "embeddings.txt"
MANIFEST_FILE = "manifest.json"


class HeuristicChoice(str, Enum):
    p1 = "p1"
    p2 = "p2"


class TaskChoice(str, Enum):
    lp = "lp"
    cluster = "cluster"
    classify = "classify"
    pca = "pca"


@contextmanager
def reporting_errors() -> Iterator[None]:
    """Turn library errors into a red message and the matching exit code."""
    try:
        yield
    except ValidationError as exc:
        console.print(f"❌ Configuration error: {exc}", style="red")
        raise typer.Exit(2) from None
    except MaschineError as exc:
        console.print(f"❌ {exc}", style="red")
        raise typer.Exit(exc.exit_code) from None
    except OSError as exc:
        console.print(f"❌ {exc}", style="red")
        raise typer.Exit(3) from None


def _load(dataset: str, layout: DatasetLayout | None = None) -> DatasetBundle:
    directory = resolve_dataset_dir(dataset)
    with console.status(f"[bold blue]Loading {directory}..."):
        return load_dataset(directory, layout)


@app.callback()
def main(
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging")] = False,
) -> None:
    configure_logging(verbose)


@app.command("build-protograph", no_args_is_help=True)
def build_protograph_cmd(
    dataset: Annotated[str, typer.Option("--dataset", "-d", help=f"Dataset directory (or name under ${DATA_ROOT_ENV})")],
    heuristic: Annotated[HeuristicChoice, typer.Option("--heuristic", help="Protograph heuristic")],
    out: Annotated[Path, typer.Option("--out", "-o", help="Output directory")],
) -> None:
    """Build a P1 or P2 protograph with its mapping dictionary."""
    with reporting_errors():
        layout = DatasetLayout()
        schema_file = resolve_dataset_dir(dataset) / layout.schema_file
        if not schema_file.exists():
            raise DataError(f"missing schema file: {schema_file}")
        bundle = _load(dataset, layout)
        vocab = bundle.kg.vocabulary
        proto = build_protograph(bundle.schema, range(bundle.kg.n_relations), heuristic.value)
        mapping = build_mapping(bundle.kg, bundle.schema)

        out.mkdir(parents=True, exist_ok=True)
        export_protograph(out / "protograph.txt", proto, vocab)
        export_mapping(out / "mapping.txt", mapping, vocab)
        (out / "stats.txt").write_text(proto.stats_line() + "\n", encoding="utf-8")

    console.print(proto.stats_line())
    console.print(
        Panel.fit(
            f"[bold green]✅ {heuristic.value.upper()} protograph written to {out}[/bold green]\n"
            f"{len(mapping.mapping)} typed entities mapped, {len(mapping.untyped)} untyped",
            border_style="green",
        )
    )


@app.command(no_args_is_help=True)
def train(
    spec: Annotated[Path, typer.Option("--spec", "-s", exists=True, dir_okay=False, help="runspec.json")],
    threads: Annotated[
        Optional[int], typer.Option("--threads", min=1, help="Evaluation threads")
    ] = None,
) -> None:
    """Run vanilla or protograph-initialised training from a run spec."""
    with reporting_errors():
        run_spec = RunSpec.model_validate_json(spec.read_text(encoding="utf-8"))
        config = run_spec.train_config(threads)
        bundle = _load(str(run_spec.dataset), run_spec.layout)
        with console.status(f"[bold blue]Training {config.model} ({config.setting})..."):
            run = run_maschine(bundle, config)

        vocab = bundle.kg.vocabulary
        best = run.checkpoint
        out = run_spec.output
        header = CheckpointHeader(
            model=config.model,
            dim=config.dim,
            n_entities=best.params.n_entities,
            n_relations=best.params.n_relations,
            inverse_relations=best.params.inverse_relations,
            transe_norm=best.params.transe_norm,
            vocab_hash=vocab.digest(),
            epoch=best.epoch,
            seed=config.seed,
            valid_mrr=best.valid_mrr,
            setting=config.setting,
            dataset=bundle.name,
        )
        save_checkpoint(out / CHECKPOINT_FILE, best.params, header)
        export_embeddings(
            out / EMBEDDINGS_FILE,
            best.params,
            vocab.entities.names,
            relation_row_names(best.params, vocab),
        )
        manifest = RunManifest(
            dataset=bundle.name,
            input_digests={"runspec.json": file_digest(spec), **bundle.file_digests},
            vocab_hash=vocab.digest(),
            config=config,
            stages=run.stages,
            timings=run.timings,
            best_epoch=best.epoch,
            valid_mrr=best.valid_mrr,
            protograph_stats=run.protograph.stats_line() if run.protograph else None,
            transfer=run.transfer_report,
            checkpoint=CHECKPOINT_FILE,
            embeddings=EMBEDDINGS_FILE,
        )
        write_json(out / MANIFEST_FILE, manifest)

    table = Table(title=f"🏁 {bundle.name}: {config.model} / {config.setting}")
    table.add_column("Stage", style="cyan")
    table.add_column("Seconds", justify="right")
    for stage in run.stages:
        table.add_row(stage, f"{run.timings.get(stage, 0.0):.2f}")
    console.print(table)
    mrr = "n/a" if best.valid_mrr is None else f"{best.valid_mrr:.4f}"
    console.print(f"✅ Best epoch {best.epoch} (valid MRR {mrr}); outputs in {out}", style="green")


@app.command(no_args_is_help=True)
def evaluate(
    checkpoint: Annotated[Path, typer.Option("--checkpoint", "-c", exists=True, dir_okay=False)],
    dataset: Annotated[str, typer.Option("--dataset", "-d", help="Dataset the checkpoint was trained on")],
    task: Annotated[TaskChoice, typer.Option("--task", "-t", help="Evaluation task")],
    labels: Annotated[
        Optional[Path], typer.Option("--labels", exists=True, dir_okay=False, help="Gold labels (entity<TAB>label)")
    ] = None,
    test_labels: Annotated[
        Optional[Path], typer.Option("--test-labels", exists=True, dir_okay=False, help="Held-out labels for classify")
    ] = None,
    out: Annotated[Optional[Path], typer.Option("--out", "-o", help="Report directory")] = None,
    seed: Annotated[int, typer.Option("--seed", help="Seed for k-means and splits")] = 0,
    threads: Annotated[int, typer.Option("--threads", min=1, help="Ranking threads")] = 1,
) -> None:
    """Evaluate a checkpoint on link prediction, clustering, classification or PCA."""
    with reporting_errors():
        bundle = _load(dataset)
        vocab = bundle.kg.vocabulary
        params, header = load_checkpoint(checkpoint, expected_vocab_hash=vocab.digest())
        out = out or checkpoint.parent
        record = EvaluationRecord(
            task=task.value,
            dataset=bundle.name,
            model=header.model,
            setting=header.setting,
            epoch=header.epoch,
            vocab_hash=header.vocab_hash,
        )
        setting = record.setting
        text = ""

        with console.status(f"[bold blue]Running {task.value}..."):
            if task is TaskChoice.lp:
                kg = bundle.kg
                record.lp = evaluate_link_prediction(
                    params, kg.test, FilterIndex([kg.train, kg.valid, kg.test]), bundle.schema,
                    threads=threads,
                )
                text = render_lp_table({setting: record.lp})
            elif task is TaskChoice.cluster:
                if labels is not None:
                    record.cluster = label_clustering_eval(params, load_labels(labels, vocab), seed)
                else:
                    record.cluster = entity_clustering_eval(params, bundle.schema, seed)
                text = render_cluster_table({setting: record.cluster})
            elif task is TaskChoice.classify:
                if labels is None:
                    raise typer.BadParameter("classify needs --labels", param_hint="--labels")
                held_out = load_labels(test_labels, vocab) if test_labels else None
                record.classification = nc_eval(params, load_labels(labels, vocab), held_out, seed)
                text = render_nc_table({setting: record.classification})
            else:
                names, gold = _pca_labels(bundle, labels)
                export_pca_csv(out / "pca.csv", names, gold, pca_2d(params.entity))
                text = f"PCA coordinates written to {out / 'pca.csv'}\n"

        write_json(out / f"eval_{task.value}.json", record)
        if task is not TaskChoice.pca:
            (out / f"eval_{task.value}.txt").write_text(text, encoding="utf-8")

    console.print(text, end="", markup=False, highlight=False)


def _pca_labels(bundle: DatasetBundle, labels: Path | None) -> tuple[list[str], list[str]]:
    vocab = bundle.kg.vocabulary
    names = vocab.entities.names
    if labels is not None:
        label_set = load_labels(labels, vocab)
        gold = {e: label_set.label_names[i] for e, i in label_set.labels.items()}
    else:
        roots, _, _ = root_class_labels(bundle.schema, bundle.kg.n_entities)
        gold = {e: vocab.classes.name_of(c) for e, c in roots.items()}
    return list(names), [gold.get(e, "") for e in range(len(names))]


@app.command(no_args_is_help=True)
def stats(
    dataset: Annotated[str, typer.Option("--dataset", "-d", help="Dataset directory")],
) -> None:
    """Show |E|, |R| and |T| of a KG and of its P1 and P2 protographs."""
    with reporting_errors():
        bundle = _load(dataset)
        kg, schema = bundle.kg, bundle.schema
        rows = [(bundle.name, kg.n_entities, kg.n_relations, kg.n_triples)]
        heuristics: tuple[Heuristic, ...] = ("p1", "p2")
        for heuristic in heuristics:
            proto = build_protograph(schema, range(kg.n_relations), heuristic)
            rows.append((heuristic.upper(), len(proto.classes), len(proto.relations), proto.n_triples))
    console.print(render_stats_table(rows), end="", markup=False, highlight=False)


@app.command(no_args_is_help=True)
def compare(
    reports: Annotated[list[Path], typer.Argument(exists=True, dir_okay=False, help="eval_*.json files")],
    out: Annotated[Optional[Path], typer.Option("--out", "-o", help="Write the merged report here")] = None,
) -> None:
    """Merge evaluation reports of V, P1 and P2 runs into one table."""
    with reporting_errors():
        records = [
            EvaluationRecord.model_validate_json(path.read_text(encoding="utf-8")) for path in reports
        ]
        merged = MetricReport.merge(records)
        if out is not None:
            write_json(out, merged)
    console.print(render_metric_report(merged), end="", markup=False, highlight=False)


@app.command()
def config() -> None:
    """Show training defaults and the dataset root."""
    table = Table(title="⚙️ Configuration")
    table.add_column("Setting", style="cyan")
    table.add_column("Value", style="white")

    root = data_root()
    table.add_row(DATA_ROOT_ENV, str(root) if root else "(unset)")
    if root is not None:
        table.add_row("Data root exists", "✅ Yes" if root.is_dir() else "❌ No")
    for name, value in TrainConfig().model_dump().items():
        table.add_row(name, str(value))

    console.print(table)


if __name__ == "__main__":
    app()

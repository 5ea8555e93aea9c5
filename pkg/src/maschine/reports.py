# src/maschine/reports.py
"""Report models, JSON output and plain-text tables rendered with Jinja2."""

from __future__ import annotations

from collections.abc import Callable, Iterable, Mapping
from pathlib import Path
from typing import Literal

from jinja2 import BaseLoader, Environment, StrictUndefined, TemplateNotFound
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from . import __version__
from .config import ModelKind, Setting, TrainConfig
from .downstream import ClusterReport, NCReport
from .errors import DataError
from .eval_lp import LPReport
from .training import TransferReport

Task = Literal["lp", "cluster", "classify", "pca"]
SETTING_ORDER: tuple[Setting, ...] = ("V", "P1", "P2")


class ReportLoader(BaseLoader):
    """Jinja2 loader reading from a ReportTemplates registry."""

    def __init__(self, registry: ReportTemplates) -> None:
        self.registry = registry

    def get_source(
        self, environment: Environment, template: str
    ) -> tuple[str, str | None, Callable[[], bool] | None]:
        source = self.registry.templates.get(template)
        if source is None:
            raise TemplateNotFound(template)
        return source, template, lambda: True


def metric(value: float | None, width: int = 7) -> str:
    """Three decimals, right-aligned; ``-`` for a metric that does not apply."""
    if value is None:
        return "-".rjust(width)
    return f"{value:{width}.3f}"


class ReportTemplates(BaseModel):
    """Table templates loaded from ``*.j2`` files next to this module."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    templates: dict[str, str] = Field(default_factory=dict, description="Template name to source")
    templates_dir: Path = Field(
        default_factory=lambda: Path(__file__).parent / "templates",
        description="Directory holding the .j2 files",
    )

    _environment: Environment | None = PrivateAttr(default=None)

    def model_post_init(self, __context: object) -> None:
        if self.templates_dir.exists():
            for file in sorted(self.templates_dir.glob("*.j2")):
                self.templates.setdefault(file.name, file.read_text(encoding="utf-8"))

    @property
    def environment(self) -> Environment:
        if self._environment is None:
            env = Environment(
                loader=ReportLoader(self),
                trim_blocks=True,
                lstrip_blocks=True,
                keep_trailing_newline=True,
                undefined=StrictUndefined,
            )
            env.filters["metric"] = metric
            self._environment = env
        return self._environment

    def render(self, name: str, **context: object) -> str:
        return self.environment.get_template(name).render(**context)

    def list_templates(self) -> list[str]:
        return sorted(self.templates)

    def has_template(self, name: str) -> bool:
        return name in self.templates

    def add_template(self, name: str, content: str) -> None:
        self.templates[name] = content
        self._environment = None


REPORT_TEMPLATES = ReportTemplates()


class EvaluationRecord(BaseModel):
    """What ``evaluate`` writes: one task's report plus where it came from."""

    task: Task
    dataset: str
    model: ModelKind
    setting: Setting
    epoch: int
    vocab_hash: str
    lp: LPReport | None = None
    cluster: ClusterReport | None = None
    classification: NCReport | None = None


class MetricReport(BaseModel):
    """Results of one dataset/model pair keyed by setting."""

    dataset: str
    model: ModelKind
    lp: dict[Setting, LPReport] = Field(default_factory=dict)
    cluster: dict[Setting, ClusterReport] = Field(default_factory=dict)
    classification: dict[Setting, NCReport] = Field(default_factory=dict)

    @classmethod
    def merge(cls, records: Iterable[EvaluationRecord]) -> MetricReport:
        """Combine evaluation records of one dataset and model; later records win."""
        records = list(records)
        if not records:
            raise DataError("no evaluation records to compare")
        first = records[0]
        report = cls(dataset=first.dataset, model=first.model)
        for rec in records:
            if (rec.dataset, rec.model) != (first.dataset, first.model):
                raise DataError(
                    f"cannot compare {rec.dataset}/{rec.model} with {first.dataset}/{first.model}"
                )
            if rec.lp is not None:
                report.lp[rec.setting] = rec.lp
            if rec.cluster is not None:
                report.cluster[rec.setting] = rec.cluster
            if rec.classification is not None:
                report.classification[rec.setting] = rec.classification
        return report


class RunManifest(BaseModel):
    """Everything needed to re-derive a training run."""

    version: str = __version__
    dataset: str
    input_digests: dict[str, str] = Field(default_factory=dict, description="sha256 per input file")
    vocab_hash: str
    config: TrainConfig
    stages: list[str] = Field(default_factory=list)
    timings: dict[str, float] = Field(default_factory=dict, description="Seconds per stage")
    best_epoch: int
    valid_mrr: float | None = None
    protograph_stats: str | None = Field(default=None, description="|E| |R| |T| of the protograph")
    transfer: TransferReport | None = None
    checkpoint: str
    embeddings: str


def write_json(path: Path | str, model: BaseModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def _ordered(results: Mapping[Setting, object]) -> list[tuple[str, object]]:
    return [(s, results[s]) for s in SETTING_ORDER if s in results]


def render_lp_table(rows: dict[Setting, LPReport]) -> str:
    return REPORT_TEMPLATES.render("lp_table.txt.j2", rows=_ordered(rows))


def render_cluster_table(rows: dict[Setting, ClusterReport]) -> str:
    return REPORT_TEMPLATES.render("cluster_table.txt.j2", rows=_ordered(rows))


def render_nc_table(rows: dict[Setting, NCReport]) -> str:
    return REPORT_TEMPLATES.render("nc_table.txt.j2", rows=_ordered(rows))


def render_stats_table(rows: list[tuple[str, int, int, int]]) -> str:
    """Rows of ``(graph, |E|, |R|, |T|)``."""
    return REPORT_TEMPLATES.render("stats_table.txt.j2", rows=rows)


def render_metric_report(report: MetricReport) -> str:
    parts = [f"{report.dataset} / {report.model}\n"]
    if report.lp:
        parts.append(render_lp_table(report.lp))
    if report.cluster:
        parts.append(render_cluster_table(report.cluster))
    if report.classification:
        parts.append(render_nc_table(report.classification))
    return "\n".join(parts)

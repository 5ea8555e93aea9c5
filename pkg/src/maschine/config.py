# src/maschine/config.py
"""Configuration models for maschine runs."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    computed_field,
    model_validator,
)

from .errors import DataError

ModelKind = Literal["transe", "distmult", "complex", "tucker"]
Setting = Literal["V", "P1", "P2"]
Heuristic = Literal["p1", "p2"]

DATA_ROOT_ENV = "MASCHINE_DATA_ROOT"
DERIVED_FIELDS = frozenset({"uses_protograph", "total_epochs"})


class TrainConfig(BaseModel):
    """Hyperparameters shared by protograph pre-training and KG fine-tuning."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    model: ModelKind = Field(default="transe", description="Embedding model")
    setting: Setting = Field(default="V", description="Training setting")
    dim: PositiveInt = Field(default=100, description="Embedding dimension d")

    epochs_kg: NonNegativeInt = Field(default=400, description="Epochs on the KG")
    epochs_proto: NonNegativeInt = Field(
        default=200, description="Pre-training epochs on the protograph"
    )
    eval_every: PositiveInt = Field(default=10, description="Validation period (epochs)")
    batch_size: PositiveInt = Field(default=512, description="Triples per batch")
    learning_rate: PositiveFloat = Field(default=1e-3, description="Step size")
    negatives_per_positive: PositiveInt = Field(
        default=1, description="Uniform negatives drawn per training triple"
    )
    optimizer: Literal["adam", "sgd"] = Field(default="adam", description="Optimizer")
    adam_beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: PositiveFloat = Field(default=1e-8)
    seed: int = Field(default=0, description="Seed for init, shuffling and sampling")

    # Loss settings
    margin: PositiveFloat = Field(default=1.0, description="Margin for ranking losses")
    label_smoothing: float = Field(
        default=0.1, ge=0.0, lt=1.0, description="1-N label smoothing (TuckER)"
    )
    transe_norm: Literal[1, 2] = Field(default=2, description="TransE distance norm")
    normalize_entities: bool = Field(
        default=True, description="Project TransE entity rows to the unit sphere"
    )

    threads: PositiveInt = Field(default=1, description="Evaluation worker threads")

    @model_validator(mode="before")
    @classmethod
    def _drop_derived(cls, data: Any) -> Any:
        # Dumps carry the computed fields; accept them back.
        if isinstance(data, dict):
            return {k: v for k, v in data.items() if k not in DERIVED_FIELDS}
        return data

    @model_validator(mode="after")
    def _check_schedule(self) -> TrainConfig:
        for name in ("epochs_kg", "epochs_proto"):
            epochs = getattr(self, name)
            if epochs % self.eval_every:
                raise ValueError(
                    f"{name}={epochs} is not a multiple of eval_every={self.eval_every}"
                )
        return self

    @computed_field  # type: ignore[prop-decorator]
    @property
    def uses_protograph(self) -> bool:
        """Whether the run pre-trains on a protograph."""
        return self.setting != "V"

    @computed_field  # type: ignore[prop-decorator]
    @property
    def total_epochs(self) -> int:
        """Epochs over both stages (600 with the defaults and a protograph)."""
        return self.epochs_kg + (self.epochs_proto if self.uses_protograph else 0)

    @property
    def heuristic(self) -> Heuristic | None:
        """Protograph heuristic implied by the setting."""
        if self.setting == "V":
            return None
        return "p1" if self.setting == "P1" else "p2"


class DatasetLayout(BaseModel):
    """File names and field order of a dataset directory."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    train: str = Field(default="train.txt")
    valid: str = Field(default="valid.txt")
    test: str = Field(default="test.txt")
    schema_file: str = Field(default="schema.txt", alias="schema")
    triple_order: Literal["hrt", "htr"] = Field(
        default="hrt", description="Column order of triple files"
    )


class RunSpec(BaseModel):
    """A reproducible run, as read from ``runspec.json``."""

    model_config = ConfigDict(extra="forbid")

    dataset: Path = Field(..., description="Dataset directory or name under the data root")
    model: ModelKind = Field(default="transe")
    setting: Setting = Field(default="V")
    output: Path = Field(..., description="Output directory")
    seed: int = Field(default=0)
    train: dict[str, Any] = Field(
        default_factory=dict, description="TrainConfig overrides"
    )
    layout: DatasetLayout = Field(default_factory=DatasetLayout)

    def train_config(self, threads: int | None = None) -> TrainConfig:
        """Merge the overrides with the spec-level model, setting and seed."""
        values: dict[str, Any] = {**self.train}
        values.update(model=self.model, setting=self.setting, seed=self.seed)
        if threads is not None:
            values["threads"] = threads
        return TrainConfig(**values)


def data_root() -> Path | None:
    """Default dataset root from the environment, if set."""
    root = os.getenv(DATA_ROOT_ENV)
    return Path(root) if root else None


def resolve_dataset_dir(value: Path | str) -> Path:
    """Return ``value`` if it exists, else look it up under the data root."""
    path = Path(value)
    if path.is_dir():
        return path

    root = data_root()
    if root is not None and (root / path).is_dir():
        return root / path

    hint = f" (also looked under ${DATA_ROOT_ENV}={root})" if root else ""
    raise DataError(f"dataset directory not found: {path}{hint}")

# src/maschine/training.py
"""Negative sampling, losses, optimizers and the protograph-then-KG pipeline."""

from __future__ import annotations

import logging
import time
from collections import defaultdict
from collections.abc import Callable
from typing import Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field

from .config import ModelKind, Setting, TrainConfig
from .errors import DataError, NumericalAbort, TransferError
from .eval_lp import FilterIndex, evaluate_link_prediction
from .ingest import DatasetBundle
from .kg import Triple
from .kgem import (
    INVERSE_RELATION_MODELS,
    ModelParams,
    ParamGrads,
    init_params,
    score_tails_batch,
    score_triples,
    triple_grads,
    tucker_one_to_n_backward,
)
from .protograph import MappingDictionary, Protograph, build_mapping, build_protograph

logger = logging.getLogger(__name__)

STAGE_SALT = {"train-proto": 1, "train-kg": 2, "transfer": 3}


# --- negative sampling -------------------------------------------------------


def sample_negatives(
    triples: np.ndarray, n_entities: int, rng: np.random.Generator, per_positive: int = 1
) -> np.ndarray:
    """Corrupt head or tail (fair coin) of each triple ``per_positive`` times.

    Row ``i * per_positive + j`` corrupts ``triples[i]``. A draw equal to the
    replaced entity is redrawn, so no negative equals its positive.
    """
    if n_entities < 2:
        raise DataError("negative sampling needs at least 2 entities")
    positives = np.repeat(np.asarray(triples, dtype=np.int64).reshape(-1, 3), per_positive, axis=0)
    negatives = positives.copy()
    column = np.where(rng.random(len(positives)) < 0.5, 0, 2)
    pending = np.arange(len(positives))
    while pending.size:
        draws = rng.integers(0, n_entities, size=pending.size)
        negatives[pending, column[pending]] = draws
        pending = pending[draws == positives[pending, column[pending]]]
    return negatives


def sample_negative(triple: Triple | tuple[int, int, int], n_entities: int, rng: np.random.Generator) -> Triple:
    return Triple(*sample_negatives(np.array([triple]), n_entities, rng)[0].tolist())


# --- losses ------------------------------------------------------------------


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def margin_loss(
    params: ModelParams, positives: np.ndarray, negatives: np.ndarray, margin: float
) -> tuple[float, ParamGrads]:
    """Mean of ``max(0, margin + s(neg) - s(pos))`` over negatives."""
    per = len(negatives) // len(positives)
    pos = np.repeat(positives, per, axis=0)
    s_pos = score_triples(params, pos[:, 0], pos[:, 1], pos[:, 2])
    s_neg = score_triples(params, negatives[:, 0], negatives[:, 1], negatives[:, 2])
    hinge = margin + s_neg - s_pos
    n = len(negatives)
    active = (hinge > 0).astype(params.entity.dtype) / n

    grads = ParamGrads.zeros_like(params)
    for rows, sign in ((pos, -1.0), (negatives, 1.0)):
        h, r, t = rows[:, 0], rows[:, 1], rows[:, 2]
        grads.add_triples(h, r, t, triple_grads(params, h, r, t, sign * active))
    return float(np.mean(np.maximum(hinge, 0.0))), grads


def softplus_loss(
    params: ModelParams, positives: np.ndarray, negatives: np.ndarray
) -> tuple[float, ParamGrads]:
    """Mean logistic loss ``log(1 + exp(-y * s))`` with y = +1 / -1."""
    rows = np.concatenate([positives, negatives])
    y = np.concatenate([np.ones(len(positives)), -np.ones(len(negatives))])
    h, r, t = rows[:, 0], rows[:, 1], rows[:, 2]
    s = score_triples(params, h, r, t).astype(np.float64)
    n = len(rows)
    upstream = -y * _sigmoid(-y * s) / n

    grads = ParamGrads.zeros_like(params)
    grads.add_triples(h, r, t, triple_grads(params, h, r, t, upstream))
    return float(np.mean(np.logaddexp(0.0, -y * s))), grads


def smooth_labels(targets: np.ndarray, label_smoothing: float) -> np.ndarray:
    """``(1 - eps) * y + eps / N`` over the entity axis."""
    n = targets.shape[-1]
    return (1.0 - label_smoothing) * targets + label_smoothing / n


def bce_one_to_n_loss(
    params: ModelParams, queries: np.ndarray, targets: np.ndarray, label_smoothing: float
) -> tuple[float, ParamGrads]:
    """Binary cross-entropy of every ``(h, r, e)`` against 0/1 ``targets`` (B x |E|)."""
    if params.model != "tucker":
        raise ValueError("1-N scoring is implemented for TuckER only")
    h, r = queries[:, 0], queries[:, 1]
    logits = score_tails_batch(params, h, r).astype(np.float64)
    y = smooth_labels(targets.astype(np.float64), label_smoothing)
    loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))
    dlogits = ((_sigmoid(logits) - y) / logits.size).astype(params.entity.dtype)

    grads = ParamGrads.zeros_like(params)
    tucker_one_to_n_backward(params, h, r, dlogits, grads)
    return loss, grads


def loss_and_grads(
    params: ModelParams,
    positives: np.ndarray,
    negatives: np.ndarray | None = None,
    targets: np.ndarray | None = None,
    *,
    margin: float = 1.0,
    label_smoothing: float = 0.1,
) -> tuple[float, ParamGrads]:
    """Loss of the model's own recipe and its gradient.

    TransE and DistMult use the margin ranking loss, ComplEx the logistic
    loss, TuckER 1-N BCE, where ``positives`` are ``(h, r)`` queries and
    ``targets`` the 0/1 answer matrix.
    """
    if len(positives) == 0:
        raise ValueError("empty batch")
    if params.model == "tucker":
        if targets is None:
            raise ValueError("TuckER needs 1-N targets")
        return bce_one_to_n_loss(params, positives, targets, label_smoothing)
    if negatives is None or len(negatives) == 0:
        raise ValueError(f"{params.model} needs a negative batch")
    if params.model == "complex":
        return softplus_loss(params, positives, negatives)
    return margin_loss(params, positives, negatives, margin)


# --- optimizers --------------------------------------------------------------


class Optimizer(Protocol):
    def step(self, params: ModelParams, grads: ParamGrads) -> None: ...


class SGD:
    def __init__(self, learning_rate: float) -> None:
        self.learning_rate = learning_rate

    def step(self, params: ModelParams, grads: ParamGrads) -> None:
        targets = params.arrays()
        for name, g in grads.arrays().items():
            targets[name] -= self.learning_rate * g


class Adam:
    """Dense Adam with bias correction; updates parameters in place."""

    def __init__(
        self,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: ParamGrads) -> None:
        self.t += 1
        lr = self.learning_rate * np.sqrt(1 - self.beta2**self.t) / (1 - self.beta1**self.t)
        targets = params.arrays()
        for name, g in grads.arrays().items():
            m = self._m.setdefault(name, np.zeros_like(g))
            v = self._v.setdefault(name, np.zeros_like(g))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            targets[name] -= (lr * m / (np.sqrt(v) + self.eps)).astype(targets[name].dtype)


def make_optimizer(config: TrainConfig) -> Optimizer:
    if config.optimizer == "sgd":
        return SGD(config.learning_rate)
    return Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)


# --- training loop -----------------------------------------------------------


class Checkpoint(BaseModel):
    """Parameter snapshot with the epoch and validation MRR it was taken at."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    params: ModelParams
    epoch: int = Field(..., ge=0)
    valid_mrr: float | None = None


class TrainResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    best: Checkpoint
    final: ModelParams
    losses: list[float] = Field(default_factory=list, description="Mean loss per epoch")


class Validation(BaseModel):
    """Held-out triples and the filter used to rank them."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    triples: np.ndarray
    filter_index: FilterIndex
    threads: int = 1


def _normalize_rows(matrix: np.ndarray) -> None:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    np.divide(matrix, norms, out=matrix, where=norms > 0)


def one_to_n_queries(
    triples: np.ndarray, n_relations: int
) -> tuple[np.ndarray, list[np.ndarray]]:
    """``(h, r)`` queries over triples plus inverses ``(t, r + |R|, h)``, with their answers."""
    answers: dict[tuple[int, int], set[int]] = defaultdict(set)
    for h, r, t in np.asarray(triples).reshape(-1, 3).tolist():
        answers[(h, r)].add(t)
        answers[(t, r + n_relations)].add(h)
    keys = sorted(answers)
    queries = np.array(keys, dtype=np.int64).reshape(-1, 2)
    return queries, [np.fromiter(sorted(answers[k]), dtype=np.int64) for k in keys]


def train(
    triples: np.ndarray,
    config: TrainConfig,
    initial: ModelParams,
    *,
    epochs: int,
    validation: Validation | None = None,
    stage: str = "train-kg",
) -> TrainResult:
    """Fit ``initial`` on ``triples`` for ``epochs`` epochs.

    With a validation set, filtered MRR is computed every ``config.eval_every``
    epochs and the best snapshot is kept; otherwise the final parameters are
    the best checkpoint.
    """
    params = initial.astype(np.float32)
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    rng = np.random.default_rng([config.seed, STAGE_SALT.get(stage, 0)])
    optimizer = make_optimizer(config)
    one_to_n = params.model == "tucker"
    normalize = params.model == "transe" and config.normalize_entities

    if one_to_n:
        queries, answers = one_to_n_queries(triples, params.n_relations)
        n_items = len(queries)
    else:
        n_items = len(triples)

    best: Checkpoint | None = None
    losses: list[float] = []
    if epochs and n_items == 0:
        logger.warning("%s: no triples to train on, parameters left unchanged", stage)
        epochs = 0

    for epoch in range(1, epochs + 1):
        order = rng.permutation(n_items)
        batch_losses: list[float] = []
        for batch, start in enumerate(range(0, n_items, config.batch_size)):
            idx = order[start : start + config.batch_size]
            if one_to_n:
                targets = np.zeros((len(idx), params.n_entities), dtype=np.float32)
                for row, q in enumerate(idx):
                    targets[row, answers[q]] = 1.0
                loss, grads = loss_and_grads(
                    params, queries[idx], targets=targets,
                    label_smoothing=config.label_smoothing,
                )
            else:
                pos = triples[idx]
                neg = sample_negatives(pos, params.n_entities, rng, config.negatives_per_positive)
                loss, grads = loss_and_grads(params, pos, neg, margin=config.margin)

            if not np.isfinite(loss):
                raise NumericalAbort(stage, epoch, batch, loss)
            optimizer.step(params, grads)
            if normalize:
                _normalize_rows(params.entity)
            batch_losses.append(loss)

        losses.append(float(np.mean(batch_losses)))
        logger.debug("%s epoch %d: loss %.6f", stage, epoch, losses[-1])

        if validation is not None and len(validation.triples) and epoch % config.eval_every == 0:
            report = evaluate_link_prediction(
                params, validation.triples, validation.filter_index, threads=validation.threads
            )
            logger.info("%s epoch %d: loss %.6f, valid MRR %.4f", stage, epoch, losses[-1], report.mrr)
            if best is None or report.mrr > (best.valid_mrr or 0.0):
                best = Checkpoint(params=params.copy(), epoch=epoch, valid_mrr=report.mrr)

    if best is None:
        best = Checkpoint(params=params.copy(), epoch=epochs)
    return TrainResult(best=best, final=params, losses=losses)


# --- transfer ----------------------------------------------------------------


class TransferReport(BaseModel):
    """How each KG entity got its initial vector."""

    n_entities: int = 0
    n_copied: int = Field(default=0, description="One mapped class in the protograph")
    n_averaged: int = Field(default=0, description="Several mapped classes averaged")
    n_untyped: int = 0
    n_unmapped: int = Field(default=0, description="Typed, but no class in the protograph")
    random_entities: list[int] = Field(default_factory=list)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def n_random(self) -> int:
        return self.n_untyped + self.n_unmapped


def transfer(
    proto_params: ModelParams,
    protograph: Protograph,
    mapping: MappingDictionary,
    n_entities: int,
    seed: int,
    *,
    dim: int | None = None,
) -> tuple[ModelParams, TransferReport]:
    """Initialise KG entities from the vectors of their most specific classes.

    ``proto_params`` rows are indexed by class id. Relations (and the TuckER
    core) are copied one-to-one; entities without a usable class keep a
    seeded random row.
    """
    if dim is not None and dim != proto_params.dim:
        raise TransferError(f"protograph embeddings have dim {proto_params.dim}, expected {dim}")
    if protograph.relations and max(protograph.relations) >= proto_params.n_relations:
        raise TransferError("protograph relations exceed the relation matrix")

    fresh = init_params(
        proto_params.model,
        n_entities,
        proto_params.n_relations,
        proto_params.dim,
        seed=int(np.random.SeedSequence([seed, STAGE_SALT["transfer"]]).generate_state(1)[0]),
        dtype=proto_params.entity.dtype,
        transe_norm=proto_params.transe_norm,
        inverse_relations=proto_params.inverse_relations,
    )
    entity = fresh.entity
    present = set(protograph.classes)
    report = TransferReport(n_entities=n_entities)

    for e in range(n_entities):
        classes = mapping.classes_of(e)
        if not classes:
            report.n_untyped += 1
            report.random_entities.append(e)
            continue
        usable = sorted(c for c in classes if c in present)
        if not usable:
            report.n_unmapped += 1
            report.random_entities.append(e)
        elif len(usable) == 1:
            entity[e] = proto_params.entity[usable[0]]
            report.n_copied += 1
        else:
            entity[e] = proto_params.entity[usable].mean(axis=0)
            report.n_averaged += 1

    params = proto_params.model_copy(
        update={
            "entity": entity,
            "relation": proto_params.relation.copy(),
            "core": None if proto_params.core is None else proto_params.core.copy(),
        }
    )
    logger.info(
        "transfer: %d copied, %d averaged, %d random",
        report.n_copied, report.n_averaged, report.n_random,
    )
    return params, report


# --- pipeline ----------------------------------------------------------------


class MaschineRun(BaseModel):
    """Outcome of one V / P1 / P2 run."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    setting: Setting
    model: ModelKind
    checkpoint: Checkpoint
    final: ModelParams
    stages: list[str] = Field(default_factory=list)
    timings: dict[str, float] = Field(default_factory=dict)
    losses: dict[str, list[float]] = Field(default_factory=dict)
    protograph: Protograph | None = None
    transfer_report: TransferReport | None = None


StageHook = Callable[[str], None]


def run_maschine(
    bundle: DatasetBundle, config: TrainConfig, *, on_stage: StageHook | None = None
) -> MaschineRun:
    """Train ``config.model`` on ``bundle`` in setting V, P1 or P2."""
    kg, schema = bundle.kg, bundle.schema
    stages: list[str] = []
    timings: dict[str, float] = {}
    losses: dict[str, list[float]] = {}
    inverse = config.model in INVERSE_RELATION_MODELS

    def enter(stage: str) -> float:
        stages.append(stage)
        if on_stage is not None:
            on_stage(stage)
        logger.info("stage %s", stage)
        return time.perf_counter()

    def leave(stage: str, started: float) -> None:
        timings[stage] = round(time.perf_counter() - started, 3)

    def init(n_rows: int) -> ModelParams:
        return init_params(
            config.model, n_rows, kg.n_relations, config.dim, config.seed,
            transe_norm=config.transe_norm, inverse_relations=inverse,
        )

    protograph: Protograph | None = None
    transfer_report: TransferReport | None = None

    heuristic = config.heuristic
    if heuristic is None:
        started = enter("init")
        initial = init(kg.n_entities)
        leave("init", started)
    else:
        if schema.n_classes == 0:
            raise DataError(f"setting {config.setting} needs a schema with classes")
        started = enter("build-proto")
        protograph = build_protograph(schema, range(kg.n_relations), heuristic)
        mapping = build_mapping(kg, schema)
        leave("build-proto", started)

        started = enter("train-proto")
        proto_result = train(
            protograph.as_array(), config, init(schema.n_classes),
            epochs=config.epochs_proto, stage="train-proto",
        )
        losses["train-proto"] = proto_result.losses
        leave("train-proto", started)

        started = enter("transfer")
        # The protograph vectors are dropped once copied.
        initial, transfer_report = transfer(
            proto_result.final, protograph, mapping, kg.n_entities, config.seed, dim=config.dim
        )
        leave("transfer", started)

    started = enter("train-kg")
    validation = Validation(
        triples=kg.valid,
        filter_index=FilterIndex([kg.train, kg.valid, kg.test]),
        threads=config.threads,
    )
    result = train(
        kg.train, config, initial, epochs=config.epochs_kg, validation=validation, stage="train-kg"
    )
    losses["train-kg"] = result.losses
    leave("train-kg", started)

    return MaschineRun(
        setting=config.setting,
        model=config.model,
        checkpoint=result.best,
        final=result.final,
        stages=stages,
        timings=timings,
        losses=losses,
        protograph=protograph,
        transfer_report=transfer_report,
    )

# src/maschine/kgem.py
"""Parameter stores, scoring functions and analytic gradients.

Every model scores so that higher means more plausible:

  - TransE:   -||e_h + w_r - e_t||_p
  - DistMult: <e_h, w_r, e_t>
  - ComplEx:  Re(<e_h, w_r, conj(e_t)>), real/imaginary parts interleaved
  - TuckER:   W x1 e_h x2 w_r x3 e_t
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import ModelKind, Setting
from .errors import DataError, VocabularyMismatchError
from .kg import Vocabulary

MODEL_KINDS: tuple[ModelKind, ...] = ("transe", "distmult", "complex", "tucker")

# Models trained with 1-N scoring get an inverse copy of every relation.
INVERSE_RELATION_MODELS: frozenset[str] = frozenset({"tucker"})


class ModelParams(BaseModel):
    """Entity matrix, relation matrix and (TuckER) core tensor."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: ModelKind
    dim: int = Field(..., ge=1)
    entity: np.ndarray
    relation: np.ndarray
    core: np.ndarray | None = None
    n_relations: int = Field(..., ge=0, description="Relations before inverse augmentation")
    inverse_relations: bool = False
    transe_norm: Literal[1, 2] = 2

    @model_validator(mode="after")
    def _check_shapes(self) -> ModelParams:
        width = self.width
        rows = self.n_relations * (2 if self.inverse_relations else 1)
        if self.entity.ndim != 2 or self.entity.shape[1] != width:
            raise ValueError(f"entity matrix has shape {self.entity.shape}, width {width} expected")
        if self.relation.shape != (rows, width):
            raise ValueError(f"relation matrix has shape {self.relation.shape}, {(rows, width)} expected")
        if self.model == "tucker":
            if self.core is None or self.core.shape != (self.dim,) * 3:
                raise ValueError("TuckER needs a d x d x d core tensor")
        elif self.core is not None:
            raise ValueError(f"{self.model} has no core tensor")
        for name, arr in self.arrays().items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains NaN or Inf")
        return self

    @property
    def width(self) -> int:
        """Stored columns per row (2d for ComplEx)."""
        return 2 * self.dim if self.model == "complex" else self.dim

    @property
    def n_entities(self) -> int:
        return int(self.entity.shape[0])

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"entity": self.entity, "relation": self.relation}
        if self.core is not None:
            out["core"] = self.core
        return out

    def inverse_of(self, r: int) -> int:
        return r + self.n_relations

    def copy(self) -> ModelParams:
        return self.model_copy(
            update={k: v.copy() for k, v in self.arrays().items()}, deep=False
        )

    def astype(self, dtype: Any) -> ModelParams:
        return self.model_copy(
            update={k: v.astype(dtype, copy=True) for k, v in self.arrays().items()}
        )


def init_params(
    model: ModelKind,
    n_entities: int,
    n_relations: int,
    dim: int,
    seed: int,
    *,
    dtype: Any = np.float32,
    transe_norm: Literal[1, 2] = 2,
    inverse_relations: bool | None = None,
) -> ModelParams:
    """Xavier-uniform entries in [-sqrt(6/2d), sqrt(6/2d)], deterministic in ``seed``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if inverse_relations is None:
        inverse_relations = model in INVERSE_RELATION_MODELS
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (2 * dim))
    width = 2 * dim if model == "complex" else dim
    rows = n_relations * (2 if inverse_relations else 1)

    entity = rng.uniform(-bound, bound, size=(n_entities, width))
    relation = rng.uniform(-bound, bound, size=(rows, width))
    core = None
    if model == "transe":
        norms = np.linalg.norm(relation, axis=1, keepdims=True)
        relation = relation / np.where(norms > 0, norms, 1.0)
    elif model == "tucker":
        core = rng.uniform(-1.0, 1.0, size=(dim, dim, dim)).astype(dtype)

    return ModelParams(
        model=model,
        dim=dim,
        entity=entity.astype(dtype),
        relation=relation.astype(dtype),
        core=core,
        n_relations=n_relations,
        inverse_relations=inverse_relations,
        transe_norm=transe_norm,
    )


def _re_im(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return x[..., 0::2], x[..., 1::2]


def _interleave(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    out = np.empty(re.shape[:-1] + (2 * re.shape[-1],), dtype=np.result_type(re, im))
    out[..., 0::2] = re
    out[..., 1::2] = im
    return out


def score_triples(
    params: ModelParams, h: np.ndarray, r: np.ndarray, t: np.ndarray
) -> np.ndarray:
    """Scores of aligned id arrays ``(h[i], r[i], t[i])``."""
    eh, wr, et = params.entity[h], params.relation[r], params.entity[t]
    match params.model:
        case "transe":
            return -np.linalg.norm(eh + wr - et, ord=params.transe_norm, axis=-1)
        case "distmult":
            return np.sum(eh * wr * et, axis=-1)
        case "complex":
            hr, hi = _re_im(eh)
            rr, ri = _re_im(wr)
            tr, ti = _re_im(et)
            return np.sum(hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr, axis=-1)
        case "tucker":
            return np.einsum("ijk,bi,bj,bk->b", params.core, eh, wr, et)
    raise ValueError(f"unknown model {params.model}")


def score(params: ModelParams, h: int, r: int, t: int) -> float:
    """Plausibility of one triple."""
    ids = (np.array([h]), np.array([r]), np.array([t]))
    return float(score_triples(params, *ids)[0])


def _tail_queries(params: ModelParams, h: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Vectors q with score(h, r, e) = <q, E[e]> (bilinear models)."""
    eh, wr = params.entity[h], params.relation[r]
    match params.model:
        case "distmult":
            return eh * wr
        case "complex":
            hr, hi = _re_im(eh)
            rr, ri = _re_im(wr)
            return _interleave(hr * rr - hi * ri, hr * ri + hi * rr)
        case "tucker":
            return np.einsum("ijk,bi,bj->bk", params.core, eh, wr)
    raise ValueError(f"{params.model} is not bilinear")


def _head_queries(params: ModelParams, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Vectors q with score(e, r, t) = <q, E[e]> (bilinear models)."""
    wr, et = params.relation[r], params.entity[t]
    match params.model:
        case "distmult":
            return wr * et
        case "complex":
            rr, ri = _re_im(wr)
            tr, ti = _re_im(et)
            return _interleave(rr * tr + ri * ti, rr * ti - ri * tr)
        case "tucker":
            return np.einsum("ijk,bj,bk->bi", params.core, wr, et)
    raise ValueError(f"{params.model} is not bilinear")


def score_tails_batch(params: ModelParams, h: np.ndarray, r: np.ndarray) -> np.ndarray:
    """``(B, |E|)`` scores of ``(h[b], r[b], e)`` for every entity e."""
    h, r = np.asarray(h), np.asarray(r)
    if params.model == "transe":
        anchor = params.entity[h] + params.relation[r]
        return np.stack(
            [-np.linalg.norm(a - params.entity, ord=params.transe_norm, axis=1) for a in anchor]
        ).reshape(len(h), -1)
    return _tail_queries(params, h, r) @ params.entity.T


def score_heads_batch(params: ModelParams, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``(B, |E|)`` scores of ``(e, r[b], t[b])`` for every entity e."""
    r, t = np.asarray(r), np.asarray(t)
    if params.model == "transe":
        anchor = params.entity[t] - params.relation[r]
        return np.stack(
            [-np.linalg.norm(params.entity - a, ord=params.transe_norm, axis=1) for a in anchor]
        ).reshape(len(t), -1)
    return _head_queries(params, r, t) @ params.entity.T


def score_all_tails(params: ModelParams, h: int, r: int) -> np.ndarray:
    return score_tails_batch(params, np.array([h]), np.array([r]))[0]


def score_all_heads(params: ModelParams, r: int, t: int) -> np.ndarray:
    return score_heads_batch(params, np.array([r]), np.array([t]))[0]


class TripleGrads(BaseModel):
    """Per-triple score gradients, already scaled by the upstream weights."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    head: np.ndarray
    relation: np.ndarray
    tail: np.ndarray
    core: np.ndarray | None = None


def triple_grads(
    params: ModelParams,
    h: np.ndarray,
    r: np.ndarray,
    t: np.ndarray,
    upstream: np.ndarray,
) -> TripleGrads:
    """d(upstream[i] * score(h[i], r[i], t[i])) w.r.t. e_h, w_r, e_t and W."""
    eh, wr, et = params.entity[h], params.relation[r], params.entity[t]
    u = np.asarray(upstream, dtype=eh.dtype)[:, None]
    core = None
    match params.model:
        case "transe":
            diff = eh + wr - et
            if params.transe_norm == 1:
                g = -np.sign(diff)
            else:
                norm = np.linalg.norm(diff, axis=1, keepdims=True)
                # Subgradient 0 where the translation is exact.
                g = -np.divide(diff, norm, out=np.zeros_like(diff), where=norm > 0)
            gh, gr, gt = g, g, -g
        case "distmult":
            gh, gr, gt = wr * et, eh * et, eh * wr
        case "complex":
            hr, hi = _re_im(eh)
            rr, ri = _re_im(wr)
            tr, ti = _re_im(et)
            gh = _interleave(rr * tr + ri * ti, rr * ti - ri * tr)
            gr = _interleave(hr * tr + hi * ti, hr * ti - hi * tr)
            gt = _interleave(hr * rr - hi * ri, hi * rr + hr * ri)
        case "tucker":
            W = params.core
            gh = np.einsum("ijk,bj,bk->bi", W, wr, et)
            gr = np.einsum("ijk,bi,bk->bj", W, eh, et)
            gt = np.einsum("ijk,bi,bj->bk", W, eh, wr)
            core = np.einsum("b,bi,bj,bk->ijk", u[:, 0], eh, wr, et)
        case _:
            raise ValueError(f"unknown model {params.model}")
    return TripleGrads(head=gh * u, relation=gr * u, tail=gt * u, core=core)


class ParamGrads(BaseModel):
    """Gradients laid out like ModelParams (dense rows)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    entity: np.ndarray
    relation: np.ndarray
    core: np.ndarray | None = None

    @classmethod
    def zeros_like(cls, params: ModelParams) -> ParamGrads:
        return cls(
            entity=np.zeros_like(params.entity),
            relation=np.zeros_like(params.relation),
            core=None if params.core is None else np.zeros_like(params.core),
        )

    def add_triples(
        self, h: np.ndarray, r: np.ndarray, t: np.ndarray, grads: TripleGrads
    ) -> None:
        np.add.at(self.entity, h, grads.head)
        np.add.at(self.relation, r, grads.relation)
        np.add.at(self.entity, t, grads.tail)
        if grads.core is not None and self.core is not None:
            self.core += grads.core

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"entity": self.entity, "relation": self.relation}
        if self.core is not None:
            out["core"] = self.core
        return out


class SparseGrad(BaseModel):
    """Gradient restricted to the rows a triple touches."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    entity: dict[int, np.ndarray] = Field(default_factory=dict)
    relation: dict[int, np.ndarray] = Field(default_factory=dict)
    core: np.ndarray | None = None


def grad(params: ModelParams, h: int, r: int, t: int, upstream: float = 1.0) -> SparseGrad:
    """Gradient of ``upstream * score(h, r, t)``; a shared head/tail row is summed."""
    g = triple_grads(params, np.array([h]), np.array([r]), np.array([t]), np.array([upstream]))
    entity = {h: g.head[0].copy()}
    entity[t] = entity[t] + g.tail[0] if t in entity else g.tail[0].copy()
    return SparseGrad(entity=entity, relation={r: g.relation[0].copy()}, core=g.core)


def tucker_one_to_n_backward(
    params: ModelParams, h: np.ndarray, r: np.ndarray, dlogits: np.ndarray, out: ParamGrads
) -> None:
    """Backpropagate ``dL/dlogits`` of ``logits = q(h, r) @ E.T`` into ``out``."""
    W = params.core
    eh, wr = params.entity[h], params.relation[r]
    q = np.einsum("ijk,bi,bj->bk", W, eh, wr)
    dq = dlogits @ params.entity
    out.entity += dlogits.T @ q
    np.add.at(out.entity, h, np.einsum("ijk,bj,bk->bi", W, wr, dq))
    np.add.at(out.relation, r, np.einsum("ijk,bi,bk->bj", W, eh, dq))
    if out.core is not None:
        out.core += np.einsum("bi,bj,bk->ijk", eh, wr, dq)


# --- persistence ------------------------------------------------------------


class CheckpointHeader(BaseModel):
    """JSON header preceding the little-endian float32 payload."""

    model: ModelKind
    dim: int
    n_entities: int
    n_relations: int
    inverse_relations: bool
    transe_norm: Literal[1, 2] = 2
    vocab_hash: str
    epoch: int
    seed: int
    valid_mrr: float | None = None
    setting: Setting = "V"
    dataset: str = ""


def save_checkpoint(path: Path | str, params: ModelParams, header: CheckpointHeader) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(header.model_dump_json().encode("utf-8") + b"\n")
        for arr in params.arrays().values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(
    path: Path | str, expected_vocab_hash: str | None = None
) -> tuple[ModelParams, CheckpointHeader]:
    """Read a checkpoint; optionally insist on a vocabulary hash."""
    raw = Path(path).read_bytes()
    split = raw.find(b"\n")
    if split < 0:
        raise DataError(f"{path}: missing checkpoint header")
    header = CheckpointHeader.model_validate_json(raw[:split])
    if expected_vocab_hash is not None and header.vocab_hash != expected_vocab_hash:
        raise VocabularyMismatchError(expected_vocab_hash, header.vocab_hash)

    width = 2 * header.dim if header.model == "complex" else header.dim
    rows = header.n_relations * (2 if header.inverse_relations else 1)
    shapes = {"entity": (header.n_entities, width), "relation": (rows, width)}
    if header.model == "tucker":
        shapes["core"] = (header.dim,) * 3

    payload = np.frombuffer(raw, dtype="<f4", offset=split + 1)
    expected = sum(int(np.prod(s)) for s in shapes.values())
    if payload.size != expected:
        raise DataError(f"{path}: payload has {payload.size} floats, {expected} expected")

    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        arrays[name] = payload[offset : offset + size].reshape(shape).astype(np.float32)
        offset += size

    params = ModelParams(
        model=header.model,
        dim=header.dim,
        n_relations=header.n_relations,
        inverse_relations=header.inverse_relations,
        transe_norm=header.transe_norm,
        **arrays,
    )
    return params, header


def relation_row_names(params: ModelParams, vocab: Vocabulary) -> list[str]:
    names = list(vocab.relations.names[: params.n_relations])
    if params.inverse_relations:
        names += [f"{n}^-1" for n in names]
    return names


def export_embeddings(
    path: Path | str,
    params: ModelParams,
    entity_names: list[str],
    relation_names: list[str],
) -> None:
    """Text export: ``ENT|REL <count> <dim> <model>`` headers, one tab-separated row per id."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for tag, matrix, names in (
            ("ENT", params.entity, entity_names),
            ("REL", params.relation, relation_names),
        ):
            fh.write(f"{tag} {matrix.shape[0]} {params.dim} {params.model}\n")
            for name, row in zip(names, np.asarray(matrix, dtype=np.float32), strict=True):
                fh.write(name + "\t" + "\t".join(f"{x:.9g}" for x in row.tolist()) + "\n")


def header_json(header: CheckpointHeader) -> dict[str, Any]:
    return json.loads(header.model_dump_json())

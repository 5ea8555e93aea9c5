# src/maschine/downstream.py
"""Entity clustering, node classification and 2-D PCA over learned embeddings."""

from __future__ import annotations

import csv
import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np
from pydantic import BaseModel, Field, computed_field
from sklearn.cluster import KMeans
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import (
    adjusted_mutual_info_score,
    adjusted_rand_score,
    completeness_score,
    f1_score,
    fowlkes_mallows_score,
    homogeneity_score,
    normalized_mutual_info_score,
    v_measure_score,
)
from sklearn.model_selection import train_test_split
from sklearn.neighbors import KNeighborsClassifier

from .errors import EvaluationError
from .ingest import LabelSet
from .kg import Schema, most_generic_classes
from .kgem import ModelParams

logger = logging.getLogger(__name__)

Classifier = Literal["knn", "logreg"]
CLASSIFIERS: tuple[Classifier, ...] = ("knn", "logreg")


class ClusterAssignment(NamedTuple):
    labels: np.ndarray
    inertia: float


class ClusterReport(BaseModel):
    """Agreement between a clustering and gold labels."""

    ari: float = Field(..., description="Adjusted Rand index, in [-1, 1]")
    nmi: float = Field(..., description="Normalized mutual information")
    ami: float = Field(..., description="Adjusted mutual information; below 0 when worse than chance")
    v_measure: float
    fowlkes_mallows: float
    homogeneity: float
    completeness: float
    k: int = Field(default=0, description="Clusters requested")
    n_entities: int = Field(default=0, description="Entities clustered")
    n_filtered: int = Field(default=0, description="Entities with several most generic classes")
    n_unlabelled: int = Field(default=0, description="Entities without a gold label")


class NCReport(BaseModel):
    """Macro F-score per classifier."""

    scores: dict[str, float] = Field(default_factory=dict)
    n_train: int = 0
    n_test: int = 0
    n_unseen: int = Field(default=0, description="Test rows whose label never occurs in training")

    @computed_field  # type: ignore[prop-decorator]
    @property
    def best_classifier(self) -> str | None:
        best: str | None = None
        # Ties go to the classifier listed first.
        for name, score in self.scores.items():
            if best is None or score > self.scores[best]:
                best = name
        return best

    @computed_field  # type: ignore[prop-decorator]
    @property
    def best(self) -> float | None:
        name = self.best_classifier
        return None if name is None else self.scores[name]


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    *,
    n_init: int = 10,
    max_iter: int = 300,
    tol: float = 1e-4,
) -> ClusterAssignment:
    """Lloyd's algorithm, k-means++ seeding, best inertia of ``n_init`` restarts.

    Runs scikit-learn's ``KMeans``: ``tol`` bounds centre movement relative to
    the data variance rather than the relative inertia change, and empty
    clusters are relocated by scikit-learn instead of re-seeded at the
    farthest point.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] < 1:
        raise EvaluationError("k-means needs an N x d matrix with d >= 1")
    if not 1 <= k <= len(points):
        raise EvaluationError(f"k={k} clusters for {len(points)} points")
    model = KMeans(
        n_clusters=k,
        init="k-means++",
        n_init=n_init,
        max_iter=max_iter,
        tol=tol,
        algorithm="lloyd",
        random_state=seed,
    ).fit(points)
    return ClusterAssignment(labels=model.labels_.astype(np.int64), inertia=float(model.inertia_))


def clustering_metrics(pred: Sequence[int] | np.ndarray, true: Sequence[int] | np.ndarray) -> ClusterReport:
    pred, true = np.asarray(pred), np.asarray(true)
    if pred.shape != true.shape:
        raise EvaluationError(f"label vectors differ in length: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise EvaluationError("empty label vectors")
    return ClusterReport(
        ari=adjusted_rand_score(true, pred),
        nmi=normalized_mutual_info_score(true, pred),
        ami=adjusted_mutual_info_score(true, pred),
        v_measure=v_measure_score(true, pred),
        fowlkes_mallows=fowlkes_mallows_score(true, pred),
        homogeneity=homogeneity_score(true, pred),
        completeness=completeness_score(true, pred),
    )


def root_class_labels(schema: Schema, n_entities: int) -> tuple[dict[int, int], int, int]:
    """Entities with exactly one most generic class, plus filtered and untyped counts."""
    labels: dict[int, int] = {}
    filtered = untyped = 0
    for e in range(n_entities):
        roots = most_generic_classes(e, schema)
        if len(roots) == 1:
            labels[e] = next(iter(roots))
        elif roots:
            filtered += 1
        else:
            untyped += 1
    return labels, filtered, untyped


def _cluster_against(
    params: ModelParams, labels: dict[int, int], seed: int
) -> tuple[ClusterReport, int]:
    entities = np.array(sorted(labels), dtype=np.int64)
    true = np.array([labels[int(e)] for e in entities])
    k = len(np.unique(true))
    if k < 2:
        raise EvaluationError(f"clustering needs at least 2 gold classes, found {k}")
    points = np.asarray(params.entity, dtype=np.float64)[entities]
    assignment = kmeans(points, k, seed)
    return clustering_metrics(assignment.labels, true), k


def entity_clustering_eval(
    params: ModelParams, schema: Schema, seed: int = 0
) -> ClusterReport:
    """k-means over entities labelled by their single most generic class."""
    labels, filtered, untyped = root_class_labels(schema, params.n_entities)
    report, k = _cluster_against(params, labels, seed)
    logger.info(
        "entity clustering: %d entities, k=%d, %d filtered, ARI %.4f",
        len(labels), k, filtered, report.ari,
    )
    return report.model_copy(
        update={"k": k, "n_entities": len(labels), "n_filtered": filtered, "n_unlabelled": untyped}
    )


def label_clustering_eval(params: ModelParams, labels: LabelSet, seed: int = 0) -> ClusterReport:
    """k-means with k set by a gold label file."""
    report, k = _cluster_against(params, labels.labels, seed)
    return report.model_copy(
        update={
            "k": k,
            "n_entities": len(labels.labels),
            "n_unlabelled": params.n_entities - len(labels.labels),
        }
    )


def classify(
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    method: Classifier = "knn",
    *,
    n_neighbors: int = 5,
    max_iter: int = 500,
    l2: float = 1e-4,
) -> np.ndarray:
    """Predict labels of ``test_x`` from a fitted k-NN or logistic regression.

    k-NN vote ties go to the smallest label value.
    """
    train_y = np.asarray(train_y)
    if len(np.unique(train_y)) < 2:
        raise EvaluationError("classification needs at least 2 classes in the training labels")
    if method == "knn":
        clf = KNeighborsClassifier(n_neighbors=min(n_neighbors, len(train_y)), metric="euclidean")
    else:
        clf = LogisticRegression(max_iter=max_iter, C=1.0 / (len(train_y) * l2))
    clf.fit(np.asarray(train_x, dtype=np.float64), train_y)
    return clf.predict(np.asarray(test_x, dtype=np.float64))


def macro_f1(true: np.ndarray, pred: np.ndarray) -> float:
    return float(f1_score(true, pred, average="macro", zero_division=0))


def split_labels(labels: LabelSet, seed: int, test_size: float = 0.2) -> tuple[LabelSet, LabelSet]:
    """Stratified split; falls back to a plain split when a class is a singleton."""
    entities, y = labels.arrays()
    try:
        tr, te = train_test_split(entities, test_size=test_size, random_state=seed, stratify=y)
    except ValueError:
        logger.warning("labels too sparse to stratify; splitting without stratification")
        tr, te = train_test_split(entities, test_size=test_size, random_state=seed)

    def subset(ids: np.ndarray) -> LabelSet:
        return LabelSet(labels={int(e): labels.labels[int(e)] for e in ids}, label_names=labels.label_names)

    return subset(tr), subset(te)


def nc_eval(
    params: ModelParams,
    train_labels: LabelSet,
    test_labels: LabelSet | None = None,
    seed: int = 0,
) -> NCReport:
    """Best-of k-NN and logistic regression, scored by macro F-score."""
    if test_labels is None:
        train_labels, test_labels = split_labels(train_labels, seed)
    embeddings = np.asarray(params.entity, dtype=np.float64)
    # Ids keep the training labels' first-seen order; k-NN vote ties go to the lowest.
    label_ids = {name: i for i, name in enumerate(train_labels.label_names)}

    def encoded(labels: LabelSet) -> tuple[np.ndarray, np.ndarray]:
        entities, y = labels.arrays()
        ids = [label_ids.setdefault(labels.label_names[i], len(label_ids)) for i in y]
        return embeddings[entities], np.array(ids, dtype=np.int64)

    train_x, train_y = encoded(train_labels)
    test_x, test_y = encoded(test_labels)
    if len(test_y) == 0:
        raise EvaluationError("no test entities to classify")
    known = set(train_y.tolist())
    unseen = sum(label not in known for label in test_y.tolist())
    if unseen:
        logger.warning("%d test rows carry labels absent from training", unseen)

    scores = {
        method: macro_f1(test_y, classify(train_x, train_y, test_x, method))
        for method in CLASSIFIERS
    }
    return NCReport(scores=scores, n_train=len(train_y), n_test=len(test_y), n_unseen=unseen)


def _leading_eigenvector(
    cov: np.ndarray, tol: float, max_iter: int, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    n = cov.shape[0]
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return np.zeros(n), 0.0
        w /= norm
        done = min(np.linalg.norm(w - v), np.linalg.norm(w + v)) < tol
        v = w
        if done:
            break
    return v, float(v @ cov @ v)


def pca_2d(points: np.ndarray, *, tol: float = 1e-9, max_iter: int = 100_000) -> np.ndarray:
    """Project onto the two leading principal axes, found by power iteration with deflation.

    Each axis is flipped so its first nonzero loading is positive. Rank-0
    input projects to zeros.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise EvaluationError("PCA needs at least 2 points")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (len(x) - 1)

    axes = np.zeros((x.shape[1], 2))
    rng = np.random.default_rng(0)
    total = float(np.trace(cov))
    for i in range(min(2, x.shape[1])):
        v, lam = _leading_eigenvector(cov, tol, max_iter, rng)
        # What deflation leaves of a lower-rank matrix is rounding noise.
        if lam <= 1e-12 * total:
            break
        nonzero = np.flatnonzero(np.abs(v) > 1e-12)
        if nonzero.size and v[nonzero[0]] < 0:
            v = -v
        axes[:, i] = v
        cov = cov - lam * np.outer(v, v)
    return centered @ axes


def export_pca_csv(
    path: Path | str, names: Sequence[str], labels: Sequence[str], coords: np.ndarray
) -> None:
    """Write ``entity,label,x,y`` rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["entity", "label", "x", "y"])
        for name, label, (x, y) in zip(names, labels, coords.tolist(), strict=True):
            writer.writerow([name, label, f"{x:.9g}", f"{y:.9g}"])

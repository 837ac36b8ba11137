"""
    geoclust.metrics
    ~~~~~

    Cluster validity indices (Calinski-Harabasz, Davies-Bouldin, subsampled
    silhouette), agreement with a reference partition (adjusted Rand index),
    and overall accuracy against ground-truth sample points.
"""
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from sklearn.metrics import adjusted_rand_score, silhouette_samples

from .errors import DataError, NumericError
from .postprocess import NODATA_LABEL
from .utils import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundTruthSet:
    #: (row, col, class_id) triples
    points: tuple
    class_names: Optional[tuple] = None

    def __post_init__(self):
        points = tuple((int(r), int(c), int(k)) for r, c, k in self.points)
        if any(min(p) < 0 for p in points):
            raise DataError("ground truth rows, cols and class ids must be >= 0")
        object.__setattr__(self, "points", points)

    @property
    def class_ids(self):
        return sorted({k for _, _, k in self.points})


@dataclass
class EvaluationReport:
    k: int
    producer: str
    calinski_harabasz: Optional[float] = None
    davies_bouldin: Optional[float] = None
    silhouette: Optional[float] = None
    overall_accuracy: Optional[float] = None
    cluster_to_class: Optional[dict] = None
    excluded_points: Optional[int] = None
    adjusted_rand: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_document(self):
        document = asdict(self)
        if self.cluster_to_class is not None:
            document["cluster_to_class"] = {
                str(cluster): cls for cluster, cls in sorted(self.cluster_to_class.items())
            }
        return document


@dataclass(frozen=True)
class AccuracyResult:
    accuracy: float
    cluster_to_class: dict
    used_points: int
    excluded_points: int

    def __iter__(self):
        return iter((self.accuracy, self.cluster_to_class))


def _prepare(features, labels):
    values = np.atleast_2d(np.asarray(getattr(features, "values", features), dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if values.shape[0] != labels.shape[0]:
        raise DataError("features and labels lengths differ")
    if labels.size and labels.min() < 0:
        raise DataError("cluster ids must be >= 0")
    if not np.all(np.isfinite(values)):
        raise NumericError("non-finite features")
    k = int(labels.max()) + 1 if labels.size else 0
    if k < 2:
        raise DataError("validity indices need at least 2 clusters")
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        raise DataError("empty cluster(s): {}".format(np.flatnonzero(counts == 0).tolist()))
    return values, labels, k, counts


def _cluster_means(values, labels, k, counts):
    sums = np.column_stack(
        [np.bincount(labels, weights=values[:, j], minlength=k) for j in range(values.shape[1])]
    )
    return sums / counts[:, np.newaxis]


def compact_labels(labels):
    """Renumber labels to ``0..k'-1``, preserving their order."""
    _, compact = np.unique(np.asarray(labels), return_inverse=True)
    return compact.reshape(-1)


def calinski_harabasz(features, labels):
    """Between-cluster over within-cluster dispersion, df-normalized. Returns
    ``inf`` when every cluster has zero within-scatter."""
    values, labels, k, counts = _prepare(features, labels)
    n = values.shape[0]
    if n <= k:
        raise DataError("Calinski-Harabasz needs more pixels than clusters")
    means = _cluster_means(values, labels, k, counts)
    grand = values.mean(axis=0)
    between = float(np.sum(counts * np.sum((means - grand) ** 2, axis=1)))
    within = float(np.sum((values - means[labels]) ** 2))
    if within == 0.0:
        return float("inf")
    return (between / (k - 1)) / (within / (n - k))


def davies_bouldin(features, labels):
    values, labels, k, counts = _prepare(features, labels)
    means = _cluster_means(values, labels, k, counts)
    distances = np.linalg.norm(values - means[labels], axis=1)
    scatter = np.bincount(labels, weights=distances, minlength=k) / counts

    separation = np.linalg.norm(means[:, np.newaxis, :] - means[np.newaxis, :, :], axis=2)
    off_diagonal = ~np.eye(k, dtype=bool)
    if np.any(separation[off_diagonal] == 0.0):
        raise NumericError("coincident cluster centroids")
    ratios = (scatter[:, np.newaxis] + scatter[np.newaxis, :]) / np.where(
        off_diagonal, separation, 1.0
    )
    ratios[~off_diagonal] = -np.inf
    return float(np.mean(ratios.max(axis=1)))


def _score_or_nan(index, features, labels):
    try:
        return index(features, labels)
    except (DataError, NumericError):
        return float("nan")


def score_elbow(curve, features):
    """Return ``curve`` with the Calinski-Harabasz and Davies-Bouldin scores of
    its best model at every k, so the elbow can be checked against both.
    Undefined scores (one cluster, coincident centroids) are NaN."""
    if len(curve.models) != len(curve.k_values):
        raise DataError("the elbow curve carries no models to score")
    ch = tuple(_score_or_nan(calinski_harabasz, features, m.labels) for m in curve.models)
    db = tuple(_score_or_nan(davies_bouldin, features, m.labels) for m in curve.models)

    if not np.all(np.isnan(ch)) and not np.all(np.isnan(db)):
        logger.info(
            "best Calinski-Harabasz at k=%d, best Davies-Bouldin at k=%d",
            curve.k_values[int(np.nanargmax(ch))],
            curve.k_values[int(np.nanargmin(db))],
        )
    return replace(curve, calinski_harabasz=ch, davies_bouldin=db)


def silhouette_subsample(features, labels, seed, sample_size=10000):
    """Mean silhouette over a seeded uniform sample without replacement.

    A sampled cluster of size 1 contributes 0, as do points whose intra- and
    nearest-cluster distances are both zero.
    """
    values = np.atleast_2d(np.asarray(getattr(features, "values", features), dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if values.shape[0] != labels.shape[0]:
        raise DataError("features and labels lengths differ")
    k = np.unique(labels).size
    if k < 2:
        raise DataError("silhouette needs at least 2 clusters")
    if sample_size < k + 1:
        raise DataError("sample_size must be >= k + 1")

    n = values.shape[0]
    if n > sample_size:
        chosen = np.sort(make_rng(seed).choice(n, size=sample_size, replace=False))
        values, labels = values[chosen], labels[chosen]
    if np.unique(labels).size < 2:
        raise DataError("the silhouette sample holds a single cluster")
    # silhouette_samples also requires fewer clusters than samples.
    if np.unique(labels).size >= labels.size:
        return 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = silhouette_samples(values, labels)
    return float(np.mean(np.nan_to_num(scores)))


def adjusted_rand_index(labels_a, labels_b):
    labels_a = np.asarray(labels_a).reshape(-1)
    labels_b = np.asarray(labels_b).reshape(-1)
    if labels_a.shape != labels_b.shape:
        raise DataError("length mismatch: {} vs {}".format(labels_a.size, labels_b.size))
    return float(adjusted_rand_score(labels_a, labels_b))


def overall_accuracy(label_grid, truth):
    """Map every cluster found under a truth point to its plurality class (ties
    go to the lowest class id) and score the share of matching points. Points on
    nodata pixels are excluded."""
    pairs = []
    excluded = 0
    for row, col, class_id in truth.points:
        if row >= label_grid.rows or col >= label_grid.cols:
            raise DataError("truth point ({}, {}) outside the grid".format(row, col))
        cluster = int(label_grid.labels[row, col])
        if cluster == NODATA_LABEL:
            excluded += 1
            continue
        pairs.append((cluster, class_id))
    if not pairs:
        raise DataError("no usable truth points")

    votes = {}
    for cluster, class_id in pairs:
        votes.setdefault(cluster, Counter())[class_id] += 1
    mapping = {}
    for cluster, counter in votes.items():
        best = max(counter.values())
        mapping[cluster] = min(c for c, v in counter.items() if v == best)

    matched = sum(1 for cluster, class_id in pairs if mapping[cluster] == class_id)
    if excluded:
        logger.warning("%d truth points fall on nodata pixels and were excluded", excluded)
    return AccuracyResult(
        accuracy=matched / len(pairs),
        cluster_to_class=dict(sorted(mapping.items())),
        used_points=len(pairs),
        excluded_points=excluded,
    )


def read_ground_truth(path):
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.int64)
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().strip().replace(" ", "")
    except (OSError, ValueError) as e:
        raise DataError("cannot read ground truth {}: {}".format(path, e))
    if header != "row,col,class_id":
        raise DataError("ground truth header must be 'row,col,class_id'")
    if table.size and table.shape[1] != 3:
        raise DataError("ground truth rows need exactly 3 columns")
    truth = GroundTruthSet(points=tuple(map(tuple, table.reshape(-1, 3))))
    ids = truth.class_ids
    if ids and ids != list(range(len(ids))):
        logger.warning("ground truth class ids are not contiguous from 0: %s", ids)
    return truth


def write_ground_truth(truth, path):
    table = np.asarray(truth.points, dtype=np.int64).reshape(-1, 3)
    np.savetxt(path, table, fmt="%d", delimiter=",", header="row,col,class_id", comments="")


def sample_ground_truth(truth_grid, n_points, seed):
    """Draw ``n_points`` distinct labelled pixels of ``truth_grid`` as sample points."""
    rows, cols = np.nonzero(truth_grid.valid_mask)
    if rows.size == 0:
        raise DataError("truth grid has no labelled pixels")
    chosen = np.sort(make_rng(seed).choice(rows.size, size=min(n_points, rows.size), replace=False))
    return GroundTruthSet(
        points=tuple(
            (int(rows[i]), int(cols[i]), int(truth_grid.labels[rows[i], cols[i]])) for i in chosen
        )
    )

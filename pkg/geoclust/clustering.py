"""
    geoclust.clustering
    ~~~~~

    k-means with k-means++ seeding and best-of-restarts selection, the WCSS
    elbow sweep, and Kneedle detection of the optimal cluster count.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NoElbowError, NumericError
from .utils import dump_json, load_json, worker_count

logger = logging.getLogger(__name__)

CLUSTERS_FILE = "clusters.json"
CENTROIDS_FILE = "centroids.bin"
ELBOW_FILE = "elbow.csv"

_CENTROIDS_DTYPE = np.dtype("<f8")
# Relative slack for floating point noise when checking monotone inertia.
_INERTIA_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    iterations_run: int
    seed: int
    #: WCSS after every Lloyd assignment of the winning run
    inertia_history: tuple = field(default=(), repr=False)


@dataclass(frozen=True, eq=False)
class ElbowCurve:
    k_values: tuple
    wcss: tuple
    #: best model per k, kept in memory only
    models: tuple = field(default=(), repr=False)
    #: per-k validity of the best models; NaN where undefined
    calinski_harabasz: tuple = ()
    davies_bouldin: tuple = ()

    def __post_init__(self):
        k_values = tuple(int(k) for k in self.k_values)
        wcss = tuple(float(w) for w in self.wcss)
        if len(k_values) != len(wcss):
            raise DataError("k_values and wcss lengths differ")
        if any(b <= a for a, b in zip(k_values, k_values[1:])):
            raise DataError("k_values must be strictly increasing")
        if any(w < 0 for w in wcss):
            raise DataError("wcss must be non-negative")
        object.__setattr__(self, "k_values", k_values)
        object.__setattr__(self, "wcss", wcss)
        for name in ("calinski_harabasz", "davies_bouldin"):
            scores = tuple(float(s) for s in getattr(self, name))
            if scores and len(scores) != len(k_values):
                raise DataError("{} needs one score per k".format(name))
            object.__setattr__(self, name, scores)

    def model_for(self, k):
        return self.models[self.k_values.index(k)]


def _features(features):
    values = np.atleast_2d(np.asarray(getattr(features, "values", features), dtype=np.float64))
    if not np.all(np.isfinite(values)):
        raise NumericError("non-finite features")
    return values


def _squared_distances(values, centroids, chunk=65536):
    # Explicit differences keep coincident points at exactly zero.
    out = np.empty((values.shape[0], centroids.shape[0]))
    for start in range(0, values.shape[0], chunk):
        diff = values[start : start + chunk, np.newaxis, :] - centroids[np.newaxis, :, :]
        out[start : start + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _assign(values, centroids):
    distances = _squared_distances(values, centroids)
    # argmin returns the first minimum: ties go to the lowest centroid index.
    labels = np.argmin(distances, axis=1)
    return labels, distances[np.arange(values.shape[0]), labels]


def _repair_empty(values, labels, nearest, centroids):
    """Give every empty cluster the point farthest from its centroid."""
    k = centroids.shape[0]
    counts = np.bincount(labels, minlength=k)
    for cluster in np.flatnonzero(counts == 0):
        movable = counts[labels] > 1
        if not movable.any():
            break
        candidates = np.where(movable, nearest, -1.0)
        point = int(np.argmax(candidates))
        counts[labels[point]] -= 1
        counts[cluster] += 1
        labels[point] = cluster
        nearest[point] = 0.0
        centroids[cluster] = values[point]
    return labels, nearest, centroids


def kmeans_plus_plus(values, k, rng):
    n = values.shape[0]
    centroids = np.empty((k, values.shape[1]))
    centroids[0] = values[rng.integers(n)]
    closest = _squared_distances(values, centroids[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total > 0:
            index = rng.choice(n, p=closest / total)
        else:
            index = rng.integers(n)
        centroids[i] = values[index]
        closest = np.minimum(closest, _squared_distances(values, centroids[i : i + 1])[:, 0])
    return centroids


def lloyd(values, centroids, max_iter=300, tol=1e-6):
    """Run Lloyd iterations from ``centroids``.

    Returns ``(centroids, labels, inertia, iterations, history)`` where
    ``history`` holds the WCSS after every assignment step.
    """
    centroids = np.array(centroids, dtype=np.float64)
    k = centroids.shape[0]
    history = []
    iterations = 0
    slack = 1e-12 * float(np.einsum("ij,ij->", values, values))
    for iterations in range(1, max_iter + 1):
        labels, nearest = _assign(values, centroids)
        labels, nearest, centroids = _repair_empty(values, labels, nearest, centroids)
        inertia = float(nearest.sum())
        if history and inertia > history[-1] * (1.0 + _INERTIA_SLACK) + slack:
            raise NumericError(
                "inertia increased from {} to {} at iteration {}".format(
                    history[-1], inertia, iterations
                )
            )
        history.append(inertia)

        counts = np.bincount(labels, minlength=k)
        sums = np.column_stack(
            [np.bincount(labels, weights=values[:, j], minlength=k) for j in range(values.shape[1])]
        )
        updated = sums / counts[:, np.newaxis]
        shift = float(np.max(np.linalg.norm(updated - centroids, axis=1)))
        centroids = updated
        if shift < tol:
            break

    labels, nearest = _assign(values, centroids)
    labels, nearest, centroids = _repair_empty(values, labels, nearest, centroids)
    inertia = float(nearest.sum())
    history.append(inertia)
    return centroids, labels, inertia, iterations, tuple(history)


def kmeans_fit(
    features,
    k,
    seed,
    max_iter=300,
    tol=1e-6,
    restarts=10,
    initial_centroids=(),
):
    """Best-of-``restarts`` k-means.

    Every restart seeds with k-means++ from its own generator, spawned from
    ``seed``. ``initial_centroids`` adds warm-start candidates that compete
    with the restarts. Ties in inertia go to the earliest candidate.
    """
    values = _features(features)
    n = values.shape[0]
    if k < 1:
        raise DataError("k must be >= 1")
    if k > n:
        raise DataError("k={} exceeds the number of pixels ({})".format(k, n))
    if restarts < 1 and not initial_centroids:
        raise DataError("restarts must be >= 1")

    sequences = np.random.SeedSequence(int(seed)).spawn(restarts)

    def run_restart(sequence):
        rng = np.random.Generator(np.random.PCG64(sequence))
        return lloyd(values, kmeans_plus_plus(values, k, rng), max_iter, tol)

    def run_warm(centroids):
        return lloyd(values, centroids, max_iter, tol)

    # Independent generators per restart: results do not depend on thread count.
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        runs = list(pool.map(run_restart, sequences))
        runs += list(pool.map(run_warm, initial_centroids))

    best = min(range(len(runs)), key=lambda i: (runs[i][2], i))
    centroids, labels, inertia, iterations, history = runs[best]
    logger.debug("k=%d best inertia %.6g after %d iterations", k, inertia, iterations)
    return ClusterModel(
        k=k,
        centroids=centroids,
        labels=labels.astype(np.int64),
        inertia=inertia,
        iterations_run=iterations,
        seed=int(seed),
        inertia_history=history,
    )


def _warm_start(values, model):
    """Previous centroids plus the point farthest from its centroid."""
    _, nearest = _assign(values, model.centroids)
    farthest = values[int(np.argmax(nearest))]
    return np.vstack([model.centroids, farthest])


def elbow_sweep(
    features,
    seed,
    k_min=2,
    k_max=12,
    max_iter=300,
    tol=1e-6,
    restarts=10,
):
    values = _features(features)
    if k_min < 1:
        raise DataError("k_min must be >= 1")
    if k_max < k_min + 2:
        raise DataError("k_max must be >= k_min + 2 for elbow detection")
    if values.shape[0] < k_max:
        raise DataError(
            "k_max={} exceeds the number of pixels ({})".format(k_max, values.shape[0])
        )

    models = []
    for k in range(k_min, k_max + 1):
        warm = (_warm_start(values, models[-1]),) if models else ()
        models.append(
            kmeans_fit(
                values,
                k,
                seed,
                max_iter=max_iter,
                tol=tol,
                restarts=restarts,
                initial_centroids=warm,
            )
        )
        logger.info("elbow k=%d wcss=%.6g", k, models[-1].inertia)
    return ElbowCurve(
        k_values=tuple(range(k_min, k_max + 1)),
        wcss=tuple(model.inertia for model in models),
        models=tuple(models),
    )


def kneedle_detect(curve):
    """Return the k of maximum gap between the normalized WCSS curve and the
    chord joining its first and last points."""
    k_values = np.asarray(curve.k_values, dtype=np.float64)
    wcss = np.asarray(curve.wcss, dtype=np.float64)
    if k_values.size < 3:
        raise DataError("elbow detection needs at least 3 points")
    span = wcss.max() - wcss.min()
    if not span > 0:
        raise NumericError("flat WCSS curve")

    x = (k_values - k_values[0]) / (k_values[-1] - k_values[0])
    y = (wcss - wcss.min()) / span
    gaps = (1.0 - x) - y
    best = int(np.argmax(gaps))
    if gaps[best] <= 1e-12:
        raise NoElbowError("no elbow: the curve never falls below its chord")
    logger.info("elbow at k=%d (normalized gap %.4f)", curve.k_values[best], gaps[best])
    return curve.k_values[best]


def save_cluster_model(model, path):
    try:
        os.makedirs(path, exist_ok=True)
        dump_json(
            {
                "k": model.k,
                "m": int(model.centroids.shape[1]),
                "seed": model.seed,
                "inertia": model.inertia,
                "iterations": model.iterations_run,
            },
            os.path.join(path, CLUSTERS_FILE),
        )
        model.centroids.astype(_CENTROIDS_DTYPE).tofile(os.path.join(path, CENTROIDS_FILE))
    except OSError as e:
        raise DataError("unwritable path {}: {}".format(path, e))


def load_cluster_model(path, labels=None):
    try:
        document = load_json(os.path.join(path, CLUSTERS_FILE))
        centroids = np.fromfile(os.path.join(path, CENTROIDS_FILE), dtype=_CENTROIDS_DTYPE)
        k = int(document["k"])
    except (OSError, KeyError, ValueError) as e:
        raise DataError("cannot load cluster model from {}: {}".format(path, e))
    if centroids.size % k:
        raise DataError("payload size mismatch in {}".format(path))
    return ClusterModel(
        k=k,
        centroids=centroids.reshape(k, -1),
        labels=np.asarray(labels if labels is not None else (), dtype=np.int64),
        inertia=float(document["inertia"]),
        iterations_run=int(document["iterations"]),
        seed=int(document["seed"]),
    )


def write_elbow_csv(curve, path):
    """``k,wcss`` rows, plus the validity columns when the curve was scored."""
    columns, header = [curve.k_values, curve.wcss], ["k", "wcss"]
    if curve.calinski_harabasz:
        columns += [curve.calinski_harabasz, curve.davies_bouldin]
        header += ["calinski_harabasz", "davies_bouldin"]
    fmt = ["%d"] + ["%.17g"] * (len(columns) - 1)
    np.savetxt(
        path,
        np.column_stack(columns),
        fmt=fmt,
        delimiter=",",
        header=",".join(header),
        comments="",
    )


def read_elbow_csv(path):
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise DataError("cannot read elbow curve {}: {}".format(path, e))
    scores = {}
    if table.shape[1] >= 4:
        scores = dict(calinski_harabasz=table[:, 2], davies_bouldin=table[:, 3])
    return ElbowCurve(k_values=table[:, 0].astype(int), wcss=table[:, 1], **scores)

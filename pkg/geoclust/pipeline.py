"""
    geoclust.pipeline
    ~~~~~

    The end-to-end mapping pipeline::

        ingest -> scale -> reduce -> (elbow) -> cluster -> labels
               -> (majority filter) -> render -> evaluate

    Every stage persists its artifacts in the output directory, which carries a
    ``.partial`` marker until the run completes, and ``manifest.json`` records
    the configuration, the per-stage seeds and the package versions.
"""
import logging
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Union

import numpy as np

from . import __version__
from .catalog import Catalog
from .clustering import (
    ELBOW_FILE,
    elbow_sweep,
    kmeans_fit,
    kneedle_detect,
    save_cluster_model,
    write_elbow_csv,
)
from .dimred import (
    canonical_reduce,
    default_latent_dims,
    pca_fit,
    pca_inverse_transform,
    pca_transform,
    save_pca,
    stacked_reduce,
)
from .errors import ConfigError, DataError, GeoclustError, NumericError, StageError
from .metrics import (
    EvaluationReport,
    adjusted_rand_index,
    calinski_harabasz,
    compact_labels,
    davies_bouldin,
    overall_accuracy,
    read_ground_truth,
    score_elbow,
    silhouette_subsample,
)
from .neuralnet import TrainConfig, mse_loss, save_network
from .postprocess import (
    majority_filter,
    read_label_grid,
    render_map,
    write_label_grid,
)
from .preprocess import build_pixel_matrix, grid_to_labels, labels_to_grid, minmax_scale
from .raster_io import RasterGrid, crop, read_raster, write_raster
from .utils import derive_seed, dump_json, load_json, package_versions

logger = logging.getLogger(__name__)

#: CLI method name -> latent producer tag
METHODS = {"pca": "pca", "ae": "canonical_ae", "sae": "stacked_ae"}

LATENT_NODATA = -9999.0
PARTIAL_MARKER = ".partial"
MANIFEST_FILE = "manifest.json"
REPORT_FILE = "report.json"


@dataclass
class PipelineConfig:
    input: str
    out: str
    method: str = "sae"
    variance_target: float = 0.90
    latent_dim: Optional[int] = None
    hidden_dims: Optional[tuple] = None
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.005
    seed: int = 0
    k: Union[str, int] = "auto"
    k_min: int = 2
    k_max: int = 12
    restarts: int = 10
    max_iter: int = 300
    tol: float = 1e-6
    filter: Union[str, int] = 7
    truth: Optional[str] = None
    truth_grid: Optional[str] = None
    silhouette_sample: int = 10000
    crop: Optional[tuple] = None
    catalog: Optional[str] = None
    scene: Optional[str] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(
                "method must be one of {}, got {!r}".format(", ".join(METHODS), self.method)
            )
        if not self.input or not self.out:
            raise ConfigError("input and out are required")
        if os.path.abspath(self.input) == os.path.abspath(self.out):
            raise ConfigError("input and out must be distinct paths")
        if self.latent_dim is not None and self.method != "ae":
            raise ConfigError("latent_dim applies to method 'ae' only")
        if self.hidden_dims is not None:
            if self.method != "sae":
                raise ConfigError("hidden_dims applies to method 'sae' only")
            self.hidden_dims = tuple(int(d) for d in self.hidden_dims)
            if len(self.hidden_dims) != 2:
                raise ConfigError("hidden_dims needs exactly two widths")
        if not 0 < self.variance_target <= 1:
            raise ConfigError("variance_target must lie in (0, 1]")
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ConfigError("epochs, batch_size and learning_rate must be positive")

        self.k = _parse_k(self.k)
        if self.k_min < 1 or self.k_max < self.k_min + 2:
            raise ConfigError("auto k needs k_min >= 1 and k_max >= k_min + 2")
        if self.restarts < 1 or self.max_iter < 1:
            raise ConfigError("restarts and max_iter must be >= 1")
        self.filter = _parse_filter(self.filter)
        if self.silhouette_sample < 3:
            raise ConfigError("silhouette_sample must be >= 3")
        if self.crop is not None:
            self.crop = tuple(int(v) for v in self.crop)
            if len(self.crop) != 4:
                raise ConfigError("crop needs [row0, col0, rows, cols]")

    @property
    def producer(self):
        return METHODS[self.method]

    def train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=derive_seed(self.seed, "reduce"),
        )

    def to_document(self):
        document = asdict(self)
        for key in ("hidden_dims", "crop"):
            if document[key] is not None:
                document[key] = list(document[key])
        return document

    @classmethod
    def from_document(cls, document, **overrides):
        if not isinstance(document, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(document) - known)
        if unknown:
            raise ConfigError("unknown configuration keys: {}".format(", ".join(unknown)))
        merged = dict(document)
        # Flags win over the document.
        merged.update({key: value for key, value in overrides.items() if value is not None})
        try:
            return cls(**merged)
        except TypeError as e:
            raise ConfigError(str(e))


def _parse_k(value):
    if value in (None, "auto"):
        return "auto"
    try:
        k = int(value)
    except (TypeError, ValueError):
        raise ConfigError("k must be 'auto' or a positive integer, got {!r}".format(value))
    if k < 1:
        raise ConfigError("k must be >= 1")
    return k


def _parse_filter(value):
    if value in (None, "off", False):
        return "off"
    try:
        kernel = int(value)
    except (TypeError, ValueError):
        raise ConfigError("filter must be 'off' or an odd kernel size, got {!r}".format(value))
    if kernel < 3 or kernel % 2 == 0:
        raise ConfigError("filter kernel must be odd and >= 3")
    return kernel


def load_config(path=None, **overrides):
    """Build a :class:`PipelineConfig` from an optional JSON document plus
    command line overrides (``None`` overrides are ignored)."""
    document = {}
    if path is not None:
        try:
            document = load_json(path)
        except OSError as e:
            raise ConfigError("cannot read config {}: {}".format(path, e))
        except ValueError as e:
            raise ConfigError("malformed config {}: {}".format(path, e))
    return PipelineConfig.from_document(document, **overrides)


@contextmanager
def stage(name):
    """Tag any error raised inside the block with the stage name."""
    logger.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except GeoclustError as e:
        raise StageError(name, e) from e
    except OSError as e:
        raise StageError(name, DataError(str(e))) from e
    except (ArithmeticError, np.linalg.LinAlgError) as e:
        raise StageError(name, NumericError(str(e))) from e
    except Exception as e:
        logger.exception("unexpected error in stage %s", name)
        raise StageError(name, e) from e


def align_truth(grid, truth=None, truth_grid=None, window=None):
    """Check the truth grid covers the scene ``grid`` and move both truths into
    the crop ``window``; sample points outside the window are dropped."""
    if truth_grid is not None and truth_grid.labels.shape != (grid.rows, grid.cols):
        raise DataError(
            "truth grid is {}x{}, scene is {}x{}".format(
                truth_grid.rows, truth_grid.cols, grid.rows, grid.cols
            )
        )
    if window is None:
        return truth, truth_grid

    row0, col0, rows, cols = window
    if truth_grid is not None:
        truth_grid = replace(
            truth_grid, labels=truth_grid.labels[row0 : row0 + rows, col0 : col0 + cols]
        )
    if truth is not None:
        inside = [
            (r - row0, c - col0, k)
            for r, c, k in truth.points
            if row0 <= r < row0 + rows and col0 <= c < col0 + cols
        ]
        if len(inside) < len(truth.points):
            dropped = len(truth.points) - len(inside)
            logger.warning("%d truth point(s) fall outside the crop", dropped)
        truth = replace(truth, points=tuple(inside)) if inside else None
    return truth, truth_grid


@dataclass
class Reduction:
    """Latent features plus what the reducer learned along the way."""

    latent: object
    m_pca: int
    pca_model: object
    networks: tuple = ()
    losses: dict = field(default_factory=dict)
    reconstruction_loss: Optional[float] = None


def reduce_matrix(
    matrix, method, train_config, variance_target=0.90, latent_dim=None, hidden_dims=None
):
    """Run the reducer named by ``method`` (``pca``, ``ae`` or ``sae``) on a
    scaled matrix. PCA is always fitted: its width sets the default latent
    sizes of the autoencoders."""
    pca_model = pca_fit(matrix, variance_target)
    m_pca = pca_model.m
    canonical_dim, stacked_dims = default_latent_dims(matrix.n_bands, m_pca)

    if method == "pca":
        latent = pca_transform(pca_model, matrix)
        loss = mse_loss(pca_inverse_transform(pca_model, latent), matrix.values)
        return Reduction(latent=latent, m_pca=m_pca, pca_model=pca_model, reconstruction_loss=loss)

    if method == "ae":
        result = canonical_reduce(matrix, latent_dim or canonical_dim, train_config)
        return Reduction(
            latent=result.latent,
            m_pca=m_pca,
            pca_model=pca_model,
            networks=(result.network,),
            losses={"autoencoder": result.losses},
            reconstruction_loss=mse_loss(result.reconstruct(matrix.values), matrix.values),
        )

    if method == "sae":
        result = stacked_reduce(matrix, hidden_dims or stacked_dims, train_config)
        first, second = result.losses
        return Reduction(
            latent=result.latent,
            m_pca=m_pca,
            pca_model=pca_model,
            networks=result.networks,
            losses={"stage1": first, "stage2": second},
            reconstruction_loss=mse_loss(result.reconstruct(matrix.values), matrix.values),
        )

    raise ConfigError("unknown method {!r}".format(method))


def latent_to_raster(latent, matrix, geotransform=None):
    """Place latent rows back on the grid; pixels without data get -9999."""
    rows, cols = matrix.grid_shape
    values = np.full((rows, cols, latent.m), LATENT_NODATA)
    values[matrix.index_map[:, 0], matrix.index_map[:, 1]] = latent.values
    return RasterGrid(
        values=values,
        nodata_value=LATENT_NODATA,
        geotransform=geotransform,
        band_names=["z{}".format(i) for i in range(latent.m)],
    )


def evaluate_labels(
    features,
    labels,
    producer,
    seed,
    label_grid=None,
    truth=None,
    truth_grid=None,
    index_map=None,
    silhouette_sample=10000,
):
    """Score one labelling of ``features``; clusters missing from ``labels``
    (e.g. removed by filtering) are compacted away first. With a single
    cluster left the validity indices are undefined and stay ``None``."""
    labels = np.asarray(labels, dtype=np.int64)
    compact = compact_labels(labels)
    k = int(compact.max()) + 1
    if k < int(labels.max()) + 1:
        logger.warning("%d cluster(s) vanished; scoring %d", int(labels.max()) + 1 - k, k)

    report = EvaluationReport(k=k, producer=producer)
    if k < 2:
        logger.warning("only one cluster to score; validity indices left empty")
    else:
        report.calinski_harabasz = calinski_harabasz(features, compact)
        report.davies_bouldin = davies_bouldin(features, compact)
        report.silhouette = silhouette_subsample(
            features, compact, seed=derive_seed(seed, "silhouette"), sample_size=silhouette_sample
        )
    if truth is not None and label_grid is not None:
        accuracy = overall_accuracy(label_grid, truth)
        report.overall_accuracy = accuracy.accuracy
        report.cluster_to_class = accuracy.cluster_to_class
        report.excluded_points = accuracy.excluded_points
    if truth_grid is not None and index_map is not None:
        report.adjusted_rand = adjusted_rand_index(grid_to_labels(truth_grid, index_map), labels)
    return report


@dataclass
class PipelineResult:
    out: str
    manifest: dict
    report: dict


def run_pipeline(config):
    """Execute every stage for ``config`` and return the manifest and report."""
    out = config.out
    os.makedirs(out, exist_ok=True)
    marker = os.path.join(out, PARTIAL_MARKER)
    with open(marker, "w", encoding="utf-8") as f:
        f.write("run in progress\n")

    artifacts = []
    seeds = {
        "seed": config.seed,
        "reduce": derive_seed(config.seed, "reduce"),
        "reduce.stage2": derive_seed(derive_seed(config.seed, "reduce"), "reduce.stage2"),
        "elbow": derive_seed(config.seed, "elbow"),
        "kmeans": derive_seed(config.seed, "kmeans"),
        "silhouette": derive_seed(config.seed, "silhouette"),
    }

    def artifact(*parts):
        artifacts.append("/".join(parts))
        return os.path.join(out, *parts)

    try:
        with stage("ingest"):
            scene = read_raster(config.input)
            truth, truth_grid = align_truth(
                scene,
                truth=read_ground_truth(config.truth) if config.truth else None,
                truth_grid=read_label_grid(config.truth_grid) if config.truth_grid else None,
                window=config.crop,
            )
            grid = crop(scene, *config.crop) if config.crop is not None else scene

        with stage("scale"):
            matrix = build_pixel_matrix(grid)
            scaled, scaling = minmax_scale(matrix)
            scaling.save(artifact("scaling.json"))

        with stage("reduce"):
            reduction = reduce_matrix(
                scaled,
                config.method,
                config.train_config(),
                variance_target=config.variance_target,
                latent_dim=config.latent_dim,
                hidden_dims=config.hidden_dims,
            )
            latent = reduction.latent
            save_pca(reduction.pca_model, artifact("pca"))
            for i, network in enumerate(reduction.networks):
                path = artifact("autoencoder{}".format(i + 1))
                save_network(network, path, config.train_config())
            write_raster(latent_to_raster(latent, scaled, grid.geotransform), artifact("latent"))

        curve = None
        if config.k == "auto":
            with stage("elbow"):
                curve = elbow_sweep(
                    latent,
                    seeds["elbow"],
                    k_min=config.k_min,
                    k_max=config.k_max,
                    max_iter=config.max_iter,
                    tol=config.tol,
                    restarts=config.restarts,
                )
                curve = score_elbow(curve, latent)
                write_elbow_csv(curve, artifact(ELBOW_FILE))
                k = kneedle_detect(curve)

        with stage("cluster"):
            if curve is not None:
                model = curve.model_for(k)
            else:
                k = config.k
                model = kmeans_fit(
                    latent,
                    k,
                    seeds["kmeans"],
                    max_iter=config.max_iter,
                    tol=config.tol,
                    restarts=config.restarts,
                )
            save_cluster_model(model, artifact("clusters"))
            raw_grid = labels_to_grid(
                model.labels,
                scaled.index_map,
                grid.rows,
                grid.cols,
                k=k,
                geotransform=grid.geotransform,
            )
            write_label_grid(raw_grid, artifact("labels"))

        filtered_grid = None
        if config.filter != "off":
            with stage("filter"):
                filtered_grid = majority_filter(raw_grid, config.filter)
                write_label_grid(filtered_grid, artifact("labels_filtered"))

        with stage("render"):
            with open(artifact("map.png"), "wb") as f:
                f.write(render_map(raw_grid))
            if filtered_grid is not None:
                with open(artifact("map_filtered.png"), "wb") as f:
                    f.write(render_map(filtered_grid))

        with stage("evaluate"):
            variants = {"raw": raw_grid}
            if filtered_grid is not None:
                variants["filtered"] = filtered_grid
            report = {}
            for variant, label_grid in variants.items():
                evaluation = evaluate_labels(
                    latent,
                    grid_to_labels(label_grid, scaled.index_map),
                    latent.producer,
                    config.seed,
                    label_grid=label_grid,
                    truth=truth,
                    truth_grid=truth_grid,
                    index_map=scaled.index_map,
                    silhouette_sample=config.silhouette_sample,
                )
                evaluation.extra["reconstruction_loss"] = reduction.reconstruction_loss
                if reduction.losses:
                    evaluation.extra["epoch_losses"] = reduction.losses
                report[variant] = evaluation.to_document()
            dump_json(report, artifact(REPORT_FILE))

        manifest = {
            "scene": config.scene or os.path.basename(os.path.normpath(config.input)),
            "output_dir": out,
            "config": config.to_document(),
            "seeds": seeds,
            "k": k,
            "k_policy": "auto" if curve is not None else "fixed",
            "m_pca": reduction.m_pca,
            "latent_width": latent.m,
            "artifacts": artifacts + [MANIFEST_FILE],
            "versions": dict(package_versions(), geoclust=__version__),
        }
        dump_json(manifest, os.path.join(out, MANIFEST_FILE))

        if config.catalog:
            with stage("catalog"):
                catalog = Catalog(uri=config.catalog)
                catalog.create_all()
                catalog.record_run(manifest, report)
    except StageError as e:
        with open(marker, "w", encoding="utf-8") as f:
            f.write("{}\n".format(e))
        logger.error("pipeline failed: %s", e)
        raise

    os.remove(marker)
    logger.info("pipeline finished: k=%d, outputs in %s", k, out)
    return PipelineResult(out=out, manifest=manifest, report=report)

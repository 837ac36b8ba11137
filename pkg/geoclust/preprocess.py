"""
    geoclust.preprocess
    ~~~~~

    Turns rasters into pixel matrices (one row per valid pixel, one column per
    band), scales them for learning, and maps per-pixel labels back onto the
    grid.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, NumericError
from .postprocess import NODATA_LABEL, LabelGrid
from .utils import dump_json, load_json

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PixelMatrix:
    #: ``n_pixels x n_bands`` values, no nodata.
    values: np.ndarray
    #: ``n_pixels x 2`` (row, col) of every pixel in the source grid.
    index_map: np.ndarray
    #: (rows, cols) of the source grid.
    grid_shape: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, np.newaxis]
        index_map = np.asarray(self.index_map, dtype=np.int64).reshape(-1, 2)
        if values.shape[0] != index_map.shape[0]:
            raise DataError("values and index_map lengths differ")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "index_map", index_map)
        object.__setattr__(self, "grid_shape", tuple(int(v) for v in self.grid_shape))

    @property
    def n_pixels(self):
        return self.values.shape[0]

    @property
    def n_bands(self):
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class ScalingParams:
    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        minimum = np.asarray(self.minimum, dtype=np.float64)
        maximum = np.asarray(self.maximum, dtype=np.float64)
        if minimum.shape != maximum.shape or np.any(minimum > maximum):
            raise DataError("scaling needs min <= max per band")
        object.__setattr__(self, "minimum", minimum)
        object.__setattr__(self, "maximum", maximum)

    def apply(self, values):
        """Scale raw ``values`` to [0, 1] with these parameters; constant bands map to 0."""
        values = np.asarray(values, dtype=np.float64)
        span = self.maximum - self.minimum
        safe = np.where(span > 0, span, 1.0)
        scaled = (values - self.minimum) / safe
        scaled[:, span == 0] = 0.0
        return scaled

    def invert(self, scaled):
        scaled = np.asarray(scaled, dtype=np.float64)
        return scaled * (self.maximum - self.minimum) + self.minimum

    def to_document(self):
        return {"minimum": self.minimum.tolist(), "maximum": self.maximum.tolist()}

    @classmethod
    def from_document(cls, document):
        return cls(minimum=document["minimum"], maximum=document["maximum"])

    def save(self, path):
        dump_json(self.to_document(), path)

    @classmethod
    def load(cls, path):
        return cls.from_document(load_json(path))


def build_pixel_matrix(grid):
    valid = grid.valid_mask
    if not valid.any():
        raise DataError("all pixels are nodata")
    # np.nonzero scans in row-major order.
    rows, cols = np.nonzero(valid)
    return PixelMatrix(
        values=grid.values[rows, cols, :],
        index_map=np.column_stack([rows, cols]),
        grid_shape=(grid.rows, grid.cols),
    )


def fit_scaling(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DataError("cannot scale an empty matrix")
    if not np.all(np.isfinite(values)):
        raise NumericError("non-finite input to scaling")
    return ScalingParams(minimum=values.min(axis=0), maximum=values.max(axis=0))


def minmax_scale(matrix):
    params = fit_scaling(matrix.values)
    scaled = replace(matrix, values=params.apply(matrix.values))
    logger.debug("min-max scaled %d x %d matrix", matrix.n_pixels, matrix.n_bands)
    return scaled, params


def labels_to_grid(labels, index_map, rows, cols, k=None, geotransform=None):
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    index_map = np.asarray(index_map, dtype=np.int64).reshape(-1, 2)
    if labels.shape[0] != index_map.shape[0]:
        raise DataError(
            "length mismatch: {} labels for {} positions".format(
                labels.shape[0], index_map.shape[0]
            )
        )
    if index_map.size and (
        index_map.min() < 0
        or index_map[:, 0].max() >= rows
        or index_map[:, 1].max() >= cols
    ):
        raise DataError("index out of bounds for {}x{} grid".format(rows, cols))
    if labels.size and (labels.min() < 0 or labels.max() >= NODATA_LABEL):
        raise DataError("labels must lie in [0, {})".format(NODATA_LABEL))

    grid = np.full((rows, cols), NODATA_LABEL, dtype=np.uint16)
    grid[index_map[:, 0], index_map[:, 1]] = labels
    return LabelGrid(labels=grid, k=k, geotransform=geotransform)


def grid_to_labels(grid, index_map):
    """Read the labels of ``grid`` at every (row, col) of ``index_map``."""
    index_map = np.asarray(index_map, dtype=np.int64).reshape(-1, 2)
    return grid.labels[index_map[:, 0], index_map[:, 1]].astype(np.int64)

"""
    geoclust.raster_io
    ~~~~~

    Reading, writing, cropping, resampling and stacking of multiband rasters
    stored in the flat-binary directory format::

        scene/
            header.json   rows, cols, bands, dtype="f32le", band_names,
                          nodata_value, geotransform
            bands.bin     rows*cols*bands little-endian float32, band-sequential

    Geotransforms are ``[origin_x, origin_y, pixel_width, pixel_height,
    rotation_x, rotation_y]``.
"""
import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

HEADER_FILE = "header.json"
PAYLOAD_FILE = "bands.bin"
RASTER_DTYPE = "f32le"

_DISK_DTYPE = np.dtype("<f4")


@dataclass(frozen=True)
class RasterHeader:
    rows: int
    cols: int
    bands: int
    dtype: str = RASTER_DTYPE
    band_names: Optional[list] = None
    nodata_value: Optional[float] = None
    geotransform: Optional[tuple] = None

    def __post_init__(self):
        for name in ("rows", "cols", "bands"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise DataError("malformed header: {} must be an integer >= 1".format(name))
        if self.dtype != RASTER_DTYPE:
            raise DataError("malformed header: dtype must be {!r}".format(RASTER_DTYPE))
        if self.band_names is not None and len(self.band_names) != self.bands:
            raise DataError("malformed header: band_names length != bands")
        if self.geotransform is not None and len(self.geotransform) != 6:
            raise DataError("malformed header: geotransform needs 6 numbers")

    @classmethod
    def from_document(cls, document):
        if not isinstance(document, dict):
            raise DataError("malformed header: expected a JSON object")
        try:
            geotransform = document.get("geotransform")
            band_names = document.get("band_names")
            nodata = document.get("nodata_value")
            return cls(
                rows=document["rows"],
                cols=document["cols"],
                bands=document["bands"],
                dtype=document.get("dtype"),
                band_names=list(band_names) if band_names is not None else None,
                nodata_value=float(nodata) if nodata is not None else None,
                geotransform=tuple(float(v) for v in geotransform)
                if geotransform is not None
                else None,
            )
        except KeyError as e:
            raise DataError("malformed header: missing key {}".format(e))
        except (TypeError, ValueError) as e:
            raise DataError("malformed header: {}".format(e))

    def to_document(self):
        document = {
            "rows": self.rows,
            "cols": self.cols,
            "bands": self.bands,
            "dtype": self.dtype,
        }
        if self.band_names is not None:
            document["band_names"] = list(self.band_names)
        if self.nodata_value is not None:
            document["nodata_value"] = self.nodata_value
        if self.geotransform is not None:
            document["geotransform"] = list(self.geotransform)
        return document


@dataclass(frozen=True)
class RasterGrid:
    """A ``rows x cols x bands`` array of 64-bit reflectance values.

    A pixel is valid when none of its bands equals ``nodata_value``.
    """

    values: np.ndarray
    nodata_value: Optional[float] = None
    geotransform: Optional[tuple] = None
    band_names: Optional[list] = field(default=None, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 2:
            values = values[:, :, np.newaxis]
        if values.ndim != 3 or min(values.shape) < 1:
            raise DataError("raster values must be a non-empty rows x cols x bands array")
        object.__setattr__(self, "values", values)
        if self.geotransform is not None:
            object.__setattr__(
                self, "geotransform", tuple(float(v) for v in self.geotransform)
            )
        if not np.all(np.isfinite(values[~self.nodata_mask])):
            raise DataError("non-finite values outside nodata")

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def bands(self):
        return self.values.shape[2]

    @property
    def nodata_mask(self):
        """Per-value mask of nodata entries."""
        if self.nodata_value is None:
            return np.zeros(self.values.shape, dtype=bool)
        if np.isnan(self.nodata_value):
            return np.isnan(self.values)
        return self.values == self.nodata_value

    @property
    def valid_mask(self):
        """Per-pixel mask, ``True`` where every band holds data."""
        return ~self.nodata_mask.any(axis=2)

    def header(self):
        return RasterHeader(
            rows=self.rows,
            cols=self.cols,
            bands=self.bands,
            band_names=list(self.band_names) if self.band_names is not None else None,
            nodata_value=self.nodata_value,
            geotransform=self.geotransform,
        )

    def __eq__(self, other):
        if not isinstance(other, RasterGrid):
            return NotImplemented
        return (
            self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values, equal_nan=True)
            and _same_optional(self.nodata_value, other.nodata_value)
            and self.geotransform == other.geotransform
        )


def _same_optional(a, b):
    if a is None or b is None:
        return a is b
    return a == b or (np.isnan(a) and np.isnan(b))


def read_raster(path):
    header_path = os.path.join(path, HEADER_FILE)
    payload_path = os.path.join(path, PAYLOAD_FILE)
    for required in (header_path, payload_path):
        if not os.path.isfile(required):
            raise DataError("missing file: {}".format(required))

    try:
        with open(header_path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except (ValueError, UnicodeDecodeError) as e:
        raise DataError("malformed header: {}".format(e))
    header = RasterHeader.from_document(document)

    expected = header.rows * header.cols * header.bands * _DISK_DTYPE.itemsize
    actual = os.path.getsize(payload_path)
    if actual != expected:
        raise DataError(
            "payload size mismatch: {} has {} bytes, header implies {}".format(
                payload_path, actual, expected
            )
        )

    payload = np.fromfile(payload_path, dtype=_DISK_DTYPE)
    # Band-sequential on disk, band-last in memory.
    values = payload.reshape(header.bands, header.rows, header.cols).transpose(1, 2, 0)
    nodata = header.nodata_value
    if nodata is not None:
        nodata = float(np.float32(nodata))

    logger.debug(
        "read raster %s (%dx%dx%d)", path, header.rows, header.cols, header.bands
    )
    return RasterGrid(
        values=values.astype(np.float64),
        nodata_value=nodata,
        geotransform=header.geotransform,
        band_names=header.band_names,
    )


def write_raster(grid, path):
    try:
        os.makedirs(path, exist_ok=True)
        with open(os.path.join(path, HEADER_FILE), "w", encoding="utf-8") as f:
            json.dump(grid.header().to_document(), f, indent=2)
            f.write("\n")
        payload = np.ascontiguousarray(grid.values.transpose(2, 0, 1), dtype=_DISK_DTYPE)
        payload.tofile(os.path.join(path, PAYLOAD_FILE))
    except OSError as e:
        raise DataError("unwritable path {}: {}".format(path, e))


def resample_nearest(grid, target_rows, target_cols):
    """Nearest-neighbour resampling with the pixel-centre rule::

        source_row = floor((row + 0.5) * rows / target_rows)
    """
    if target_rows < 1 or target_cols < 1:
        raise DataError("resample targets must be >= 1")
    if (target_rows, target_cols) == (grid.rows, grid.cols):
        return grid

    # Integer form of the pixel-centre rule, exact for any grid size.
    row_index = ((2 * np.arange(target_rows) + 1) * grid.rows) // (2 * target_rows)
    col_index = ((2 * np.arange(target_cols) + 1) * grid.cols) // (2 * target_cols)
    values = grid.values[row_index[:, np.newaxis], col_index[np.newaxis, :], :]

    geotransform = grid.geotransform
    if geotransform is not None:
        ox, oy, px, py, rx, ry = geotransform
        geotransform = (
            ox,
            oy,
            px * grid.cols / target_cols,
            py * grid.rows / target_rows,
            rx,
            ry,
        )
    return replace(grid, values=values, geotransform=geotransform)


def stack_bands(grids):
    """Resample every grid to the finest grid present and concatenate bands
    in list order. A pixel is nodata in the result when any source band is;
    the result sentinel is a source sentinel, -9999 or NaN, whichever first
    matches no valid value."""
    grids = list(grids)
    if not grids:
        raise DataError("stack_bands needs at least one raster")

    origins = [g.geotransform[:2] for g in grids if g.geotransform is not None]
    for origin in origins[1:]:
        if not np.allclose(origin, origins[0], rtol=0.0, atol=1e-9):
            raise DataError(
                "incompatible geotransform origins: {} vs {}".format(origin, origins[0])
            )

    target = max(grids, key=lambda g: (g.rows * g.cols, g.rows))
    resampled = [resample_nearest(g, target.rows, target.cols) for g in grids]

    valid = np.logical_and.reduce([g.valid_mask for g in resampled])
    values = np.concatenate([g.values for g in resampled], axis=2)

    candidates = [g.nodata_value for g in grids if g.nodata_value is not None]
    nodata = None
    if candidates or not valid.all():
        nodata = _free_sentinel(candidates + [-9999.0], values[valid])
        values[~valid] = nodata

    band_names = None
    if all(g.band_names is not None for g in grids):
        band_names = [name for g in grids for name in g.band_names]

    logger.info(
        "stacked %d rasters into %dx%dx%d", len(grids), target.rows, target.cols, values.shape[2]
    )
    return RasterGrid(
        values=values,
        nodata_value=nodata,
        geotransform=target.geotransform,
        band_names=band_names,
    )


def _free_sentinel(candidates, valid_values):
    """The first candidate no valid value equals, else NaN."""
    for candidate in candidates:
        if np.isnan(candidate) or not np.any(valid_values == candidate):
            return float(candidate)
    return float("nan")


def crop(grid, row0, col0, rows, cols):
    if (
        min(row0, col0) < 0
        or rows < 1
        or cols < 1
        or row0 + rows > grid.rows
        or col0 + cols > grid.cols
    ):
        raise DataError(
            "window ({}, {}, {}, {}) out of bounds for {}x{} raster".format(
                row0, col0, rows, cols, grid.rows, grid.cols
            )
        )
    values = grid.values[row0 : row0 + rows, col0 : col0 + cols, :].copy()

    geotransform = grid.geotransform
    if geotransform is not None:
        ox, oy, px, py, rx, ry = geotransform
        geotransform = (
            ox + col0 * px + row0 * rx,
            oy + col0 * ry + row0 * py,
            px,
            py,
            rx,
            ry,
        )
    return replace(grid, values=values, geotransform=geotransform)

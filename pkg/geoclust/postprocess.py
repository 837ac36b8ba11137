"""
    geoclust.postprocess
    ~~~~~

    Label maps: the :class:`LabelGrid` container and its disk format, majority
    filtering, and palette rendering to PNG.
"""
import io
import json
import logging
import os
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DataError

logger = logging.getLogger(__name__)

#: Label value marking pixels without a valid observation.
NODATA_LABEL = 65535

HEADER_FILE = "header.json"
PAYLOAD_FILE = "labels.bin"
LABEL_DTYPE = "u16le"

#: Twelve well separated colours, used when no palette is given.
DEFAULT_PALETTE = (
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
    (0, 128, 128),
    (170, 110, 40),
)

_DISK_DTYPE = np.dtype("<u2")
# Palette slot used for nodata in rendered images.
_NODATA_INDEX = 255


@dataclass(frozen=True, eq=False)
class LabelGrid:
    """A ``rows x cols`` map of cluster (or class) ids."""

    labels: np.ndarray
    k: Optional[int] = None
    palette: Optional[tuple] = None
    geotransform: Optional[tuple] = None

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or min(labels.shape) < 1:
            raise DataError("label grid must be a non-empty rows x cols array")
        if labels.size and (labels.min() < 0 or labels.max() > NODATA_LABEL):
            raise DataError("labels must fit in unsigned 16 bits")
        labels = labels.astype(np.uint16)
        object.__setattr__(self, "labels", labels)
        if self.palette is not None:
            object.__setattr__(
                self, "palette", tuple(tuple(int(c) for c in rgb) for rgb in self.palette)
            )
        if self.k is not None:
            present = labels[labels != NODATA_LABEL]
            if present.size and int(present.max()) >= self.k:
                raise DataError("label {} exceeds declared k={}".format(present.max(), self.k))

    @property
    def rows(self):
        return self.labels.shape[0]

    @property
    def cols(self):
        return self.labels.shape[1]

    @property
    def valid_mask(self):
        return self.labels != NODATA_LABEL


def write_label_grid(grid, path):
    document = {"rows": grid.rows, "cols": grid.cols, "dtype": LABEL_DTYPE}
    if grid.k is not None:
        document["k"] = grid.k
    if grid.palette is not None:
        document["palette"] = [list(rgb) for rgb in grid.palette]
    if grid.geotransform is not None:
        document["geotransform"] = list(grid.geotransform)
    try:
        os.makedirs(path, exist_ok=True)
        with open(os.path.join(path, HEADER_FILE), "w", encoding="utf-8") as f:
            json.dump(document, f, indent=2)
            f.write("\n")
        grid.labels.astype(_DISK_DTYPE).tofile(os.path.join(path, PAYLOAD_FILE))
    except OSError as e:
        raise DataError("unwritable path {}: {}".format(path, e))


def read_label_grid(path):
    header_path = os.path.join(path, HEADER_FILE)
    payload_path = os.path.join(path, PAYLOAD_FILE)
    for required in (header_path, payload_path):
        if not os.path.isfile(required):
            raise DataError("missing file: {}".format(required))
    try:
        with open(header_path, "r", encoding="utf-8") as f:
            document = json.load(f)
        rows, cols = int(document["rows"]), int(document["cols"])
        if document.get("dtype") != LABEL_DTYPE:
            raise DataError("malformed header: dtype must be {!r}".format(LABEL_DTYPE))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, DataError):
            raise
        raise DataError("malformed header: {}".format(e))

    expected = rows * cols * _DISK_DTYPE.itemsize
    if os.path.getsize(payload_path) != expected:
        raise DataError("payload size mismatch: expected {} bytes".format(expected))
    labels = np.fromfile(payload_path, dtype=_DISK_DTYPE).reshape(rows, cols)
    geotransform = document.get("geotransform")
    return LabelGrid(
        labels=labels,
        k=document.get("k"),
        palette=document.get("palette"),
        geotransform=tuple(geotransform) if geotransform is not None else None,
    )


def majority_filter(grid, kernel=7):
    """Replace every labelled pixel by the modal label of the ``kernel x kernel``
    window centred on it.

    Only in-bounds, non-nodata neighbours vote. On a tie the pixel keeps its own
    label when that label is among the modes, otherwise the lowest tied label
    wins. Nodata pixels pass through unchanged.
    """
    if kernel < 3 or kernel % 2 == 0:
        raise DataError("kernel must be an odd integer >= 3, got {}".format(kernel))

    labels = grid.labels
    valid = labels != NODATA_LABEL
    present = np.unique(labels[valid])
    if present.size <= 1:
        return grid

    window = np.ones((kernel, kernel), dtype=np.int32)
    counts = np.stack(
        [
            ndimage.correlate((labels == label).astype(np.int32), window, mode="constant", cval=0)
            for label in present
        ]
    )
    best = counts.max(axis=0)
    is_mode = counts == best
    # argmax over a boolean stack picks the first, i.e. lowest, tied label.
    lowest_mode = present[np.argmax(is_mode, axis=0)]

    own = np.searchsorted(present, np.where(valid, labels, present[0]))
    own_is_mode = np.take_along_axis(is_mode, own[np.newaxis], axis=0)[0]

    filtered = np.where(own_is_mode, labels, lowest_mode).astype(np.uint16)
    filtered[~valid] = NODATA_LABEL
    changed = int(np.count_nonzero(filtered != labels))
    logger.info("majority filter (kernel %d) changed %d pixels", kernel, changed)
    return replace(grid, labels=filtered)


def render_map(grid, palette=None):
    """Render ``grid`` as an 8-bit palette PNG and return the encoded bytes.
    Nodata pixels are black."""
    palette = tuple(palette or grid.palette or DEFAULT_PALETTE)
    if len(palette) > _NODATA_INDEX:
        raise DataError("palettes are limited to {} colours".format(_NODATA_INDEX))

    labels = grid.labels
    valid = labels != NODATA_LABEL
    if valid.any() and int(labels[valid].max()) >= len(palette):
        raise DataError(
            "label {} exceeds palette of {} colours".format(labels[valid].max(), len(palette))
        )

    indices = np.full(labels.shape, _NODATA_INDEX, dtype=np.uint8)
    indices[valid] = labels[valid]

    flat = [0] * (3 * 256)
    for i, rgb in enumerate(palette):
        flat[3 * i : 3 * i + 3] = [int(c) for c in rgb]

    # putpalette turns the "L" image into a "P" image.
    image = Image.fromarray(indices)
    image.putpalette(flat)
    buffer = io.BytesIO()
    image.save(buffer, format="PNG", optimize=False)
    return buffer.getvalue()

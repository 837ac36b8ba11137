"""
    geoclust.synthetic
    ~~~~~

    Seeded synthetic scenes for self-contained testing: Voronoi "geological
    units" with class mean spectra plus Gaussian noise, and the matching truth
    map.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError
from .postprocess import LabelGrid
from .raster_io import RasterGrid
from .utils import derive_seed, make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SyntheticSceneSpec:
    rows: int = 128
    cols: int = 128
    n_bands: int = 8
    n_classes: int = 6
    #: ``n_classes x n_bands`` in [0, 1]; drawn from the seed when absent
    class_spectra: Optional[np.ndarray] = None
    noise_sigma: float = 0.02
    #: number of Voronoi sites, assigned round-robin to classes
    sites: int = 24
    seed: int = 0

    def __post_init__(self):
        if min(self.rows, self.cols, self.n_bands) < 1:
            raise DataError("rows, cols and n_bands must be >= 1")
        if self.n_classes < 2:
            raise DataError("n_classes must be >= 2")
        if self.sites < self.n_classes:
            raise DataError("need at least one Voronoi site per class")
        if self.noise_sigma < 0:
            raise DataError("noise_sigma must be >= 0")
        if self.class_spectra is not None:
            spectra = np.asarray(self.class_spectra, dtype=np.float64)
            if spectra.shape != (self.n_classes, self.n_bands):
                raise DataError("class_spectra must be n_classes x n_bands")
            if spectra.min() < 0 or spectra.max() > 1:
                raise DataError("class_spectra must lie in [0, 1]")
            object.__setattr__(self, "class_spectra", spectra)

    def spectra(self):
        if self.class_spectra is not None:
            return self.class_spectra
        return default_spectra(self.n_classes, self.n_bands, self.noise_sigma, self.seed)


def default_spectra(n_classes, n_bands, noise_sigma, seed, min_separation=None, tries=1000):
    """Random class spectra in [0.1, 0.9], redrawn until every pair of classes is
    at least ``min_separation`` apart (default ``10 * sigma * sqrt(n_bands)``)."""
    if min_separation is None:
        min_separation = 10.0 * noise_sigma * np.sqrt(n_bands)
    rng = make_rng(derive_seed(seed, "synthetic.spectra"))
    for _ in range(tries):
        spectra = rng.uniform(0.1, 0.9, size=(n_classes, n_bands))
        gaps = np.linalg.norm(spectra[:, np.newaxis] - spectra[np.newaxis], axis=2)
        if gaps[~np.eye(n_classes, dtype=bool)].min() >= min_separation:
            return spectra
    raise DataError("could not draw class spectra {} apart".format(min_separation))


def voronoi_classes(rows, cols, sites, n_classes, seed):
    """Class id of every pixel: the class of its nearest site (ties to the lowest
    site index), with site ``i`` belonging to class ``i % n_classes``."""
    rng = make_rng(derive_seed(seed, "synthetic.sites"))
    positions = np.column_stack(
        [rng.uniform(0, rows, size=sites), rng.uniform(0, cols, size=sites)]
    )
    site_class = np.arange(sites) % n_classes

    centres_r = np.arange(rows) + 0.5
    centres_c = np.arange(cols) + 0.5
    classes = np.empty((rows, cols), dtype=np.int64)
    for r in range(rows):
        d = (centres_r[r] - positions[:, 0]) ** 2 + (
            centres_c[:, np.newaxis] - positions[np.newaxis, :, 1]
        ) ** 2
        classes[r] = site_class[np.argmin(d, axis=1)]
    return classes


def generate_synthetic(spec):
    """Return ``(raster, truth)`` for ``spec``; identical for identical seeds."""
    spectra = spec.spectra()
    classes = voronoi_classes(spec.rows, spec.cols, spec.sites, spec.n_classes, spec.seed)

    values = spectra[classes]
    if spec.noise_sigma > 0:
        rng = make_rng(derive_seed(spec.seed, "synthetic.noise"))
        values = values + rng.normal(0.0, spec.noise_sigma, size=values.shape)
    values = np.clip(values, 0.0, 1.0)

    logger.info(
        "synthetic scene %dx%dx%d with %d classes (sigma=%g)",
        spec.rows,
        spec.cols,
        spec.n_bands,
        spec.n_classes,
        spec.noise_sigma,
    )
    raster = RasterGrid(
        values=values,
        band_names=["b{}".format(i) for i in range(spec.n_bands)],
        geotransform=(0.0, float(spec.rows), 1.0, -1.0, 0.0, 0.0),
    )
    truth = LabelGrid(labels=classes, k=spec.n_classes, geotransform=raster.geotransform)
    return raster, truth

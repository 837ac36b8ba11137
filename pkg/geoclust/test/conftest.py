from types import SimpleNamespace

import numpy as np
import pytest

from .. import catalog, metrics, postprocess, raster_io, synthetic
from ..utils import make_rng


def equidistant_spectra(n_classes, n_bands, low=0.2, high=0.8):
    """Class ``i`` is ``low`` everywhere except band ``i`` at ``high``: every pair
    of classes is the same distance apart."""
    spectra = np.full((n_classes, n_bands), low)
    spectra[np.arange(n_classes), np.arange(n_classes)] = high
    return spectra


def low_rank_data(n=4096, n_bands=8, rank=2, seed=5):
    """Rank-``rank`` data embedded in ``n_bands`` bands, inside [0.35, 0.65]."""
    rng = make_rng(seed)
    latent = rng.uniform(-1.0, 1.0, size=(n, rank))
    mixing = rng.uniform(-0.5, 0.5, size=(rank, n_bands))
    return 0.5 + 0.15 * latent @ mixing


def write_scene(path, spec, truth_points=30, seed=7):
    raster, truth = synthetic.generate_synthetic(spec)
    raster_io.write_raster(raster, str(path / "scene"))
    postprocess.write_label_grid(truth, str(path / "truth"))
    points = metrics.sample_ground_truth(truth, truth_points, seed)
    metrics.write_ground_truth(points, str(path / "truth.csv"))
    return SimpleNamespace(
        raster=raster,
        truth=truth,
        points=points,
        scene=str(path / "scene"),
        truth_grid=str(path / "truth"),
        truth_csv=str(path / "truth.csv"),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def two_class_scene(tmp_path):
    spec = synthetic.SyntheticSceneSpec(
        rows=32,
        cols=32,
        n_bands=4,
        n_classes=2,
        class_spectra=np.array([[0.0] * 4, [1.0] * 4]),
        noise_sigma=0.01,
        sites=6,
        seed=3,
    )
    return write_scene(tmp_path, spec)


@pytest.fixture(scope="module")
def six_class_scene(tmp_path_factory):
    spec = synthetic.SyntheticSceneSpec(
        rows=128,
        cols=128,
        n_bands=8,
        n_classes=6,
        class_spectra=equidistant_spectra(6, 8),
        noise_sigma=0.02,
        sites=24,
        seed=11,
    )
    return write_scene(tmp_path_factory.mktemp("six_class"), spec)


@pytest.fixture
def catalog_adapter():
    adapter = catalog.CatalogAdapter()
    adapter.config["CATALOG_DATABASE_URI"] = "sqlite:///:memory:"
    return adapter


@pytest.fixture
def runs(catalog_adapter):
    runs = catalog.Catalog(catalog_adapter)
    runs.create_all()
    yield runs
    runs.session.remove()
    runs.drop_all()

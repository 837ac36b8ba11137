import json
import os

import numpy as np
import pytest

from .. import raster_io
from ..errors import DataError


def write_payload(path, header, payload):
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "header.json"), "w", encoding="utf-8") as f:
        json.dump(header, f)
    np.asarray(payload, dtype="<f4").tofile(os.path.join(path, "bands.bin"))


def test_read_layout(tmp_path):
    write_payload(
        str(tmp_path / "r"),
        {"rows": 2, "cols": 2, "bands": 1, "dtype": "f32le"},
        [1, 2, 3, 4],
    )
    grid = raster_io.read_raster(str(tmp_path / "r"))

    assert grid.values.shape == (2, 2, 1)
    assert grid.values[0, 1, 0] == 2
    assert grid.values[1, 0, 0] == 3


def test_read_band_sequential(tmp_path):
    write_payload(
        str(tmp_path / "r"),
        {"rows": 1, "cols": 2, "bands": 2, "dtype": "f32le"},
        [1, 2, 10, 20],
    )
    grid = raster_io.read_raster(str(tmp_path / "r"))

    assert grid.values[0, 0].tolist() == [1, 10]
    assert grid.values[0, 1].tolist() == [2, 20]


def test_round_trip(tmp_path, rng):
    grid = raster_io.RasterGrid(
        values=rng.uniform(size=(3, 5, 2)),
        nodata_value=-9999.0,
        geotransform=(500000.0, 4100000.0, 30.0, -30.0, 0.0, 0.0),
        band_names=["vnir", "swir"],
    )
    raster_io.write_raster(grid, str(tmp_path / "r"))
    loaded = raster_io.read_raster(str(tmp_path / "r"))

    expected = grid.values.astype(np.float32).astype(np.float64)
    assert np.array_equal(loaded.values, expected)
    assert loaded.geotransform == grid.geotransform
    assert loaded.nodata_value == -9999.0
    assert loaded.band_names == ["vnir", "swir"]


def test_write_single_value_bytes(tmp_path):
    raster_io.write_raster(raster_io.RasterGrid(values=np.full((1, 1, 1), 0.5)), str(tmp_path))

    with open(tmp_path / "bands.bin", "rb") as f:
        assert f.read() == np.float32(0.5).astype("<f4").tobytes()


def test_write_records_nodata(tmp_path):
    values = np.ones((2, 2, 1))
    values[0, 0, 0] = -9999
    raster_io.write_raster(raster_io.RasterGrid(values=values, nodata_value=-9999.0), str(tmp_path))

    with open(tmp_path / "header.json", encoding="utf-8") as f:
        assert json.load(f)["nodata_value"] == -9999


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="missing file"):
        raster_io.read_raster(str(tmp_path / "nowhere"))


def test_payload_size_mismatch(tmp_path):
    write_payload(
        str(tmp_path / "r"),
        {"rows": 2, "cols": 2, "bands": 1, "dtype": "f32le"},
        [1, 2, 3],
    )
    with pytest.raises(DataError, match="payload size mismatch"):
        raster_io.read_raster(str(tmp_path / "r"))


@pytest.mark.parametrize(
    "header",
    [
        {"cols": 2, "bands": 1, "dtype": "f32le"},
        {"rows": 0, "cols": 2, "bands": 1, "dtype": "f32le"},
        {"rows": 2, "cols": 2, "bands": 1, "dtype": "f64le"},
        {"rows": 2, "cols": 2, "bands": 1, "dtype": "f32le", "band_names": ["a", "b"]},
    ],
)
def test_malformed_header(tmp_path, header):
    write_payload(str(tmp_path / "r"), header, [1, 2, 3, 4])
    with pytest.raises(DataError, match="malformed header"):
        raster_io.read_raster(str(tmp_path / "r"))


def test_header_not_json(tmp_path):
    write_payload(str(tmp_path / "r"), {}, [1])
    with open(tmp_path / "r" / "header.json", "w", encoding="utf-8") as f:
        f.write("{rows: 2")
    with pytest.raises(DataError, match="malformed header"):
        raster_io.read_raster(str(tmp_path / "r"))


def test_valid_mask():
    values = np.ones((2, 2, 2))
    values[1, 0, 1] = -9999
    grid = raster_io.RasterGrid(values=values, nodata_value=-9999.0)

    assert grid.valid_mask.tolist() == [[True, True], [False, True]]


def test_non_finite_outside_nodata():
    with pytest.raises(DataError):
        raster_io.RasterGrid(values=np.array([[[np.nan]]]))


def test_upsample_replicates_blocks():
    grid = raster_io.RasterGrid(
        values=np.array([[1.0, 2.0], [3.0, 4.0]]),
        geotransform=(0.0, 0.0, 2.0, -2.0, 0.0, 0.0),
    )
    resampled = raster_io.resample_nearest(grid, 4, 4)

    assert resampled.values[:, :, 0].tolist() == [
        [1, 1, 2, 2],
        [1, 1, 2, 2],
        [3, 3, 4, 4],
        [3, 3, 4, 4],
    ]
    assert resampled.geotransform == (0.0, 0.0, 1.0, -1.0, 0.0, 0.0)


def test_downsample_picks_centres():
    grid = raster_io.RasterGrid(values=np.array([[10.0, 11.0, 12.0, 13.0]]))
    resampled = raster_io.resample_nearest(grid, 1, 2)

    assert resampled.values[0, :, 0].tolist() == [11.0, 13.0]


def test_same_size_resample_is_identity(rng):
    grid = raster_io.RasterGrid(values=rng.uniform(size=(3, 4, 2)))
    assert raster_io.resample_nearest(grid, 3, 4) == grid


def test_resample_rejects_empty_target():
    grid = raster_io.RasterGrid(values=np.ones((2, 2, 1)))
    with pytest.raises(DataError):
        raster_io.resample_nearest(grid, 0, 2)


def test_stack_in_list_order():
    a = raster_io.RasterGrid(values=np.full((2, 2), 1.0), band_names=["a"])
    b = raster_io.RasterGrid(values=np.full((2, 2), 2.0), band_names=["b"])
    stacked = raster_io.stack_bands([a, b])

    assert stacked.values.shape == (2, 2, 2)
    assert stacked.values[0, 0].tolist() == [1.0, 2.0]
    assert stacked.band_names == ["a", "b"]


def test_stack_resamples_to_finest():
    coarse = raster_io.RasterGrid(values=np.array([[1.0, 2.0], [3.0, 4.0]]))
    fine = raster_io.RasterGrid(values=np.arange(16.0).reshape(4, 4))
    stacked = raster_io.stack_bands([coarse, fine])

    assert stacked.values.shape == (4, 4, 2)
    assert stacked.values[:2, :2, 0].tolist() == [[1, 1], [1, 1]]
    assert stacked.values[:, :, 1].tolist() == fine.values[:, :, 0].tolist()


def test_stack_propagates_nodata():
    values = np.array([[-9999.0, 2.0], [3.0, 4.0]])
    coarse = raster_io.RasterGrid(values=values, nodata_value=-9999.0)
    fine = raster_io.RasterGrid(values=np.ones((4, 4)))
    stacked = raster_io.stack_bands([coarse, fine])

    assert stacked.nodata_value == -9999.0
    assert not stacked.valid_mask[:2, :2].any()
    assert stacked.valid_mask[2:, :].all()
    assert (stacked.values[:2, :2, 1] == -9999.0).all()


def test_stack_empty_list():
    with pytest.raises(DataError):
        raster_io.stack_bands([])


def test_stack_incompatible_origins():
    a = raster_io.RasterGrid(values=np.ones((2, 2)), geotransform=(0, 0, 1, -1, 0, 0))
    b = raster_io.RasterGrid(values=np.ones((2, 2)), geotransform=(5, 0, 1, -1, 0, 0))
    with pytest.raises(DataError, match="origins"):
        raster_io.stack_bands([a, b])


def test_crop_full_extent(rng):
    grid = raster_io.RasterGrid(values=rng.uniform(size=(3, 4, 2)))
    assert raster_io.crop(grid, 0, 0, 3, 4) == grid


def test_crop_single_pixel(rng):
    grid = raster_io.RasterGrid(values=rng.uniform(size=(3, 4, 2)))
    cropped = raster_io.crop(grid, 0, 0, 1, 1)

    assert cropped.values.shape == (1, 1, 2)
    assert cropped.values[0, 0].tolist() == grid.values[0, 0].tolist()


def test_crop_shifts_origin():
    grid = raster_io.RasterGrid(
        values=np.ones((4, 4)), geotransform=(10.0, 20.0, 2.0, -3.0, 0.0, 0.0)
    )
    cropped = raster_io.crop(grid, 1, 2, 2, 2)

    assert cropped.geotransform == (14.0, 17.0, 2.0, -3.0, 0.0, 0.0)


def test_crop_out_of_bounds():
    grid = raster_io.RasterGrid(values=np.ones((3, 3)))
    with pytest.raises(DataError, match="out of bounds"):
        raster_io.crop(grid, 0, 1, 3, 3)


@pytest.mark.parametrize("rows, cols", [(7, 5), (2, 9), (1, 1)])
def test_resample_only_selects_source_values(rng, rows, cols):
    grid = raster_io.RasterGrid(values=rng.uniform(size=(4, 3, 2)))
    resampled = raster_io.resample_nearest(grid, rows, cols)

    assert resampled.values.shape == (rows, cols, 2)
    for band in range(2):
        assert set(resampled.values[:, :, band].ravel()) <= set(grid.values[:, :, band].ravel())


def test_nested_crop_composes(rng):
    grid = raster_io.RasterGrid(
        values=rng.uniform(size=(8, 9, 2)), geotransform=(5.0, 7.0, 1.0, -1.0, 0.0, 0.0)
    )
    twice = raster_io.crop(raster_io.crop(grid, 1, 2, 6, 6), 2, 1, 3, 4)

    assert twice == raster_io.crop(grid, 3, 3, 3, 4)


def test_stack_sentinel_skips_valid_values():
    a = raster_io.RasterGrid(values=np.array([[1.0, 0.0], [2.0, 3.0]]), nodata_value=0.0)
    b = raster_io.RasterGrid(values=np.array([[0.0, 5.0], [6.0, 7.0]]))
    stacked = raster_io.stack_bands([a, b])

    assert stacked.nodata_value == -9999.0
    assert stacked.valid_mask.tolist() == [[True, False], [True, True]]
    assert stacked.values[0, 0].tolist() == [1.0, 0.0]


def test_stack_sentinel_falls_back_to_nan(tmp_path):
    a = raster_io.RasterGrid(values=np.array([[1.0, -9999.0]]), nodata_value=-9999.0)
    b = raster_io.RasterGrid(values=np.array([[-9999.0, 2.0]]))
    stacked = raster_io.stack_bands([a, b])

    assert np.isnan(stacked.nodata_value)
    assert stacked.valid_mask.tolist() == [[True, False]]

    raster_io.write_raster(stacked, str(tmp_path / "stacked"))
    assert raster_io.read_raster(str(tmp_path / "stacked")) == stacked

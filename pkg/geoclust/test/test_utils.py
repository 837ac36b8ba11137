import json
from importlib import metadata

import numpy as np
import pytest

from .. import utils
from ..errors import (
    ConfigError,
    DataError,
    GeoclustError,
    NoElbowError,
    NumericError,
    StageError,
)


def test_derive_seed_is_stable():
    assert utils.derive_seed(0, "kmeans") == utils.derive_seed(0, "kmeans")
    assert 0 <= utils.derive_seed(0, "kmeans") < 2**64


def test_derive_seed_separates_stages_and_seeds():
    seeds = {utils.derive_seed(s, stage) for s in (0, 1) for stage in ("reduce", "kmeans")}
    assert len(seeds) == 4


def test_make_rng_reproducible():
    a = utils.make_rng(3).uniform(size=5)
    b = utils.make_rng(3).uniform(size=5)
    assert np.array_equal(a, b)


def test_worker_count_defaults_to_cpus(mocker, monkeypatch):
    monkeypatch.delenv("GEOCLUST_THREADS", raising=False)
    mocker.patch("os.cpu_count", return_value=6)
    assert utils.worker_count() == 6


@pytest.mark.parametrize(
    "value, expected",
    [("2", 2), ("64", 6), ("0", 1), ("many", 6), ("", 6)],
)
def test_worker_count_env_cap(mocker, monkeypatch, value, expected):
    monkeypatch.setenv("GEOCLUST_THREADS", value)
    mocker.patch("os.cpu_count", return_value=6)
    assert utils.worker_count() == expected


def test_worker_count_unknown_cpus(mocker, monkeypatch):
    monkeypatch.delenv("GEOCLUST_THREADS", raising=False)
    mocker.patch("os.cpu_count", return_value=None)
    assert utils.worker_count() == 1


def test_json_safe():
    document = {"a": float("inf"), "b": [np.float32(-np.inf), np.nan], "c": np.int64(3), "d": 0.5}
    assert utils.json_safe(document) == {"a": "inf", "b": ["-inf", "nan"], "c": 3, "d": 0.5}


def test_dump_json_is_strict(tmp_path):
    utils.dump_json({"z": 1, "a": float("nan")}, str(tmp_path / "doc.json"))
    text = (tmp_path / "doc.json").read_text()

    assert json.loads(text) == {"a": "nan", "z": 1}
    assert text.index('"a"') < text.index('"z"')
    assert utils.load_json(str(tmp_path / "doc.json"))["a"] == "nan"


def test_package_versions(mocker):
    def version(name):
        if name == "pillow":
            raise metadata.PackageNotFoundError(name)
        return "1.2.3"

    mocker.patch.object(utils.metadata, "version", side_effect=version)
    versions = utils.package_versions()

    assert set(versions) == set(utils.RECORDED_PACKAGES)
    assert versions["pillow"] is None
    assert versions["numpy"] == "1.2.3"


@pytest.mark.parametrize(
    "error, code",
    [
        (GeoclustError("x"), 1),
        (ConfigError("x"), 2),
        (DataError("x"), 3),
        (NumericError("x"), 4),
        (NoElbowError("x"), 4),
    ],
)
def test_exit_codes(error, code):
    assert error.exit_code == code


def test_stage_error_wraps():
    cause = DataError("missing file: a/header.json")
    error = StageError("ingest", cause)

    assert str(error) == "[ingest] missing file: a/header.json"
    assert error.exit_code == 3
    assert error.stage == "ingest"
    assert error.error is cause


def test_stage_error_foreign_cause():
    assert StageError("render", RuntimeError("boom")).exit_code == 1

import hashlib
import json
import math
import os
from importlib import metadata

import numpy as np

#: Packages whose versions are recorded in run manifests.
RECORDED_PACKAGES = ("geoclust", "numpy", "scipy", "scikit-learn", "pillow", "sqlalchemy")


def derive_seed(seed, stage):
    """
    Derive an independent 64-bit seed for a named stage from the top-level
    seed, e.g.::

        derive_seed(0, "kmeans") --> 0x... (stable across runs and platforms)
    """
    digest = hashlib.blake2b(
        "{}:{}".format(int(seed), stage).encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def worker_count():
    """Number of worker threads, capped by ``GEOCLUST_THREADS`` when set."""
    available = os.cpu_count() or 1
    value = os.environ.get("GEOCLUST_THREADS")
    if not value:
        return available
    try:
        requested = int(value)
    except ValueError:
        return available
    return max(1, min(requested, available))


def package_versions():
    versions = {}
    for name in RECORDED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def json_safe(value):
    """Replace non-finite floats (recursively) by the strings ``inf``, ``-inf``
    and ``nan`` so documents stay strict JSON."""
    if isinstance(value, dict):
        return {key: json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(item) for item in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, np.integer):
        return int(value)
    return value


def dump_json(document, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(json_safe(document), f, indent=2, sort_keys=True)
        f.write("\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)

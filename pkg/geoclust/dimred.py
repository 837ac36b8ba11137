"""
    geoclust.dimred
    ~~~~~

    The three interchangeable dimensionality reducers. Each turns a scaled
    :class:`~geoclust.preprocess.PixelMatrix` into a :class:`LatentMatrix` of
    width ``m <= n_bands`` for clustering:

    * ``pca`` -- principal components keeping a target share of the variance,
    * ``canonical_ae`` -- the hidden layer of one ``n -> m -> n`` autoencoder,
    * ``stacked_ae`` -- two autoencoders trained greedily, the second on the
      (rescaled) hidden activations of the first.
"""
import logging
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, NumericError
from .neuralnet import decode, encode, train_autoencoder
from .preprocess import fit_scaling
from .utils import derive_seed, dump_json, load_json

logger = logging.getLogger(__name__)

PRODUCERS = ("pca", "canonical_ae", "stacked_ae")

PCA_FILE = "pca.json"
COMPONENTS_FILE = "components.bin"

_COMPONENTS_DTYPE = np.dtype("<f8")


@dataclass(frozen=True, eq=False)
class PCAModel:
    means: np.ndarray
    #: ``m x n_bands``, orthonormal rows
    components: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def m(self):
        return self.components.shape[0]

    @property
    def n_bands(self):
        return self.components.shape[1]


@dataclass(frozen=True, eq=False)
class LatentMatrix:
    values: np.ndarray
    producer: str

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if self.producer not in PRODUCERS:
            raise DataError("unknown latent producer {!r}".format(self.producer))
        if not np.all(np.isfinite(values)):
            raise NumericError("latent features contain non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def n_pixels(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class CanonicalResult:
    latent: LatentMatrix
    network: object
    losses: list

    def __iter__(self):
        return iter((self.latent, self.network, self.losses))

    def reconstruct(self, values):
        return decode(self.network, encode(self.network, values))


@dataclass(frozen=True, eq=False)
class StackedResult:
    latent: LatentMatrix
    networks: tuple
    losses: tuple
    #: min-max parameters applied to stage-1 hidden activations
    inter_scaling: object
    #: the exact matrix stage 2 was trained on
    stage2_input: np.ndarray

    def __iter__(self):
        return iter((self.latent, self.networks, self.losses))

    def reconstruct(self, values):
        first, second = self.networks
        hidden = self.inter_scaling.apply(encode(first, values))
        hidden = self.inter_scaling.invert(decode(second, encode(second, hidden)))
        return decode(first, hidden)


def _values(matrix):
    return np.atleast_2d(np.asarray(getattr(matrix, "values", matrix), dtype=np.float64))


def pca_fit(matrix, variance_target=0.90):
    values = _values(matrix)
    n_pixels, n_bands = values.shape
    if n_pixels <= n_bands:
        raise DataError("PCA needs more pixels ({}) than bands ({})".format(n_pixels, n_bands))
    if not 0 < variance_target <= 1:
        raise DataError("variance_target must lie in (0, 1]")

    means = values.mean(axis=0)
    covariance = np.cov(values, rowvar=False, ddof=1).reshape(n_bands, n_bands)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]

    total = eigenvalues.sum()
    if not total > 0:
        raise NumericError("zero total variance")
    ratios = eigenvalues / total
    cumulative = np.cumsum(ratios)
    m = int(np.argmax(cumulative >= variance_target - 1e-12)) + 1
    if cumulative[-1] < variance_target - 1e-12:
        m = n_bands

    components = eigenvectors[:, :m].T.copy()
    # Fix the sign so the largest-magnitude entry of every row is positive.
    pivots = components[np.arange(m), np.argmax(np.abs(components), axis=1)]
    components *= np.where(pivots < 0, -1.0, 1.0)[:, np.newaxis]

    logger.info(
        "PCA keeps %d of %d components (%.4f of the variance)", m, n_bands, cumulative[m - 1]
    )
    return PCAModel(means=means, components=components, explained_variance_ratio=ratios[:m])


def pca_transform(model, matrix):
    values = _values(matrix)
    if values.shape[1] != model.n_bands:
        raise DataError(
            "dimension mismatch: {} bands, model expects {}".format(values.shape[1], model.n_bands)
        )
    return LatentMatrix(values=(values - model.means) @ model.components.T, producer="pca")


def pca_inverse_transform(model, latent):
    values = getattr(latent, "values", latent)
    return np.asarray(values, dtype=np.float64) @ model.components + model.means


def default_latent_dims(n_bands, m_pca):
    """Widths tied to the PCA width so the three reducers compare at equal m:
    canonical ``m``, stacked ``(ceil((n + m) / 2), m)``."""
    return m_pca, (int(math.ceil((n_bands + m_pca) / 2.0)), m_pca)


def canonical_reduce(matrix, latent_dim, config):
    values = _values(matrix)
    n_bands = values.shape[1]
    if not 1 <= latent_dim <= n_bands:
        raise DataError("latent_dim must lie in [1, {}]".format(n_bands))

    network, losses = train_autoencoder(values, [n_bands, latent_dim, n_bands], config)
    latent = LatentMatrix(values=encode(network, values), producer="canonical_ae")
    return CanonicalResult(latent=latent, network=network, losses=losses)


def stacked_reduce(matrix, dims, config):
    values = _values(matrix)
    n_bands = values.shape[1]
    h1, h2 = (int(d) for d in dims)
    if not n_bands >= h1 >= h2 >= 1:
        raise DataError(
            "stacked dims must satisfy n_bands >= h1 >= h2 >= 1, got ({}, {}) for {} bands".format(
                h1, h2, n_bands
            )
        )

    first, first_losses = train_autoencoder(values, [n_bands, h1, n_bands], config)
    hidden = encode(first, values)
    # relu activations are unbounded; the second stage reconstructs through a sigmoid.
    inter_scaling = fit_scaling(hidden)
    stage2_input = inter_scaling.apply(hidden)

    second_config = replace(config, seed=derive_seed(config.seed, "reduce.stage2"))
    second, second_losses = train_autoencoder(stage2_input, [h1, h2, h1], second_config)
    latent = LatentMatrix(values=encode(second, stage2_input), producer="stacked_ae")
    return StackedResult(
        latent=latent,
        networks=(first, second),
        losses=(first_losses, second_losses),
        inter_scaling=inter_scaling,
        stage2_input=stage2_input,
    )


def save_pca(model, path):
    try:
        os.makedirs(path, exist_ok=True)
        dump_json(
            {
                "m": model.m,
                "n_bands": model.n_bands,
                "means": model.means.tolist(),
                "explained_variance_ratio": model.explained_variance_ratio.tolist(),
            },
            os.path.join(path, PCA_FILE),
        )
        model.components.astype(_COMPONENTS_DTYPE).tofile(os.path.join(path, COMPONENTS_FILE))
    except OSError as e:
        raise DataError("unwritable path {}: {}".format(path, e))


def load_pca(path):
    try:
        document = load_json(os.path.join(path, PCA_FILE))
        components = np.fromfile(os.path.join(path, COMPONENTS_FILE), dtype=_COMPONENTS_DTYPE)
        m, n_bands = int(document["m"]), len(document["means"])
    except (OSError, KeyError, ValueError) as e:
        raise DataError("cannot load PCA model from {}: {}".format(path, e))
    if components.size != m * n_bands:
        raise DataError("payload size mismatch in {}".format(path))
    return PCAModel(
        means=np.asarray(document["means"], dtype=np.float64),
        components=components.reshape(m, n_bands),
        explained_variance_ratio=np.asarray(document["explained_variance_ratio"]),
    )

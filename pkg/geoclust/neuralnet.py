"""
    geoclust.neuralnet
    ~~~~~

    A small dense feed-forward network engine: forward pass, analytic
    backpropagation of the mean squared error, and Adam updates. It is just
    enough to train the single-hidden-layer autoencoders used for
    dimensionality reduction, in 64-bit arithmetic throughout.
"""
import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, NumericError
from .utils import make_rng

logger = logging.getLogger(__name__)

MODEL_FILE = "model.json"
WEIGHTS_FILE = "weights.bin"

_WEIGHTS_DTYPE = np.dtype("<f8")


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(x):
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    e = np.exp(x[~positive])
    out[~positive] = e / (1.0 + e)
    return out


def _identity(x):
    return x


#: activation name -> (function, derivative expressed through the activation output)
ACTIVATIONS = {
    "relu": (_relu, lambda a: (a > 0).astype(a.dtype)),
    "sigmoid": (_sigmoid, lambda a: a * (1.0 - a)),
    "identity": (_identity, lambda a: np.ones_like(a)),
}


@dataclass(frozen=True, eq=False)
class DenseLayer:
    #: ``out_dim x in_dim``
    weights: np.ndarray
    biases: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        weights = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        biases = np.asarray(self.biases, dtype=np.float64).reshape(-1)
        if biases.shape[0] != weights.shape[0]:
            raise DataError("bias length must equal the layer output width")
        if self.activation not in ACTIVATIONS:
            raise DataError("unknown activation {!r}".format(self.activation))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class DenseNetwork:
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DataError("a network needs at least one layer")
        for previous, layer in zip(layers, layers[1:]):
            if previous.out_dim != layer.in_dim:
                raise DataError(
                    "layer dims do not chain: {} -> {}".format(previous.out_dim, layer.in_dim)
                )
        object.__setattr__(self, "layers", layers)

    @property
    def layer_dims(self):
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def activations(self):
        return [layer.activation for layer in self.layers]

    def is_finite(self):
        return all(
            np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.biases))
            for layer in self.layers
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise DataError("epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise DataError("learning_rate must be positive")


@dataclass(frozen=True, eq=False)
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    #: first and second moments, one (weights, biases) pair per layer
    first_moment: tuple = field(default=())
    second_moment: tuple = field(default=())

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise DataError("Adam betas must lie in [0, 1)")
        if self.t < 0:
            raise DataError("Adam step counter must be >= 0")

    @classmethod
    def for_network(cls, net, **hyperparameters):
        zeros = tuple(
            (np.zeros_like(layer.weights), np.zeros_like(layer.biases)) for layer in net.layers
        )
        return cls(
            first_moment=zeros,
            second_moment=tuple((w.copy(), b.copy()) for w, b in zeros),
            **hyperparameters,
        )


def init_network(layer_dims, activations, rng):
    """Glorot-uniform weights, zero biases."""
    layers = []
    for in_dim, out_dim, activation in zip(layer_dims, layer_dims[1:], activations):
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        layers.append(
            DenseLayer(
                weights=rng.uniform(-limit, limit, size=(out_dim, in_dim)),
                biases=np.zeros(out_dim),
                activation=activation,
            )
        )
    return DenseNetwork(layers=tuple(layers))


def forward(net, batch):
    """Return ``[input, a_1, ..., a_L]``, the activations of every layer."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[1] != net.layers[0].in_dim:
        raise DataError(
            "dimension mismatch: batch width {} != input width {}".format(
                batch.shape[1], net.layers[0].in_dim
            )
        )
    activations = [batch]
    for layer in net.layers:
        fn, _ = ACTIVATIONS[layer.activation]
        activations.append(fn(activations[-1] @ layer.weights.T + layer.biases))
    return activations


def predict(net, batch):
    return forward(net, batch)[-1]


def mse_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DataError("shape mismatch: {} vs {}".format(pred.shape, target.shape))
    return float(np.mean((pred - target) ** 2))


def backward(net, activations, target):
    """Gradients of :func:`mse_loss` with respect to every weight and bias,
    as one ``(d_weights, d_biases)`` pair per layer."""
    if len(activations) != len(net.layers) + 1:
        raise DataError("activations do not belong to this network")
    for layer, a_in, a_out in zip(net.layers, activations, activations[1:]):
        if a_in.shape[1] != layer.in_dim or a_out.shape[1] != layer.out_dim:
            raise DataError("activations do not belong to this network")
    output = activations[-1]
    target = np.asarray(target, dtype=np.float64)
    if target.shape != output.shape:
        raise DataError("shape mismatch: {} vs {}".format(output.shape, target.shape))

    grads = [None] * len(net.layers)
    delta = 2.0 * (output - target) / output.size
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        _, derivative = ACTIVATIONS[layer.activation]
        delta = delta * derivative(activations[i + 1])
        grads[i] = (delta.T @ activations[i], delta.sum(axis=0))
        if i:
            delta = delta @ layer.weights
    return grads


def adam_step(net, grads, state):
    """One bias-corrected Adam update; returns the new network and state."""
    if len(grads) != len(net.layers):
        raise DataError("gradient list does not match the network")
    for (d_w, d_b), layer in zip(grads, net.layers):
        if d_w.shape != layer.weights.shape or d_b.shape != layer.biases.shape:
            raise DataError("gradient shapes do not match the network")
        if not (np.all(np.isfinite(d_w)) and np.all(np.isfinite(d_b))):
            raise NumericError("non-finite gradients")
    if not state.first_moment:
        state = replace(
            AdamState.for_network(
                net,
                learning_rate=state.learning_rate,
                beta1=state.beta1,
                beta2=state.beta2,
                epsilon=state.epsilon,
            ),
            t=state.t,
        )

    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**t
    correction2 = 1.0 - b2**t

    layers, first, second = [], [], []
    for layer, grad, m_prev, v_prev in zip(
        net.layers, grads, state.first_moment, state.second_moment
    ):
        params = (layer.weights, layer.biases)
        updated, m_new, v_new = [], [], []
        for p, g, m, v in zip(params, grad, m_prev, v_prev):
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            m_hat = m / correction1
            v_hat = v / correction2
            updated.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
            m_new.append(m)
            v_new.append(v)
        layers.append(replace(layer, weights=updated[0], biases=updated[1]))
        first.append(tuple(m_new))
        second.append(tuple(v_new))

    return (
        DenseNetwork(layers=tuple(layers)),
        replace(state, t=t, first_moment=tuple(first), second_moment=tuple(second)),
    )


def autoencoder_activations(layer_dims):
    """relu on hidden layers, sigmoid on the reconstruction."""
    return ["relu"] * (len(layer_dims) - 2) + ["sigmoid"]


def train_autoencoder(matrix, layer_dims, config, activations=None):
    """Train a reconstruction network on the rows of ``matrix`` (a
    :class:`~geoclust.preprocess.PixelMatrix` or a plain 2-D array) with
    mini-batch Adam. Returns the network and the mean loss of every epoch."""
    values = getattr(matrix, "values", matrix)
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    layer_dims = [int(d) for d in layer_dims]
    if values.shape[0] == 0:
        raise DataError("cannot train on an empty matrix")
    if len(layer_dims) < 2 or min(layer_dims) < 1:
        raise DataError("layer_dims needs at least two positive widths")
    if layer_dims[0] != values.shape[1] or layer_dims[-1] != values.shape[1]:
        raise DataError(
            "layer dims {} do not chain from and back to {} bands".format(
                layer_dims, values.shape[1]
            )
        )
    if values.min() < -1e-12 or values.max() > 1.0 + 1e-12:
        raise DataError("autoencoder inputs must be scaled to [0, 1]")
    if activations is None:
        activations = autoencoder_activations(layer_dims)

    rng = make_rng(config.seed)
    net = init_network(layer_dims, activations, rng)
    state = AdamState.for_network(net, learning_rate=config.learning_rate)

    n = values.shape[0]
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        # The last, partial batch is kept.
        for start in range(0, n, config.batch_size):
            batch = values[order[start : start + config.batch_size]]
            acts = forward(net, batch)
            total += mse_loss(acts[-1], batch) * batch.shape[0]
            net, state = adam_step(net, backward(net, acts, batch), state)
        loss = total / n
        if not np.isfinite(loss):
            raise NumericError("training diverged at epoch {}".format(epoch + 1))
        losses.append(loss)
        logger.debug("epoch %d/%d loss %.6g", epoch + 1, config.epochs, loss)

    logger.info("trained %s autoencoder, final loss %.6g", layer_dims, losses[-1])
    return net, losses


def encode(net, values, depth=1):
    """Activations after the first ``depth`` layers, i.e. the latent code."""
    return forward(DenseNetwork(layers=net.layers[:depth]), values)[-1]


def decode(net, latent, depth=1):
    return forward(DenseNetwork(layers=net.layers[depth:]), latent)[-1]


def save_network(net, path, config=None):
    document = {
        "layer_dims": net.layer_dims,
        "activations": net.activations,
    }
    if config is not None:
        document["seed"] = config.seed
        document["config"] = {
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "learning_rate": config.learning_rate,
            "seed": config.seed,
        }
    try:
        os.makedirs(path, exist_ok=True)
        with open(os.path.join(path, MODEL_FILE), "w", encoding="utf-8") as f:
            json.dump(document, f, indent=2, sort_keys=True)
            f.write("\n")
        # All weights first, then all biases, in layer order.
        payload = np.concatenate(
            [layer.weights.ravel() for layer in net.layers]
            + [layer.biases.ravel() for layer in net.layers]
        )
        payload.astype(_WEIGHTS_DTYPE).tofile(os.path.join(path, WEIGHTS_FILE))
    except OSError as e:
        raise DataError("unwritable path {}: {}".format(path, e))


def load_network(path):
    try:
        with open(os.path.join(path, MODEL_FILE), "r", encoding="utf-8") as f:
            document = json.load(f)
        layer_dims = [int(d) for d in document["layer_dims"]]
        activations = list(document["activations"])
        payload = np.fromfile(os.path.join(path, WEIGHTS_FILE), dtype=_WEIGHTS_DTYPE)
    except (OSError, KeyError, ValueError) as e:
        raise DataError("cannot load network from {}: {}".format(path, e))

    shapes = list(zip(layer_dims[1:], layer_dims))
    n_weights = sum(o * i for o, i in shapes)
    if payload.size != n_weights + sum(layer_dims[1:]):
        raise DataError("payload size mismatch in {}".format(path))

    layers, w_offset, b_offset = [], 0, n_weights
    for (out_dim, in_dim), activation in zip(shapes, activations):
        weights = payload[w_offset : w_offset + out_dim * in_dim].reshape(out_dim, in_dim)
        biases = payload[b_offset : b_offset + out_dim]
        w_offset += out_dim * in_dim
        b_offset += out_dim
        layers.append(DenseLayer(weights=weights, biases=biases, activation=activation))
    return DenseNetwork(layers=tuple(layers))

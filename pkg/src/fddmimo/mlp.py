"""Minimal fully connected network trained with plain SGD.

The network maps stacked real/imaginary covariance features to a softmax
density over the angular grid: ReLU on every layer except the last, L1
loss against the reference density. Everything is numpy, gradients are
hand-derived and checked against finite differences in the test suite.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDatasetError, NonFiniteLossError, ShapeMismatchError

_CKPT_MAGIC = b"MLP1"
_CKPT_VERSION = 1

__all__ = [
    "MlpSpec",
    "MlpParams",
    "TrainConfig",
    "init_params",
    "forward",
    "loss_l1",
    "backward",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class MlpSpec:
    """Layer plan: input width plus the output width of each weight layer."""

    input_width: int
    layer_widths: tuple

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if self.input_width < 1 or len(self.layer_widths) < 1:
            raise ValueError("need a positive input width and at least one layer")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError("layer widths must be positive")

    @classmethod
    def for_dimensions(cls, num_antennas, grid_size):
        """Default architecture for an M-antenna, G-point grid problem.

        Five layers of widths (2M, 4M, 8M, 16M, G) on a 2M-dimensional
        input; the first hidden layer matches the input width.
        """
        m = int(num_antennas)
        return cls(2 * m, (2 * m, 4 * m, 8 * m, 16 * m, int(grid_size)))

    @property
    def num_layers(self):
        return len(self.layer_widths)

    @property
    def output_width(self):
        return self.layer_widths[-1]


@dataclass
class MlpParams:
    """Per-layer weight matrices (fan_in, fan_out) and bias vectors."""

    weights: list
    biases: list

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError("train_fraction must be in (0, 1]")


def init_params(spec, rng_seed):
    """Glorot-uniform weights, W_l ~ U(-a, a) with a = sqrt(6/(fan_in+fan_out)).

    Biases start at zero.
    """
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    fan_in = spec.input_width
    for fan_out in spec.layer_widths:
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
        fan_in = fan_out
    return MlpParams(weights, biases)


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cached(params, x):
    """Forward pass keeping pre-activations and activations for backprop."""
    acts = [x]
    pres = []
    h = x
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pres.append(z)
        # ReLU everywhere except the softmax output layer; subgradient at 0 is 0.
        h = _softmax(z) if l == last else np.maximum(z, 0.0)
        acts.append(h)
    return pres, acts


def forward(params, x):
    """Network output for a single feature vector or a batch.

    Parameters
    ----------
    params : MlpParams
    x : ndarray, shape (input_width,) or (batch, input_width)

    Returns
    -------
    ndarray
        Softmax output, same leading shape as the input; rows sum to 1.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.weights[0].shape[0]:
        raise ShapeMismatchError(
            f"input width {x.shape[-1]} != expected {params.weights[0].shape[0]}"
        )
    _, acts = _forward_cached(params, np.atleast_2d(x))
    out = acts[-1]
    return out[0] if x.ndim == 1 else out


def loss_l1(prediction, target):
    """L1 loss sum_j |prediction_j - target_j|, averaged over a batch."""
    p = np.atleast_2d(np.asarray(prediction, dtype=float))
    t = np.atleast_2d(np.asarray(target, dtype=float))
    if p.shape != t.shape:
        raise ShapeMismatchError(f"prediction {p.shape} vs target {t.shape}")
    return float(np.abs(p - t).sum(axis=1).mean())


def backward(params, x, target):
    """Gradient of the (batch mean) L1 loss with respect to all parameters.

    The sign subgradient at |0| and the ReLU subgradient at 0 are both
    taken as 0.

    Returns
    -------
    MlpParams
        Same container shape as ``params``, holding gradients.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.atleast_2d(np.asarray(target, dtype=float))
    pres, acts = _forward_cached(params, x)
    y = acts[-1]
    if y.shape != t.shape:
        raise ShapeMismatchError(f"output {y.shape} vs target {t.shape}")
    batch = x.shape[0]

    s = np.sign(y - t)
    # softmax Jacobian applied to s: y * (s - <s, y>)
    delta = y * (s - (s * y).sum(axis=1, keepdims=True))
    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    for l in range(len(params.weights) - 1, -1, -1):
        grad_w[l] = acts[l].T @ delta / batch
        grad_b[l] = delta.mean(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l].T) * (pres[l - 1] > 0.0)
    return MlpParams(grad_w, grad_b)


def _as_arrays(dataset):
    if isinstance(dataset, tuple) and len(dataset) == 2:
        x, y = dataset
    else:
        pairs = list(dataset)
        if not pairs:
            raise EmptyDatasetError("dataset has no samples")
        x = np.stack([np.asarray(p[0], dtype=float) for p in pairs])
        y = np.stack([np.asarray(p[1], dtype=float) for p in pairs])
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeMismatchError("dataset arrays must be (S, in) and (S, out)")
    if x.shape[0] == 0:
        raise EmptyDatasetError("dataset has no samples")
    return x, y


def _mean_loss(params, x, y, batch=4096):
    total = 0.0
    for i in range(0, x.shape[0], batch):
        xb = x[i : i + batch]
        total += loss_l1(forward(params, xb), y[i : i + batch]) * xb.shape[0]
    return total / x.shape[0]


def train(spec, dataset, config, init=None, start_epoch=0):
    """Plain minibatch SGD on the L1 loss.

    The dataset is shuffled once (seed-derived) and split train/validation
    by ``config.train_fraction``; each epoch reshuffles the training slice
    with a generator keyed on (seed, epoch index), so resuming from a
    checkpoint at ``start_epoch`` continues the exact same trajectory.

    Parameters
    ----------
    spec : MlpSpec
    dataset : (X, Y) arrays or iterable of (features, label) pairs
    config : TrainConfig
    init : MlpParams, optional
        Starting point; freshly initialized from ``config.seed`` if absent.
    start_epoch : int
        First epoch index, nonzero when resuming.

    Returns
    -------
    params : MlpParams
    trace : list of (epoch, train_loss, val_loss)
        One row per completed epoch; ``val_loss`` is NaN when the split
        leaves no validation samples.
    """
    x, y = _as_arrays(dataset)
    if x.shape[1] != spec.input_width or y.shape[1] != spec.output_width:
        raise ShapeMismatchError("dataset dimensions do not match the network spec")

    params = init.copy() if init is not None else init_params(spec, config.seed)

    n = x.shape[0]
    order = np.random.default_rng([config.seed, 0]).permutation(n)
    n_train = max(1, int(round(config.train_fraction * n)))
    train_idx, val_idx = order[:n_train], order[n_train:]
    xt, yt = x[train_idx], y[train_idx]
    xv, yv = x[val_idx], y[val_idx]

    trace = []
    for epoch in range(start_epoch, start_epoch + config.epochs):
        perm = np.random.default_rng([config.seed, 1, epoch]).permutation(n_train)
        for i in range(0, n_train, config.batch_size):
            sel = perm[i : i + config.batch_size]
            grads = backward(params, xt[sel], yt[sel])
            for w, b, gw, gb in zip(params.weights, params.biases, grads.weights, grads.biases):
                w -= config.learning_rate * gw
                b -= config.learning_rate * gb
        train_loss = _mean_loss(params, xt, yt)
        val_loss = _mean_loss(params, xv, yv) if xv.shape[0] else float("nan")
        if not np.isfinite(train_loss):
            raise NonFiniteLossError(f"training loss became {train_loss} at epoch {epoch}")
        trace.append((epoch, train_loss, val_loss))
    return params, trace


def save_checkpoint(path, spec, params, trained_epochs=0):
    """Binary checkpoint: magic, version, widths, then float64 W/b payloads."""
    header = np.array(
        [spec.num_layers, spec.input_width, *spec.layer_widths, int(trained_epochs)],
        dtype="<i8",
    )
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(bytes([_CKPT_VERSION]))
        fh.write(header.tobytes())
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.asarray(b, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Inverse of save_checkpoint, returns (spec, params, trained_epochs)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _CKPT_MAGIC:
        raise ValueError(f"bad checkpoint magic {raw[:4]!r}")
    if raw[4] != _CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {raw[4]}")
    n_layers = int(np.frombuffer(raw, dtype="<i8", count=1, offset=5)[0])
    head = np.frombuffer(raw, dtype="<i8", count=n_layers + 3, offset=5)
    input_width = int(head[1])
    widths = tuple(int(v) for v in head[2 : 2 + n_layers])
    trained_epochs = int(head[-1])
    spec = MlpSpec(input_width, widths)

    offset = 5 + head.size * 8
    weights, biases = [], []
    fan_in = input_width
    for fan_out in widths:
        w = np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += fan_in * fan_out * 8
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset)
        offset += fan_out * 8
        weights.append(w.reshape(fan_in, fan_out).copy())
        biases.append(b.copy())
        fan_in = fan_out
    return spec, MlpParams(weights, biases), trained_epochs

"""Feed-forward network with softmax output over tied states.

Hidden layers use ReLU (tanh optional); training is plain minibatch SGD
on cross-entropy with a dev-driven learning-rate decay.  Parameters are
float32; all forward/backward arithmetic accumulates in float64 so that
loss comparisons and gradients are reproducible and finite-difference
checks are sharp.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from . import config as cfgmod
from .errors import ConfigError, FormatError, MissingArtifactError, NumericError

NET_MAGIC = b"DTEN"
NET_VERSION = 1

_ACTIVATIONS = ("relu", "tanh")


@dataclass
class NetSpec:
    input_dim: int
    hidden: list
    classes: int
    activation: str = "relu"
    seed: int = 0

    def validate(self):
        if self.input_dim < 1 or self.classes < 1:
            raise ConfigError("input_dim and classes must be >= 1")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("need at least one hidden layer, all sizes >= 1")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    def layer_dims(self):
        """[(in, out)] for every layer including the output layer."""
        sizes = [self.input_dim] + list(self.hidden) + [self.classes]
        return list(zip(sizes[:-1], sizes[1:]))


@dataclass
class NetParams:
    spec: NetSpec
    weights: list  # per layer, (out, in) float32
    biases: list   # per layer, (out,) float32

    def copy(self):
        return NetParams(
            spec=self.spec,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass
class ForwardTrace:
    pre_activations: list   # per layer, batch x out, float64
    activations: list       # hidden activations only
    posteriors: np.ndarray  # batch x classes, rows sum to 1

    @property
    def last_hidden(self):
        return self.activations[-1]

    @property
    def last_hidden_sparsity(self):
        """Fraction of exact zeros in the last hidden activation."""
        z = self.last_hidden
        return float(np.count_nonzero(z == 0.0)) / z.size


@dataclass
class TrainSchedule:
    learning_rate: float = 0.01
    decay: float = 0.5
    patience: int = 1
    max_epochs: int = 20
    batch_size: int = 256
    shuffle_seed: int = 0
    min_lr: float = 1e-6

    def validate(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if not 0.0 < self.decay < 1.0:
            raise ConfigError("decay must lie in (0, 1)")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 0:
            raise ConfigError("bad schedule: batch >= 1, patience >= 1, epochs >= 0")

    @classmethod
    def from_config(cls, values: dict) -> "TrainSchedule":
        sched = cls(
            learning_rate=cfgmod.get_float(values, "lr", cls.learning_rate),
            decay=cfgmod.get_float(values, "decay", cls.decay),
            patience=cfgmod.get_int(values, "patience", cls.patience),
            max_epochs=cfgmod.get_int(values, "epochs", cls.max_epochs),
            batch_size=cfgmod.get_int(values, "batch", cls.batch_size),
            shuffle_seed=cfgmod.get_int(values, "shuffle_seed", cls.shuffle_seed),
        )
        sched.validate()
        return sched


def init(spec: NetSpec) -> NetParams:
    """Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero biases."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    weights = []
    biases = []
    for fan_in, fan_out in spec.layer_dims():
        a = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_out, fan_in)).astype(np.float32))
        biases.append(np.zeros(fan_out, dtype=np.float32))
    return NetParams(spec=spec, weights=weights, biases=biases)


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(z, kind):
    if kind == "relu":
        # subgradient at 0 is 0
        return (z > 0.0).astype(np.float64)
    t = np.tanh(z)
    return 1.0 - t * t


def forward(params: NetParams, batch) -> ForwardTrace:
    X = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if X.shape[1] != params.spec.input_dim:
        raise ConfigError(
            f"batch dim {X.shape[1]} != network input dim {params.spec.input_dim}"
        )
    if not np.all(np.isfinite(X)):
        raise NumericError("non-finite network input")
    kind = params.spec.activation
    pre = []
    acts = []
    h = X
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = h @ w.T.astype(np.float64) + b.astype(np.float64)
        pre.append(z)
        h = _activate(z, kind)
        acts.append(h)
    logits = h @ params.weights[-1].T.astype(np.float64) + params.biases[-1].astype(np.float64)
    pre.append(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    post = expd / expd.sum(axis=1, keepdims=True)
    return ForwardTrace(pre_activations=pre, activations=acts, posteriors=post)


def posteriors(params: NetParams, batch) -> np.ndarray:
    return forward(params, batch).posteriors


def last_hidden(params: NetParams, batch) -> np.ndarray:
    return forward(params, batch).last_hidden


def loss_and_grad(params: NetParams, batch, labels):
    """Mean cross-entropy and its gradient in NetParams shape (float64)."""
    X = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64)
    S = params.spec.classes
    if np.any(y < 0) or np.any(y >= S):
        raise ConfigError(f"label out of range [0, {S})")
    trace = forward(params, X)
    B = X.shape[0]
    picked = trace.posteriors[np.arange(B), y]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))

    kind = params.spec.activation
    delta = trace.posteriors.copy()
    delta[np.arange(B), y] -= 1.0
    delta /= B
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    for i in range(len(params.weights) - 1, -1, -1):
        below = trace.activations[i - 1] if i > 0 else X
        grads_w[i] = delta.T @ below
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].astype(np.float64)) \
                * _activate_grad(trace.pre_activations[i - 1], kind)
    return loss, (grads_w, grads_b)


def mean_cross_entropy(params: NetParams, X, y, batch_size=1024) -> float:
    """Dataset cross-entropy, batched; float64 accumulation."""
    y = np.asarray(y, dtype=np.int64)
    total = 0.0
    for start in range(0, X.shape[0], batch_size):
        xb = X[start:start + batch_size]
        yb = y[start:start + batch_size]
        post = forward(params, xb).posteriors
        picked = post[np.arange(xb.shape[0]), yb]
        total += float(-np.sum(np.log(np.maximum(picked, 1e-300))))
    return total / X.shape[0]


def accuracy(params: NetParams, X, y, batch_size=1024) -> float:
    y = np.asarray(y, dtype=np.int64)
    hits = 0
    for start in range(0, X.shape[0], batch_size):
        post = forward(params, X[start:start + batch_size]).posteriors
        hits += int(np.sum(post.argmax(axis=1) == y[start:start + batch_size]))
    return hits / X.shape[0]


def train(spec: NetSpec, schedule: TrainSchedule, train_set, dev_set, log_file=None):
    """Minibatch SGD with dev-driven learning-rate halving.

    `train_set`/`dev_set` are (X, labels) pairs.  After each epoch the
    dev cross-entropy is evaluated; `patience` evals without improvement
    halve the rate (by `decay`); training stops at `max_epochs` or when
    the rate falls below 1e-6.  Returns (best-dev params, history) where
    history rows are dicts with epoch, train_ce, dev_ce, lr, sparsity.
    Fully deterministic for fixed seeds.
    """
    spec.validate()
    schedule.validate()
    X_train, y_train = train_set
    X_dev, y_dev = dev_set
    if X_train.shape[0] == 0 or X_dev.shape[0] == 0:
        raise ConfigError("train and dev sets must be non-empty")
    if X_train.shape[1] != spec.input_dim or X_dev.shape[1] != spec.input_dim:
        raise ConfigError("train/dev dimensionality disagrees with the network spec")
    y_train = np.asarray(y_train, dtype=np.int64)
    y_dev = np.asarray(y_dev, dtype=np.int64)

    params = init(spec)
    best = params.copy()
    best_dev = math.inf
    rng = np.random.default_rng(schedule.shuffle_seed)
    lr = schedule.learning_rate
    stale = 0
    history = []

    for epoch in range(1, schedule.max_epochs + 1):
        if lr < schedule.min_lr:
            break
        order = rng.permutation(X_train.shape[0])
        ce_sum = 0.0
        zero_frac = 0.0
        n_batches = 0
        for start in range(0, order.size, schedule.batch_size):
            sel = order[start:start + schedule.batch_size]
            loss, (gw, gb) = loss_and_grad(params, X_train[sel], y_train[sel])
            if not math.isfinite(loss):
                raise NumericError(f"training diverged at epoch {epoch}: loss {loss}")
            ce_sum += loss * sel.size
            n_batches += 1
            for i in range(len(params.weights)):
                params.weights[i] = (
                    params.weights[i].astype(np.float64) - lr * gw[i]
                ).astype(np.float32)
                params.biases[i] = (
                    params.biases[i].astype(np.float64) - lr * gb[i]
                ).astype(np.float32)
        train_ce = ce_sum / order.size
        dev_ce = mean_cross_entropy(params, X_dev, y_dev)
        if not math.isfinite(dev_ce):
            raise NumericError(f"training diverged at epoch {epoch}: dev loss {dev_ce}")
        trace = forward(params, X_dev[: min(1024, X_dev.shape[0])])
        sparsity = trace.last_hidden_sparsity
        history.append({
            "epoch": epoch, "train_ce": train_ce, "dev_ce": dev_ce,
            "lr": lr, "sparsity": sparsity,
        })
        if log_file is not None:
            log_file.write(f"epoch {epoch} train_ce {train_ce:.6f} "
                           f"dev_ce {dev_ce:.6f} lr {lr:.6g}\n")
        if dev_ce < best_dev:
            best_dev = dev_ce
            best = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= schedule.patience:
                lr *= schedule.decay
                stale = 0
    return best, history


def save_net(params: NetParams, path) -> None:
    spec = params.spec
    with open(path, "wb") as f:
        binio.write_header(f, NET_MAGIC, NET_VERSION)
        binio.write_u32(f, spec.input_dim)
        binio.write_u32(f, len(spec.hidden))
        for h in spec.hidden:
            binio.write_u32(f, h)
        binio.write_u32(f, spec.classes)
        binio.write_str(f, spec.activation)
        binio.write_u64(f, spec.seed)
        for w, b in zip(params.weights, params.biases):
            binio.write_array(f, w, "<f4")
            binio.write_array(f, b, "<f4")


def load_net(path) -> NetParams:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"network file not found: {path}")
    with open(path, "rb") as f:
        binio.read_header(f, NET_MAGIC, NET_VERSION)
        input_dim = binio.read_u32(f)
        n_hidden = binio.read_u32(f)
        hidden = [binio.read_u32(f) for _ in range(n_hidden)]
        classes = binio.read_u32(f)
        activation = binio.read_str(f)
        seed = binio.read_u64(f)
        spec = NetSpec(input_dim=input_dim, hidden=hidden, classes=classes,
                       activation=activation, seed=seed)
        spec.validate()
        weights = []
        biases = []
        for fan_in, fan_out in spec.layer_dims():
            weights.append(binio.read_array(f, (fan_out, fan_in), "<f4"))
            biases.append(binio.read_array(f, (fan_out,), "<f4"))
    return NetParams(spec=spec, weights=weights, biases=biases)

"""Classifier interface and a small numpy MLP with exact input gradients.

The detectors only need ``predict_proba``; attacks also need input gradients,
which :class:`MlpModel` provides by manual backpropagation.
"""

import logging
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ._binio import FormatError, f64, read_file, u32

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"PMLP"
ACTIVATIONS = {"identity": 0, "relu": 1}
_TAG_TO_ACT = {v: k for k, v in ACTIVATIONS.items()}


class Classifier(Protocol):
    """Anything that maps a batch of images (n, M) to belief vectors (n, K)."""

    def predict_proba(self, X: np.ndarray) -> np.ndarray: ...


@dataclass
class Layer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"layer shapes W{self.W.shape} b{self.b.shape} do not chain")


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class MlpModel:
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.W.shape[0] != nxt.W.shape[1]:
                raise ValueError(
                    f"layer dimension chain broken: {prev.W.shape} -> {nxt.W.shape}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def n_classes(self) -> int:
        return self.layers[-1].W.shape[0]

    def _forward_cache(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.input_dim:
            raise ValueError(f"input has length {X.shape[-1]}, model expects {self.input_dim}")
        acts = [X]
        pre = []
        h = X
        for layer in self.layers:
            z = h @ layer.W.T + layer.b
            pre.append(z)
            h = np.maximum(z, 0.0) if layer.activation == "relu" else z
            acts.append(h)
        if not np.all(np.isfinite(h)):
            raise FloatingPointError("non-finite activations; model parameters are corrupted")
        return acts, pre

    def logits(self, X) -> np.ndarray:
        return self._forward_cache(X)[0][-1]

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.logits(X))

    def backprop_input(self, X, dlogits) -> np.ndarray:
        """Vector-Jacobian product: d(sum dlogits * logits)/dX."""
        acts, pre = self._forward_cache(X)
        g = np.asarray(dlogits, dtype=np.float64)
        for layer, z in zip(reversed(self.layers), reversed(pre)):
            if layer.activation == "relu":
                g = g * (z > 0)
            g = g @ layer.W
        return g

    def copy(self) -> "MlpModel":
        return MlpModel([Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])


def forward(model: Classifier, x) -> np.ndarray:
    """Belief vector for a single image (or a batch of rows)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return model.predict_proba(x[None, :])[0]
    return model.predict_proba(x)


def predict(model: Classifier, x):
    """Arg-max category; ``np.argmax`` already breaks ties toward the lowest index."""
    return np.argmax(forward(model, x), axis=-1)


def loss_gradient(model: MlpModel, x, label) -> np.ndarray:
    """Gradient of the cross-entropy loss w.r.t. the input pixels.

    ``x`` may be one image with an int label or a batch with a label array.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    K = model.n_classes
    if np.any(labels < 0) or np.any(labels >= K):
        raise ValueError(f"label out of range for K={K}")
    p = softmax(model.logits(X))
    p[np.arange(len(X)), labels] -= 1.0
    g = model.backprop_input(X, p)
    return g[0] if single else g


def cross_entropy(model: MlpModel, x, label) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    X = x[None, :] if x.ndim == 1 else x
    z = model.logits(X)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    out = -logp[np.arange(len(X)), labels]
    return out[0] if x.ndim == 1 else out


def accuracy(model: Classifier, X, y) -> float:
    return float(np.mean(predict(model, X) == np.asarray(y)))


@dataclass
class TrainConfig:
    hidden: int = 64
    epochs: int = 30
    learning_rate: float = 1e-2
    batch_size: int = 64
    weight_decay: float = 1e-4
    seed: int = 0


def init_mlp(input_dim: int, hidden: int, n_classes: int, rng: np.random.Generator) -> MlpModel:
    W1 = rng.standard_normal((hidden, input_dim)) * np.sqrt(2.0 / input_dim)
    W2 = rng.standard_normal((n_classes, hidden)) * np.sqrt(1.0 / hidden)
    return MlpModel([
        Layer(W1, np.zeros(hidden), "relu"),
        Layer(W2, np.zeros(n_classes), "identity"),
    ])


def train_mlp(X, y, cfg: TrainConfig = TrainConfig(), n_classes: int | None = None) -> MlpModel:
    """Mini-batch Adam on cross-entropy. Deterministic in (data order, cfg)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("training set is empty or not a 2-D array")
    if len(y) != len(X):
        raise ValueError(f"{len(X)} images but {len(y)} labels")
    K = int(n_classes if n_classes is not None else y.max() + 1)
    rng = np.random.default_rng(cfg.seed)
    model = init_mlp(X.shape[1], cfg.hidden, K, rng)

    params = [p for l in model.layers for p in (l.W, l.b)]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    n = len(X)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            grads, loss = _param_grads(model, X[idx], y[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(f"training diverged at epoch {epoch} (loss={loss})")
            total += loss * len(idx)
            step += 1
            for i, (p, g) in enumerate(zip(params, grads)):
                if p.ndim == 2:
                    g = g + cfg.weight_decay * p
                m[i] = b1 * m[i] + (1 - b1) * g
                v[i] = b2 * v[i] + (1 - b2) * g * g
                mhat = m[i] / (1 - b1**step)
                vhat = v[i] / (1 - b2**step)
                p -= cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
        if not all(np.all(np.isfinite(p)) for p in params):
            raise FloatingPointError(f"training diverged at epoch {epoch}: non-finite parameters")
        logger.debug("epoch %d loss %.4f", epoch, total / n)
    if cfg.epochs > 0:
        logger.info("train_mlp: final training accuracy %.4f", accuracy(model, X, y))
    return model


def _param_grads(model: MlpModel, X, y):
    acts, pre = model._forward_cache(X)
    p = softmax(acts[-1])
    n = len(X)
    loss = -np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-300)))
    g = p
    g[np.arange(n), y] -= 1.0
    g /= n
    grads = []
    for li in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[li]
        if layer.activation == "relu":
            g = g * (pre[li] > 0)
        grads.append(g.sum(axis=0))
        grads.append(g.T @ acts[li])
        g = g @ layer.W
    grads.reverse()  # -> [W0, b0, W1, b1, ...]
    return grads, loss


def save_model(model: MlpModel, path):
    parts = [MODEL_MAGIC, u32(len(model.layers))]
    for layer in model.layers:
        rows, cols = layer.W.shape
        parts += [u32(rows), u32(cols), bytes([ACTIVATIONS[layer.activation]]),
                  f64(layer.W), f64(layer.b)]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_model(path) -> MlpModel:
    r = read_file(path, "model file")
    r.magic(MODEL_MAGIC)
    n_layers = r.u32()
    if n_layers == 0:
        raise FormatError("model file: zero layers")
    layers = []
    for i in range(n_layers):
        rows, cols = r.u32(), r.u32()
        tag = r.u8()
        if tag not in _TAG_TO_ACT:
            raise FormatError(f"model file: layer {i} has unknown activation tag {tag}")
        W = r.f64(rows * cols).reshape(rows, cols)
        b = r.f64(rows)
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise FormatError(f"model file: layer {i} has non-finite parameters")
        layers.append(Layer(W, b, _TAG_TO_ACT[tag]))
    r.finish()
    try:
        return MlpModel(layers)
    except ValueError as exc:
        raise FormatError(f"model file: {exc}") from None

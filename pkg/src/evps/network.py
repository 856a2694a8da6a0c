"""Per-pixel multilayer perceptron from polarity vectors to unit normals.

Plain numpy throughout: affine layers with tanh hidden activations,
inverted dropout during training, an L2-normalized 3-vector head with a
z-positivity flip, cosine loss, manual backpropagation, and Adam. All
randomness flows through seeded generators so training is bit-exact
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import EventStream, NormalMap
from .representation import PixelDataset, polarity_matrix

PAPER_WIDTHS = (96, 4096, 4096, 2048, 2048, 2048, 3)
SMALL_WIDTHS = (96, 256, 128, 3)

NORM_EPSILON = 1e-12


class NonFiniteActivation(ArithmeticError):
    """Raised when a forward pass produces a non-finite value."""


class NonFiniteGradient(ArithmeticError):
    """Raised when backpropagation produces a non-finite gradient."""


@dataclass(frozen=True)
class MlpConfig:
    """Layer widths (input first, 3 last), dropout rate, init seed."""

    widths: tuple[int, ...] = PAPER_WIDTHS
    dropout: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(w < 1 for w in self.widths):
            raise ValueError("layer widths must be positive")
        if self.widths[-1] != 3:
            raise ValueError("output layer must have width 3")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def input_width(self):
        return self.widths[0]


def small_config(input_width: int = 96, dropout: float = 0.2, seed: int = 0) -> MlpConfig:
    return MlpConfig((input_width,) + SMALL_WIDTHS[1:], dropout, seed)


def paper_config(input_width: int = 96, dropout: float = 0.2, seed: int = 0) -> MlpConfig:
    return MlpConfig((input_width,) + PAPER_WIDTHS[1:], dropout, seed)


@dataclass
class Model:
    """Weight matrices (in, out) and bias vectors, all 64-bit floats."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: MlpConfig

    def __post_init__(self):
        expected = list(zip(self.config.widths[:-1], self.config.widths[1:]))
        shapes = [w.shape for w in self.weights]
        if shapes != expected or [b.shape for b in self.biases] != [(o,) for _, o in expected]:
            raise ValueError("parameter shapes inconsistent with config widths")

    @property
    def n_parameters(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Model":
        return Model([w.copy() for w in self.weights],
                     [b.copy() for b in self.biases], self.config)


def init_model(config: MlpConfig) -> Model:
    """Fan-in-scaled symmetric uniform weights, zero biases."""
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(config.widths[:-1], config.widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Model(weights, biases, config)


def _as_rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _forward_cached(model, x, train, rng):
    """Shared forward pass; caches what backward needs.

    Returns (raw head y, unit yhat, flip signs, per-layer feeds, tanh
    outputs, dropout masks). feeds[i] is what layer i consumed (post
    dropout); tanh outputs are cached pre-dropout for the derivative.
    """
    rate = model.config.dropout if train else 0.0
    feeds = [x]
    acts, masks = [], []
    z = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        pre = z @ w + b
        if not np.all(np.isfinite(pre)):
            raise NonFiniteActivation("hidden pre-activation overflowed")
        act = np.tanh(pre)
        acts.append(act)
        if rate > 0.0:
            keep = (_as_rng(rng).random(act.shape) >= rate) / (1.0 - rate)
            masks.append(keep)
            z = act * keep
        else:
            masks.append(None)
            z = act
        feeds.append(z)
    y = z @ model.weights[-1] + model.biases[-1]
    if not np.all(np.isfinite(y)):
        raise NonFiniteActivation("output layer produced non-finite values")
    norm = np.maximum(np.linalg.norm(y, axis=-1, keepdims=True), NORM_EPSILON)
    yhat = y / norm
    sign = np.where(yhat[..., 2:3] < 0.0, -1.0, 1.0)
    return y, norm, yhat, sign, feeds, acts, masks


def forward(model: Model, inputs, train: bool = False, rng=None) -> np.ndarray:
    """Map polarity vector(s) to unit normal(s) with nz >= 0.

    Accepts one (M,) vector or an (n, M) batch. Training mode applies
    inverted dropout and needs rng (a Generator or seed); inference
    applies none.
    """
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.config.input_width:
        raise ValueError(
            f"input width {x.shape[1]} != model input {model.config.input_width}")
    if train and model.config.dropout > 0.0:
        if rng is None:
            raise ValueError("training-mode forward with dropout needs rng")
        rng = _as_rng(rng)
    _, _, yhat, sign, _, _, _ = _forward_cached(model, x, train, rng)
    out = sign * yhat
    return out[0] if single else out


def cosine_loss(pred, gt):
    """1 - pred . gt; scalar for vectors, per-row array for batches."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    dot = np.sum(pred * gt, axis=-1)
    loss = 1.0 - dot
    return float(loss) if loss.ndim == 0 else loss


def backward(model: Model, inputs, gts, rng=None):
    """Exact mean-cosine-loss gradients for one batch.

    Runs the paired forward pass internally so the same dropout masks
    serve both directions; the z-flip is a per-sample sign constant.
    Returns (weight grads, bias grads, mean loss).
    """
    x = np.asarray(inputs, dtype=np.float64)
    g = np.asarray(gts, dtype=np.float64)
    if x.ndim == 1:
        x, g = x[None, :], g[None, :]
    if len(x) == 0:
        raise ValueError("batch must be non-empty")
    train = model.config.dropout > 0.0
    if train:
        if rng is None:
            raise ValueError("backward with dropout needs rng")
        rng = _as_rng(rng)
    y, norm, yhat, sign, feeds, acts, masks = _forward_cached(model, x, train, rng)

    n = len(x)
    loss = float(np.mean(1.0 - np.sum(sign * yhat * g, axis=1)))
    # d(mean loss)/dy: tangential projection of -sign*g, scaled by 1/(norm*n).
    gy = -sign * (g - yhat * np.sum(yhat * g, axis=1, keepdims=True)) / (norm * n)

    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    gz = gy
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = feeds[i].T @ gz
        grads_b[i] = gz.sum(axis=0)
        if i == 0:
            break
        gz = gz @ model.weights[i].T
        if masks[i - 1] is not None:
            gz = gz * masks[i - 1]
        gz = gz * (1.0 - acts[i - 1] ** 2)
    for arr in (*grads_w, *grads_b):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteGradient("gradient overflowed")
    return grads_w, grads_b, loss


@dataclass(frozen=True)
class TrainConfig:
    """Adam hyperparameters; defaults follow the training recipe."""

    learning_rate: float = 0.001
    batch_size: int = 256
    epochs: int = 250
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


@dataclass
class TrainHistory:
    """Per-epoch mean training loss, plus validation loss when tracked."""

    losses: list[float] = field(default_factory=list)
    val_losses: list[float] | None = None


def train(model: Model, dataset: PixelDataset, tcfg: TrainConfig,
          validation: PixelDataset | None = None) -> tuple[Model, TrainHistory]:
    """Adam over seeded shuffled mini-batches; the input model is not touched.

    Mini-batch order reshuffles each epoch from (seed, epoch); dropout
    noise comes from one (seed)-derived stream, so identical seeds and
    data give bitwise-identical results. With a validation set, its
    mean cosine loss (inference mode) is recorded once per epoch.
    """
    if dataset.normals is None or len(dataset) == 0:
        raise ValueError("training needs a non-empty labelled dataset")
    if validation is not None and validation.normals is None:
        raise ValueError("validation set must be labelled")
    model = model.copy()
    history = TrainHistory(val_losses=None if validation is None else [])

    m_w = [np.zeros_like(w) for w in model.weights]
    v_w = [np.zeros_like(w) for w in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]
    step = 0
    dropout_rng = np.random.default_rng([tcfg.seed, 1])

    features, normals = dataset.features, dataset.normals
    for epoch in range(tcfg.epochs):
        perm = np.random.default_rng([tcfg.seed, 2, epoch]).permutation(len(features))
        total = 0.0
        for lo in range(0, len(perm), tcfg.batch_size):
            batch = perm[lo:lo + tcfg.batch_size]
            grads_w, grads_b, loss = backward(
                model, features[batch], normals[batch], dropout_rng)
            total += loss * len(batch)
            step += 1
            c1 = 1.0 - tcfg.beta1 ** step
            c2 = 1.0 - tcfg.beta2 ** step
            for params, grads, ms, vs in ((model.weights, grads_w, m_w, v_w),
                                          (model.biases, grads_b, m_b, v_b)):
                for p, g, m, v in zip(params, grads, ms, vs):
                    m *= tcfg.beta1
                    m += (1.0 - tcfg.beta1) * g
                    v *= tcfg.beta2
                    v += (1.0 - tcfg.beta2) * g * g
                    p -= tcfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + tcfg.epsilon)
        history.losses.append(total / len(features))
        if validation is not None:
            pred = _forward_chunked(model, validation.features)
            history.val_losses.append(float(np.mean(cosine_loss(pred, validation.normals))))
    return model, history


def _forward_chunked(model, features, chunk=8192):
    out = np.empty((len(features), 3))
    for lo in range(0, len(features), chunk):
        out[lo:lo + chunk] = forward(model, features[lo:lo + chunk])
    return out


def infer_map(model: Model, stream: EventStream, mask=None,
              n_segments: int | None = None) -> NormalMap:
    """Per-pixel inference over one cycle of events.

    n_segments defaults to the model's input width (they must agree).
    Pixels outside the mask or with zero events are invalid.
    """
    if n_segments is None:
        n_segments = model.config.input_width
    if n_segments != model.config.input_width:
        raise ValueError("segment count must match the model input width")
    if mask is None:
        mask = np.ones((stream.height, stream.width), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (stream.height, stream.width):
        raise ValueError("mask shape must match the sensor")
    values, counts = polarity_matrix(stream, n_segments)
    valid = mask.ravel() & (counts > 0)
    rows = np.flatnonzero(valid)
    normals = np.zeros((stream.height * stream.width, 3))
    if rows.size:
        normals[rows] = _forward_chunked(model, values[rows].astype(np.float64))
    shape = (stream.height, stream.width)
    return NormalMap(normals.reshape(*shape, 3), valid.reshape(shape))

"""
bnn.py — Bayesian neural network oracle (MC-dropout approximation).

Architecture: 2 → 50 → 50 → 50 → 1, sigmoid hidden units, linear output.
Dropout (inverted, rate p) acts on hidden activations only. Training is
full-batch on mean squared error plus an L2 penalty on the weights (not the
biases), with Adam (default) or plain gradient descent, and a fresh set of
per-example dropout masks every epoch.

Inputs are mapped to [-1, 1] per axis using the grid bounds given to
init_network(); targets are standardized per train() call. Both transforms are
stored on the NetworkParams and inverted on prediction.

Predictive variance comes from ``mc_passes`` stochastic forward passes with
independent dropout masks (sample mean and unbiased sample variance).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from . import PROJECT_NAME
from .surface import Dataset, GridSpec, Position, PosteriorField

logger = logging.getLogger(f"{PROJECT_NAME.lower()}.bnn")

LAYER_SIZES = (2, 50, 50, 50, 1)
HIDDEN_LAYERS = len(LAYER_SIZES) - 2

DEFAULT_EPOCHS = 10_000
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_MC_PASSES = 50
DEFAULT_DROPOUT = 0.01
DEFAULT_L2 = 1e-5

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
OPTIMIZERS = ("adam", "sgd")
_MIN_TARGET_STD = 1e-12


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss or parameters)."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True, eq=False)
class NetworkParams:
    weights: Tuple[np.ndarray, ...]  # weights[l] is (fan_in, fan_out)
    biases: Tuple[np.ndarray, ...]
    dropout_rate: float = DEFAULT_DROPOUT
    l2_weight: float = DEFAULT_L2
    input_center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    input_scale: np.ndarray = field(default_factory=lambda: np.ones(2))
    target_mean: float = 0.0
    target_std: float = 1.0

    def __post_init__(self):
        if len(self.weights) != len(LAYER_SIZES) - 1 or len(self.biases) != len(LAYER_SIZES) - 1:
            raise ValueError(f"network must have {len(LAYER_SIZES) - 1} layers")
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (LAYER_SIZES[layer], LAYER_SIZES[layer + 1])
            if w.shape != expected or b.shape != (expected[1],):
                raise ValueError(f"layer {layer}: weights {w.shape}, biases {b.shape}, expected {expected}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {layer} has non-finite parameters")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.l2_weight < 0:
            raise ValueError(f"l2_weight must be >= 0, got {self.l2_weight}")

    @property
    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LEARNING_RATE
    mc_passes: int = DEFAULT_MC_PASSES
    seed: int = 0
    optimizer: str = "adam"
    standardize: bool = True
    warm_start: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.mc_passes < 1:
            raise ValueError(f"mc_passes must be >= 1, got {self.mc_passes}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")


def _rng(rng: Optional[np.random.Generator], cfg: Optional[TrainConfig]) -> np.random.Generator:
    if rng is not None:
        return rng
    return np.random.default_rng(cfg.seed if cfg is not None else 0)


def init_network(
    rng: np.random.Generator,
    dropout_rate: float = DEFAULT_DROPOUT,
    l2_weight: float = DEFAULT_L2,
    bounds: Optional[GridSpec] = None,
) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))

    center, scale = np.zeros(2), np.ones(2)
    if bounds is not None:
        center = np.array([(bounds.x1_min + bounds.x1_max) / 2, (bounds.x2_min + bounds.x2_max) / 2])
        scale = np.array([(bounds.x1_max - bounds.x1_min) / 2, (bounds.x2_max - bounds.x2_min) / 2])
        scale[scale == 0] = 1.0
    return NetworkParams(
        weights=tuple(weights),
        biases=tuple(biases),
        dropout_rate=dropout_rate,
        l2_weight=l2_weight,
        input_center=center,
        input_scale=scale,
    )


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _draw_masks(rng: np.random.Generator, n: int, rate: float) -> Optional[List[np.ndarray]]:
    """Per-example binary keep-masks for each hidden layer, or None without dropout."""
    if rate == 0:
        return None
    return [(rng.random((n, size)) >= rate).astype(float) for size in LAYER_SIZES[1:-1]]


def _forward(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    X: np.ndarray,
    masks: Optional[Sequence[np.ndarray]],
    rate: float,
) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
    """Returns (outputs, layer inputs, sigmoid activations) in model units.

    Masks are ignored at rate 0, where dropout is the identity.
    """
    if rate == 0:
        masks = None
    keep_scale = 1.0 / (1.0 - rate)
    inputs = [X]
    sigmas = []
    h = X
    for layer in range(HIDDEN_LAYERS):
        s = expit(h @ weights[layer] + biases[layer])
        sigmas.append(s)
        h = s * (masks[layer] * keep_scale) if masks is not None else s
        inputs.append(h)
    out = h @ weights[-1] + biases[-1]
    return out[:, 0], inputs, sigmas


def _loss_and_gradients(weights, biases, l2, X, t, masks, rate):
    if rate == 0:
        masks = None
    out, inputs, sigmas = _forward(weights, biases, X, masks, rate)
    n = X.shape[0]
    resid = out - t
    loss = float(np.mean(resid**2)) + l2 * sum(float(np.sum(w * w)) for w in weights)

    keep_scale = 1.0 / (1.0 - rate)
    grad_w = [None] * len(weights)
    grad_b = [None] * len(biases)
    delta = (2.0 / n) * resid[:, None]
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = inputs[layer].T @ delta + 2.0 * l2 * weights[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer == 0:
            break
        upstream = delta @ weights[layer].T
        if masks is not None:
            upstream = upstream * (masks[layer - 1] * keep_scale)
        s = sigmas[layer - 1]
        delta = upstream * s * (1.0 - s)
    return loss, grad_w, grad_b


def loss_and_gradients(
    net: NetworkParams,
    X: np.ndarray,
    t: np.ndarray,
    masks: Optional[Sequence[np.ndarray]] = None,
) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """Training objective and its parameter gradients.

    ``X`` and ``t`` are in model units (normalized inputs, standardized
    targets), as train() feeds them.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    t = np.asarray(t, dtype=float).reshape(-1)
    return _loss_and_gradients(net.weights, net.biases, net.l2_weight, X, t, masks, net.dropout_rate)


def _model_inputs(net: NetworkParams, positions) -> np.ndarray:
    X = np.atleast_2d(np.asarray(positions, dtype=float))
    return (X - net.input_center) / net.input_scale


def _predict_batch(net: NetworkParams, X: np.ndarray, masks) -> np.ndarray:
    out, _, _ = _forward(net.weights, net.biases, X, masks, net.dropout_rate)
    return out * net.target_std + net.target_mean


def forward(net: NetworkParams, r: Position, dropout_mask: Optional[Sequence[np.ndarray]] = None) -> float:
    """Single prediction at r. ``dropout_mask`` holds one binary vector per hidden layer."""
    masks = None
    if dropout_mask is not None:
        masks = [np.asarray(m, dtype=float).reshape(1, -1) for m in dropout_mask]
    return float(_predict_batch(net, _model_inputs(net, r), masks)[0])


def _targets(net: NetworkParams, training: Dataset, cfg: TrainConfig) -> Tuple[np.ndarray, float, float]:
    y = training.values
    if not cfg.standardize:
        return y.copy(), 0.0, 1.0
    mean = float(np.mean(y))
    std = float(np.std(y))
    if std < _MIN_TARGET_STD:
        std = 1.0
    return (y - mean) / std, mean, std


def training_loss(net: NetworkParams, training: Dataset, cfg: Optional[TrainConfig] = None) -> float:
    """Dropout-free training objective, using the standardization train() would apply."""
    cfg = cfg or TrainConfig()
    t, _, _ = _targets(net, training, cfg)
    loss, _, _ = loss_and_gradients(net, _model_inputs(net, training.positions), t)
    return loss


# ---------------------------------------------------------------------------
# Training / prediction
# ---------------------------------------------------------------------------


def train(
    net: NetworkParams,
    training: Dataset,
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
) -> NetworkParams:
    """Run ``cfg.epochs`` full-batch steps and return the updated parameters."""
    if len(training) == 0:
        raise ValueError("BNN training set is empty")
    rng = _rng(rng, cfg)
    X = _model_inputs(net, training.positions)
    t, mean, std = _targets(net, training, cfg)
    n = X.shape[0]
    rate, l2, lr = net.dropout_rate, net.l2_weight, cfg.learning_rate

    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    params = weights + biases
    if cfg.optimizer == "adam":
        m1 = [np.zeros_like(p) for p in params]
        m2 = [np.zeros_like(p) for p in params]

    loss = float("nan")
    for epoch in range(cfg.epochs):
        masks = _draw_masks(rng, n, rate)
        loss, gw, gb = _loss_and_gradients(weights, biases, l2, X, t, masks, rate)
        if not math.isfinite(loss):
            raise TrainingError(epoch, loss)
        grads = gw + gb
        if cfg.optimizer == "adam":
            step = epoch + 1
            c1 = 1.0 - ADAM_BETA1**step
            c2 = 1.0 - ADAM_BETA2**step
            for p, g, a, b in zip(params, grads, m1, m2):
                a *= ADAM_BETA1
                a += (1.0 - ADAM_BETA1) * g
                b *= ADAM_BETA2
                b += (1.0 - ADAM_BETA2) * g * g
                p -= lr * (a / c1) / (np.sqrt(b / c2) + ADAM_EPS)
        else:
            for p, g in zip(params, grads):
                p -= lr * g

    if not all(np.all(np.isfinite(p)) for p in params):
        raise TrainingError(cfg.epochs, loss)
    logger.debug(f"BNN train: n={n} epochs={cfg.epochs} last loss={loss:.6g}")
    return replace(net, weights=tuple(weights), biases=tuple(biases), target_mean=mean, target_std=std)


def mc_samples(
    net: NetworkParams,
    targets,
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Raw per-pass predictions, shape (mc_passes, len(targets))."""
    rng = _rng(rng, cfg)
    X = _model_inputs(net, targets)
    return np.stack([_predict_batch(net, X, _draw_masks(rng, X.shape[0], net.dropout_rate)) for _ in range(cfg.mc_passes)])


def predict_mc(
    net: NetworkParams,
    targets,
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
) -> PosteriorField:
    """MC-dropout mean and unbiased variance per target (variance 0 for a single pass)."""
    rng = _rng(rng, cfg)
    X = _model_inputs(net, targets)
    if X.shape[0] == 0:
        raise ValueError("predict_mc needs at least one target")
    mean = np.zeros(X.shape[0])
    m2 = np.zeros(X.shape[0])
    for k in range(1, cfg.mc_passes + 1):
        y = _predict_batch(net, X, _draw_masks(rng, X.shape[0], net.dropout_rate))
        delta = y - mean
        mean += delta / k
        m2 += delta * (y - mean)
    if cfg.mc_passes > 1:
        variances = m2 / (cfg.mc_passes - 1)
    else:
        variances = np.zeros_like(mean)
    return PosteriorField(mean, variances)

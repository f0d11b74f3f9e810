"""Tanh multilayer perceptron with hand-written backpropagation and AdamW."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .qmc import RateConfig

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class Normalization:
    """Affine map x -> (x - center) / scale, applied per coordinate."""

    center: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, width: int) -> "Normalization":
        return cls(np.zeros(width), np.ones(width))

    @classmethod
    def from_bounds(cls, lo, hi) -> "Normalization":
        """Map [lo, hi] onto [-1, 1]; constant coordinates only get shifted."""
        lo, hi = np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)
        half = 0.5 * (hi - lo)
        half = np.where(half > 0, half, 1.0)
        return cls(0.5 * (hi + lo), half)

    @classmethod
    def min_max(cls, data) -> "Normalization":
        data = np.asarray(data, dtype=np.float64)
        return cls.from_bounds(data.min(axis=0), data.max(axis=0))

    def apply(self, x):
        return (x - self.center) / self.scale

    def invert(self, z):
        return z * self.scale + self.center


@dataclass
class Mlp:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_norm: Normalization
    output_norm: Normalization

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def copy(self) -> "Mlp":
        return Mlp(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            Normalization(self.input_norm.center.copy(), self.input_norm.scale.copy()),
            Normalization(self.output_norm.center.copy(), self.output_norm.scale.copy()),
        )

    def n_params(self) -> int:
        return sum(p.size for p in self.params)


def mlp_init(dims, seed: int = 0) -> Mlp:
    """Glorot-uniform weights and zero biases."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"invalid layer dimensions {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases, Normalization.identity(dims[0]), Normalization.identity(dims[-1]))


def forward_raw(m: Mlp, x: np.ndarray) -> np.ndarray:
    """Network output in normalized coordinates; ``x`` is already normalized.

    Rows of ``x`` are samples.
    """
    a = x
    last = len(m.weights) - 1
    for k, (W, b) in enumerate(zip(m.weights, m.biases)):
        a = a @ W.T + b
        if k < last:
            a = np.tanh(a)
    return a


def forward(m: Mlp, x) -> np.ndarray:
    """Evaluate with input normalization and output de-normalization."""
    x = np.asarray(x, dtype=np.float64)
    return m.output_norm.invert(forward_raw(m, m.input_norm.apply(x)))


def loss_and_grad(m: Mlp, inputs, targets):
    """Mean squared error and its gradient for raw (normalized) data.

    L = (1/B) * sum_i || t_i - f(x_i) ||^2. Gradients are returned in the
    order of ``m.params`` (all weights, then all biases).
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if x.shape[0] == 0 or x.shape[0] != t.shape[0]:
        raise ValueError(f"batch shape mismatch: {x.shape} vs {t.shape}")
    if x.shape[1] != m.dims[0] or t.shape[1] != m.dims[-1]:
        raise ValueError(f"data widths {x.shape[1]}, {t.shape[1]} do not match {m.dims}")
    batch = x.shape[0]
    acts = [x]
    L = len(m.weights)
    a = x
    for k in range(L):
        z = a @ m.weights[k].T + m.biases[k]
        a = np.tanh(z) if k < L - 1 else z
        acts.append(a)
    diff = acts[-1] - t
    loss = float(np.sum(diff * diff) / batch)

    grad_w = [None] * L
    grad_b = [None] * L
    delta = (2.0 / batch) * diff
    for k in range(L - 1, -1, -1):
        grad_w[k] = delta.T @ acts[k]
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ m.weights[k]) * (1.0 - acts[k] ** 2)
    return loss, grad_w + grad_b


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 50_000
    batch_size: int = 0  # 0 means full batch
    lr_initial: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-12
    weight_decay: float = 1.0
    plateau_patience: int = 500
    plateau_factor: float = 0.1
    plateau_threshold: float = 1e-4
    plateau_eps: float = 1e-20
    plateau_min_lr: float = 0.0
    stop_threshold: float | None = None  # None: resolved to N**(-alpha) by the caller
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.batch_size < 0:
            raise ValueError("batch_size must be >= 0")
        for name in ("lr_initial", "adam_eps", "plateau_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.weight_decay < 0 or self.plateau_patience < 0:
            raise ValueError("weight_decay and plateau_patience must be non-negative")
        if self.stop_threshold is not None and not self.stop_threshold > 0:
            raise ValueError("stop_threshold must be positive")


def adamw_step(params, grads, state: AdamState, lr: float, cfg: TrainConfig) -> None:
    """In-place AdamW update with decoupled weight decay."""
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps) + cfg.weight_decay * p
        p -= lr * update


class PlateauScheduler:
    """Reduce the learning rate once the loss stops improving.

    Relative-threshold, min-mode semantics: an epoch counts as an improvement
    if ``loss < best * (1 - threshold)``. After more than ``patience`` bad
    epochs the rate is multiplied by ``factor`` unless the change would be
    smaller than ``eps``.
    """

    def __init__(self, lr, factor, patience, threshold, eps, min_lr=0.0):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.eps = eps
        self.min_lr = min_lr
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, loss: float) -> float:
        if loss < self.best * (1.0 - self.threshold):
            self.best = loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            new_lr = max(self.lr * self.factor, self.min_lr)
            if self.lr - new_lr > self.eps:
                self.lr = new_lr
            self.bad_epochs = 0
        return self.lr


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def best_loss(self) -> float:
        return min(self.loss) if self.loss else math.inf

    @property
    def epochs(self) -> int:
        return len(self.loss)


def fit_normalizations(m: Mlp, inputs, targets, input_bounds=(-1.0, 1.0)) -> Mlp:
    """Attach the data normalizations used for training and evaluation.

    Inputs live on the parameter cube, so the input map is fixed to that
    cube (the identity for [-1, 1]); targets are min-max scaled into [-1, 1].
    """
    width = np.asarray(inputs).shape[1]
    m.input_norm = Normalization.from_bounds(
        np.full(width, input_bounds[0]), np.full(width, input_bounds[1])
    )
    m.output_norm = Normalization.min_max(targets)
    return m


def train(m: Mlp, inputs, targets, cfg: TrainConfig) -> tuple[Mlp, TrainHistory]:
    """Minimize the normalized-data MSE; stop once it drops below the threshold.

    ``m`` must carry its normalizations (see ``fit_normalizations``). The
    returned network holds the parameters with the lowest recorded loss.
    """
    if cfg.stop_threshold is None:
        raise ValueError("stop_threshold must be resolved before training")
    x = m.input_norm.apply(np.asarray(inputs, dtype=np.float64))
    t = m.output_norm.apply(np.asarray(targets, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    n = x.shape[0]
    rng = np.random.default_rng(cfg.seed)
    work = m.copy()
    params = work.params
    state = AdamState.zeros_like(params)
    sched = PlateauScheduler(
        cfg.lr_initial,
        cfg.plateau_factor,
        cfg.plateau_patience,
        cfg.plateau_threshold,
        cfg.plateau_eps,
        cfg.plateau_min_lr,
    )
    hist = TrainHistory()
    best = work.copy()
    best_loss = math.inf
    full_batch = cfg.batch_size == 0 or cfg.batch_size >= n

    for epoch in range(cfg.max_epochs):
        lr = sched.lr
        if full_batch:
            loss, grads = loss_and_grad(work, x, t)
            snapshot = work.copy() if loss < best_loss else None
            if math.isfinite(loss) and loss >= cfg.stop_threshold:
                adamw_step(params, grads, state, lr, cfg)
        else:
            # loss of the parameters entering this epoch, on the whole set
            loss = float(np.sum((forward_raw(work, x) - t) ** 2) / n)
            snapshot = work.copy() if loss < best_loss else None
            if math.isfinite(loss) and loss >= cfg.stop_threshold:
                order = rng.permutation(n)
                for start in range(0, n, cfg.batch_size):
                    idx = order[start : start + cfg.batch_size]
                    _, grads = loss_and_grad(work, x[idx], t[idx])
                    adamw_step(params, grads, state, lr, cfg)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} at epoch {epoch + 1} (lr={lr:.3e})")
        hist.loss.append(loss)
        hist.lr.append(lr)
        if snapshot is not None:
            best, best_loss = snapshot, loss
        if loss < cfg.stop_threshold:
            hist.stop_reason = "threshold"
            break
        sched.step(loss)
    else:
        hist.stop_reason = "max_epochs"
    log.debug("training stopped after %d epochs (%s), best loss %.3e",
              hist.epochs, hist.stop_reason, best_loss)
    return best, hist


@dataclass(frozen=True)
class SizingConfig:
    n: int
    width: int
    hidden_layers: int

    def dims(self, n_inputs: int, n_outputs: int) -> tuple[int, ...]:
        return (n_inputs,) + (self.width,) * self.hidden_layers + (n_outputs,)


def size_apriori(n_samples: int, rates: RateConfig) -> SizingConfig:
    """n = ceil(N^(alpha p / (2 - p))), width n^2, ceil(max(1, log2(n)/2)) + 2 hidden layers."""
    if n_samples < 1:
        raise ValueError(f"N must be >= 1, got {n_samples}")
    if not (rates.alpha > 0 and 0 < rates.p < 1):
        raise ValueError(f"invalid rates {rates}")
    val = n_samples ** (rates.alpha * rates.p / (2 - rates.p))
    n = max(1, math.ceil(val * (1 - 1e-12)))
    depth = math.ceil(max(1.0, math.log2(n) / 2)) + 2
    return SizingConfig(n, n * n, depth)


def predict_coeffs(m: Mlp, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != m.dims[0]:
        raise ValueError(f"parameter of width {y.shape[-1]} for a {m.dims[0]}-input network")
    return forward(m, y)

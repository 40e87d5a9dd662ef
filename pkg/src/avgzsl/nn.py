"""Dense-layer kit: affine, batch norm, ReLU, dropout, the two losses,
Adam, the plateau learning-rate scheduler, and a finite-difference
gradient checker.

Every forward function returns ``(output, cache)`` and has a matching
``*_backward`` that consumes the cache, so the fixed graphs assembled from
these blocks get exact reverse-mode gradients without a general autodiff
engine. All arithmetic runs in the dtype of the inputs: float32 during
training, float64 when the identical graph is replayed for gradient
checks.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, LabelError, NumericError


class Mode(enum.Enum):
    """Train uses batch statistics and live dropout; Eval is a pure function."""

    TRAIN = "train"
    EVAL = "eval"


# ---------------------------------------------------------------------------
# parameter containers


@dataclass
class AffineParams:
    weight: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5


@dataclass
class FFBlockParams:
    """One Linear -> BatchNorm -> ReLU -> Dropout unit."""

    affine: AffineParams
    bn: BatchNormState
    dropout_rate: float = 0.1


def init_affine(rng: np.random.Generator, in_dim: int, out_dim: int,
                dtype=np.float32) -> AffineParams:
    """Weights uniform in +/- sqrt(1/fan_in), bias zero."""
    k = math.sqrt(1.0 / in_dim)
    weight = rng.uniform(-k, k, size=(in_dim, out_dim)).astype(dtype)
    bias = np.zeros(out_dim, dtype=dtype)
    return AffineParams(weight, bias)


def init_batch_norm(dim: int, momentum: float = 0.1, eps: float = 1e-5,
                    dtype=np.float32) -> BatchNormState:
    return BatchNormState(
        gamma=np.ones(dim, dtype=dtype),
        beta=np.zeros(dim, dtype=dtype),
        running_mean=np.zeros(dim, dtype=dtype),
        running_var=np.ones(dim, dtype=dtype),
        momentum=momentum,
        eps=eps,
    )


def init_ff_block(rng: np.random.Generator, in_dim: int, out_dim: int,
                  dropout_rate: float, dtype=np.float32) -> FFBlockParams:
    return FFBlockParams(
        affine=init_affine(rng, in_dim, out_dim, dtype),
        bn=init_batch_norm(out_dim, dtype=dtype),
        dropout_rate=dropout_rate,
    )


# ---------------------------------------------------------------------------
# layers


def affine(x: np.ndarray, p: AffineParams):
    """y = x @ W + b with the bias broadcast across rows."""
    if x.ndim != 2 or x.shape[1] != p.weight.shape[0]:
        raise DimensionError(
            f"affine: input shape {x.shape} incompatible with weight shape "
            f"{p.weight.shape}")
    y = x @ p.weight + p.bias
    return y, x


def affine_backward(g: np.ndarray, x: np.ndarray, p: AffineParams):
    """Returns (dx, dW, db) for upstream gradient g."""
    dx = g @ p.weight.T
    dw = x.T @ g
    db = g.sum(axis=0)
    return dx, dw, db


@dataclass
class BatchNormCache:
    mode: Mode
    xhat: np.ndarray
    x_centered: np.ndarray
    inv_std: np.ndarray


def batch_norm(x: np.ndarray, s: BatchNormState, mode: Mode):
    """Normalize columns; Train uses batch statistics and updates the
    running estimates in place, Eval reads the running estimates only.

    Normalization uses the biased batch variance; the running-variance
    update uses the unbiased estimate.
    """
    if x.shape[1] != s.gamma.shape[0]:
        raise DimensionError(
            f"batch_norm: input shape {x.shape} vs feature dim "
            f"{s.gamma.shape[0]}")
    if mode is Mode.TRAIN:
        n = x.shape[0]
        if n < 2:
            raise ConfigError(
                f"batch_norm: training batch of size {n} has no defined "
                f"variance (need at least 2 rows)")
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + s.eps)
        x_centered = x - mu
        xhat = x_centered * inv_std
        m = s.momentum
        s.running_mean = ((1.0 - m) * s.running_mean + m * mu).astype(x.dtype)
        unbiased = var * (n / (n - 1))
        s.running_var = ((1.0 - m) * s.running_var + m * unbiased).astype(x.dtype)
    else:
        inv_std = 1.0 / np.sqrt(s.running_var + s.eps)
        x_centered = x - s.running_mean
        xhat = x_centered * inv_std
    y = s.gamma * xhat + s.beta
    return y, BatchNormCache(mode, xhat, x_centered, inv_std)


def batch_norm_backward(g: np.ndarray, cache: BatchNormCache, s: BatchNormState):
    """Exact backward through the batch mean and variance in Train mode."""
    dgamma = (g * cache.xhat).sum(axis=0)
    dbeta = g.sum(axis=0)
    dxhat = g * s.gamma
    if cache.mode is Mode.EVAL:
        dx = dxhat * cache.inv_std
        return dx, dgamma, dbeta
    n = g.shape[0]
    xc = cache.x_centered
    inv_std = cache.inv_std
    dvar = (dxhat * xc).sum(axis=0) * (-0.5) * inv_std ** 3
    dmu = -(dxhat.sum(axis=0)) * inv_std + dvar * (-2.0) * xc.mean(axis=0)
    dx = dxhat * inv_std + dvar * (2.0 / n) * xc + dmu / n
    return dx, dgamma, dbeta


def relu(x: np.ndarray):
    return np.maximum(x, 0.0), x


def relu_backward(g: np.ndarray, x: np.ndarray):
    # gradient at exactly 0 is defined as 0
    return g * (x > 0)


def dropout(x: np.ndarray, rate: float, mode: Mode,
            rng: Optional[np.random.Generator]):
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time so
    Eval is a bit-exact identity. rate == 0 skips the generator entirely.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode is Mode.EVAL or rate == 0.0:
        return x, None
    if rng is None:
        raise ConfigError("dropout in Train mode needs a seeded generator")
    mask = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    return (x * mask) * scale, (mask, scale)


def dropout_backward(g: np.ndarray, cache):
    if cache is None:
        return g
    mask, scale = cache
    return (g * mask) * scale


@dataclass
class FFBlockCache:
    x: np.ndarray
    bn: BatchNormCache
    preact: np.ndarray
    drop: object


def ff_block(x: np.ndarray, p: FFBlockParams, mode: Mode,
             rng: Optional[np.random.Generator]):
    """Linear -> BatchNorm -> ReLU -> Dropout; output entries are >= 0."""
    z, x_cache = affine(x, p.affine)
    h, bn_cache = batch_norm(z, p.bn, mode)
    r, preact = relu(h)
    y, drop_cache = dropout(r, p.dropout_rate, mode, rng)
    return y, FFBlockCache(x_cache, bn_cache, preact, drop_cache)


def ff_block_backward(g: np.ndarray, cache: FFBlockCache, p: FFBlockParams):
    """Returns (dx, grads) with grads keyed weight/bias/gamma/beta."""
    g = dropout_backward(g, cache.drop)
    g = relu_backward(g, cache.preact)
    g, dgamma, dbeta = batch_norm_backward(g, cache.bn, p.bn)
    dx, dw, db = affine_backward(g, cache.x, p.affine)
    return dx, {"weight": dw, "bias": db, "gamma": dgamma, "beta": dbeta}


# ---------------------------------------------------------------------------
# losses


def softmax_cross_entropy(logits: np.ndarray, target_index: np.ndarray):
    """Mean NLL of the target under a row-wise softmax, computed with the
    max-subtraction trick. Returns (loss, gradient w.r.t. logits) where the
    gradient is (softmax - one_hot) / batch.
    """
    targets = np.asarray(target_index)
    n, k = logits.shape
    if targets.shape != (n,):
        raise DimensionError(
            f"softmax_cross_entropy: {n} logit rows vs targets shape "
            f"{targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise LabelError(
            f"target index out of range [0, {k}): "
            f"min={targets.min()} max={targets.max()}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1)
    rows = np.arange(n)
    nll = np.log(total) - shifted[rows, targets]
    loss = float(nll.mean())
    grad = exp / total[:, None]
    grad[rows, targets] -= 1.0
    grad /= n
    return loss, grad.astype(logits.dtype, copy=False)


def mean_squared_error(a: np.ndarray, b: np.ndarray):
    """(1/rows) * sum of squared row differences.

    Returns (loss, grad_a, grad_b); grad_b is the mirror of grad_a for the
    case where the target is itself produced by learnable parameters.
    """
    if a.shape != b.shape:
        raise DimensionError(
            f"mean_squared_error: shapes {a.shape} vs {b.shape}")
    n = a.shape[0]
    diff = a - b
    loss = float((diff * diff).sum() / n)
    grad_a = diff * (2.0 / n)
    return loss, grad_a, -grad_a


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """Classic Adam with bias correction; weight decay is the coupled L2
    form, added to the gradient before the moment updates."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """One Adam update over a dict of named parameter arrays, in place."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(
                f"adam_step: gradient shape {g.shape} vs parameter "
                f"'{name}' shape {p.shape}")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter '{name}'")
        if state.weight_decay:
            g = g + state.weight_decay * p
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# learning-rate scheduling


@dataclass
class PlateauScheduler:
    """Cut the learning rate by `factor` once the tracked score has failed
    to improve (strictly) for `patience` consecutive epochs; the bad-epoch
    counter resets after each cut. The rate is derived as
    base_lr * factor ** reductions so n cuts give exactly that product.
    """

    base_lr: float
    patience: int = 3
    factor: float = 0.1
    best: Optional[float] = None
    bad_epochs: int = 0
    reductions: int = 0

    @property
    def lr(self) -> float:
        return self.base_lr * self.factor ** self.reductions

    def step(self, score: float) -> float:
        if self.best is None or score > self.best:
            self.best = score
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.reductions += 1
                self.bad_epochs = 0
        return self.lr


def plateau_lr(history: Sequence[float], base_lr: float, patience: int = 3,
               factor: float = 0.1) -> float:
    """Learning rate in effect after feeding `history` through the scheduler."""
    if len(history) == 0:
        raise ConfigError("plateau_lr: history must be nonempty")
    sched = PlateauScheduler(base_lr, patience=patience, factor=factor)
    for score in history:
        sched.step(score)
    return sched.lr


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(loss_fn: Callable[[dict], tuple], params: dict,
               h: float = 1e-5, max_entries: int = 16, seed: int = 0,
               names: Optional[Iterable[str]] = None) -> float:
    """Compare analytic gradients against central finite differences.

    `loss_fn(params) -> (loss, grads)` must be deterministic and the params
    float64. Checks up to `max_entries` randomly chosen entries per
    parameter and returns the worst relative error
    |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).

    Entries where both gradients sit below the finite-difference noise
    floor (the rounding error of (l+ - l-) / 2h) count as exact matches:
    a central difference cannot resolve a derivative that small, and batch
    normalization makes every downstream affine bias exactly such a dead
    parameter.
    """
    loss0, analytic = loss_fn(params)
    noise_floor = 64.0 * np.finfo(np.float64).eps * max(abs(loss0), 1.0) / h
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in (names if names is not None else params):
        p = params[name]
        flat = p.reshape(-1)
        size = flat.size
        if size <= max_entries:
            idx = np.arange(size)
        else:
            idx = rng.choice(size, size=max_entries, replace=False)
        ana_flat = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = loss_fn(params)
            flat[i] = orig - h
            lm, _ = loss_fn(params)
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * h)
            if max(abs(ana_flat[i]), abs(numeric)) <= noise_floor:
                continue
            rel = abs(ana_flat[i] - numeric) / max(
                abs(ana_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst

"""Loss, Adam with feasibility projection, the training loop and gradient checks."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .context import GraphContext
from .denoiser import EN, DauParams, graphdau_forward
from .gradients import GradBundle, graphdau_backward, nestdau_backward
from .restorer import DegradationOp, NestParams, nestdau_forward

log = logging.getLogger(__name__)

Model = Union[DauParams, NestParams]

MIN_POSITIVE = 1e-6


class NumericError(RuntimeError):
    """Training produced a non-finite loss."""


def loss_mse(x_hat, x_star) -> tuple[float, np.ndarray]:
    x_hat = np.asarray(x_hat, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    if x_hat.shape != x_star.shape:
        raise ValueError(f"length mismatch: {x_hat.shape} vs {x_star.shape}")
    r = x_hat - x_star
    n = r.shape[0]
    return float(r @ r) / n, (2.0 / n) * r


def rmse(x_hat, x_star) -> float:
    return math.sqrt(loss_mse(x_hat, x_star)[0])


# ----------------------------------------------------------- model dispatch

def forward(model: Model, y, H: DegradationOp, ctx: GraphContext, capture: bool = False):
    if isinstance(model, NestParams):
        return nestdau_forward(model, y, H, ctx, capture)
    return graphdau_forward(model, y, ctx, capture)


def backward(model: Model, trace, ctx: GraphContext, upstream) -> tuple[GradBundle, np.ndarray]:
    if isinstance(model, NestParams):
        return nestdau_backward(model, trace, ctx, upstream)
    return graphdau_backward(model, trace, ctx, upstream)


def predict(model_fn, samples, dataset) -> list[np.ndarray]:
    """Restore every sample, batching columns that share a graph.

    ``model_fn(Y, H, ctx)`` maps an (N, B) batch to its restoration.
    """
    out: list = [None] * len(samples)
    groups: dict = {}
    for i, s in enumerate(samples):
        groups.setdefault(s.graph_id, []).append(i)
    for gid, idx in groups.items():
        ctx = dataset.context(gid)
        Y = np.column_stack([samples[i].degraded for i in idx])
        if any(samples[i].mask is not None for i in idx):
            masks = np.column_stack([
                np.ones(ctx.n) if samples[i].mask is None else samples[i].mask for i in idx
            ])
            H = DegradationOp(masks)
        else:
            H = DegradationOp.identity()
        X = model_fn(Y, H, ctx)
        for j, i in enumerate(idx):
            out[i] = X[:, j]
    return out


def mean_rmse(restored, samples) -> tuple[float, float]:
    """Per-sample RMSE, then mean and std over samples."""
    errs = np.array([rmse(x, s.clean) for x, s in zip(restored, samples)])
    return float(errs.mean()), float(errs.std())


def evaluate(model: Model, samples, dataset) -> tuple[float, float]:
    if not samples:
        raise ValueError("cannot evaluate on an empty split")
    restored = predict(lambda Y, H, ctx: forward(model, Y, H, ctx)[0], samples, dataset)
    return mean_rmse(restored, samples)


# ---------------------------------------------------------------- optimizer

def lower_bounds(model: Model) -> list[tuple[float, float]]:
    """(low, high) feasibility box per parameter array, in ``arrays()`` order."""
    def dau(d: DauParams):
        b = [(MIN_POSITIVE, math.inf), (0.0, math.inf)]
        if d.variant == EN:
            b.append((MIN_POSITIVE, 1.0))
        return b

    if isinstance(model, NestParams):
        out = [(MIN_POSITIVE, math.inf)]
        for d in model.denoisers:
            out.extend(dau(d))
        return out
    return dau(model)


def project(model: Model) -> Model:
    for arr, (lo, hi) in zip(model.arrays(), lower_bounds(model)):
        np.clip(arr, lo, hi, out=arr)
    return model


@dataclass
class OptimState:
    lr: float = 0.02
    decay: float = 0.6
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    skipped: int = 0

    def schedule_epoch(self) -> None:
        """StepLR with step size one epoch."""
        self.lr *= self.decay


def optimizer_step(state: OptimState, params: Model, grads: GradBundle) -> Model:
    """One Adam step with decoupled weight decay, then projection onto the feasible box.

    A step with any non-finite gradient entry is skipped and counted in
    ``state.skipped``.
    """
    arrays = params.arrays()
    garrays = grads.arrays()
    if len(arrays) != len(garrays) or any(a.shape != g.shape for a, g in zip(arrays, garrays)):
        raise ValueError("gradient bundle does not match parameter shapes")
    if not all(np.all(np.isfinite(g)) for g in garrays):
        state.skipped += 1
        log.warning("non-finite gradient at step %d; update skipped", state.step + 1)
        return params
    if not state.m:
        state.m = [np.zeros_like(a) for a in arrays]
        state.v = [np.zeros_like(a) for a in arrays]
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for a, g, m, v in zip(arrays, garrays, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.weight_decay:
            a -= state.lr * state.weight_decay * a
        a -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return project(params)


# ----------------------------------------------------------------- training

@dataclass
class TrainConfig:
    epochs: int = 3
    batch_size: int = 1
    lr: float = 0.02
    decay: float = 0.6
    weight_decay: float = 1e-4
    seed: int = 0
    patience: Optional[int] = None
    eval_every: int = 1
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size != 1:
            raise ValueError("only batch size 1 is supported")
        if not (self.lr > 0 and self.decay > 0 and self.weight_decay >= 0):
            raise ValueError("learning rate and decay must be positive, weight decay nonnegative")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


HISTORY_FIELDS = ("iteration", "epoch", "sample_idx", "train_loss", "valid_rmse", "lr")


def train(model: Model, dataset, config: TrainConfig, valid_split: str = "valid"):
    """Supervised training with batch size 1 and per-epoch learning-rate decay.

    Returns ``(best_params, history)``. ``history`` holds one dict per
    iteration (see ``HISTORY_FIELDS``); ``valid_rmse`` is NaN on iterations
    skipped by ``eval_every``. The parameters with the lowest validation
    RMSE seen (including the initial ones) are returned.
    """
    train_set = dataset.split("train")
    valid_set = dataset.split(valid_split)
    if not train_set:
        raise ValueError("training split is empty")
    if not valid_set:
        raise ValueError("validation split is empty")
    params = model.copy()
    state = OptimState(lr=config.lr, decay=config.decay, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    best = params.copy()
    best_rmse = evaluate(params, valid_set, dataset)[0]
    since_best = 0
    history = []
    it = 0
    train_idx = dataset.splits["train"]
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_set)) if config.shuffle else np.arange(len(train_set))
        stop = False
        for j in order:
            sample = train_set[j]
            ctx = dataset.context(sample.graph_id)
            x_hat, trace = forward(params, sample.degraded, sample.H, ctx, capture=True)
            loss, g = loss_mse(x_hat, sample.clean)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite training loss at iteration {it + 1} (sample {train_idx[j]})")
            grads, _ = backward(params, trace, ctx, g)
            lr_used = state.lr
            optimizer_step(state, params, grads)
            it += 1
            v = math.nan
            if it % config.eval_every == 0:
                v = evaluate(params, valid_set, dataset)[0]
                if v < best_rmse:
                    best_rmse, best, since_best = v, params.copy(), 0
                else:
                    since_best += 1
                    if config.patience is not None and since_best >= config.patience:
                        stop = True
            history.append({"iteration": it, "epoch": epoch + 1, "sample_idx": int(train_idx[j]),
                            "train_loss": loss, "valid_rmse": v, "lr": lr_used})
            if stop:
                break
        state.schedule_epoch()
        if stop:
            log.info("early stop after %d iterations", it)
            break
    return best, history


# --------------------------------------------------------- gradient checks

def _flat_params(model: Model) -> list[tuple[np.ndarray, int]]:
    return [(a, i) for a in model.arrays() for i in range(a.shape[0])]


def finite_diff_check(model: Model, sample, ctx: GraphContext, epsilon: float = 1e-5,
                      workers: int = 1) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``sample`` is ``(y, x_star, H)``. The relative error of each coordinate
    is ``|a - n| / max(|a| + |n| + 1e-12, floor)`` where ``floor`` is the
    central-difference roundoff level (1e6 ulps of the loss divided by
    ``epsilon``, i.e. room for ~100 ulps of accumulated forward-pass
    rounding at a 1e-4 score); structurally zero gradients would otherwise
    be scored against pure rounding noise.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    y, x_star, H = sample
    H = H if H is not None else DegradationOp.identity()
    x_hat, trace = forward(model, y, H, ctx, capture=True)
    loss0, g = loss_mse(x_hat, x_star)
    grads, _ = backward(model, trace, ctx, g)
    analytic = grads.flat()
    floor = 1e6 * np.finfo(float).eps * max(abs(loss0), 1.0) / epsilon

    def numeric(k):
        m = model.copy()
        arr, i = _flat_params(m)[k]
        orig = arr[i]
        arr[i] = orig + epsilon
        lp = loss_mse(forward(m, y, H, ctx)[0], x_star)[0]
        arr[i] = orig - epsilon
        lm = loss_mse(forward(m, y, H, ctx)[0], x_star)[0]
        return (lp - lm) / (2 * epsilon)

    n_params = analytic.shape[0]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            num = np.array(list(pool.map(numeric, range(n_params))))
    else:
        num = np.array([numeric(k) for k in range(n_params)])
    if n_params == 0:
        return 0.0
    denom = np.maximum(np.abs(analytic) + np.abs(num) + 1e-12, floor)
    return float(np.max(np.abs(analytic - num) / denom))

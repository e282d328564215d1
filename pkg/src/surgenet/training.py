"""Training loop: exact backpropagation, the adaptive-moment optimizer,
whole-track batch sampling, and synchronous multi-worker gradient averaging.

One epoch = draw a batch of whole tracks, shard its rows across workers,
average the shard gradients (weighted by shard size, reduced in a fixed
order), and apply a single optimizer update at the decayed learning rate.
The averaged gradient is identical to the single-worker gradient up to float
rounding, so worker count never changes what is learned.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TrainingDivergedError
from .network import (
    Architecture,
    Checkpoint,
    CheckpointMeta,
    NetworkParams,
    forward_batch,
    init_network,
)
from .numerics import Rng, column_stats

DEFAULT_SEED = 20170324


@dataclass(frozen=True)
class Normalizer:
    """Column-wise standardization fitted on training inputs only."""

    means: np.ndarray
    stds: np.ndarray
    constant_flags: np.ndarray

    def apply(self, inputs) -> np.ndarray:
        return (np.asarray(inputs, dtype=np.float64) - self.means) / self.stds

    def invert(self, normalized) -> np.ndarray:
        return np.asarray(normalized, dtype=np.float64) * self.stds + self.means


def fit_normalizer(inputs) -> Normalizer:
    """Population mean/std per column; constant columns standardize to zero."""
    stats = column_stats(inputs)
    return Normalizer(stats.means, stats.stds, stats.constant)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""

    arch: Architecture
    epochs: int
    batch_tracks: int = 32
    learning_rate: float = 1e-3
    lr_decay: float = 0.9995
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    workers: int = 1
    seed: int = DEFAULT_SEED
    validation_every: int = 100  # 0 disables validation and best-checkpoint selection

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_tracks < 1:
            raise ValueError(f"batch_tracks must be >= 1, got {self.batch_tracks}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        for name in ("adam_beta1", "adam_beta2"):
            beta = getattr(self, name)
            if not 0 <= beta < 1:
                raise ValueError(f"{name} must be in [0, 1), got {beta}")
        if not self.adam_eps > 0:
            raise ValueError(f"adam_eps must be > 0, got {self.adam_eps}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.validation_every < 0:
            raise ValueError(f"validation_every must be >= 0, got {self.validation_every}")


@dataclass
class GradientSet:
    """Loss gradients, shaped exactly like NetworkParams.layers."""

    layers: list


@dataclass
class AdamState:
    """First/second moment estimates and the shared step counter."""

    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros(cls, net: NetworkParams) -> "AdamState":
        m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in net.layers]
        v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in net.layers]
        return cls(m, v, 0)


def _activation_slope(activation: str, h: np.ndarray) -> np.ndarray:
    # Derivatives written in terms of the activation value itself.
    if activation == "tanh":
        return 1.0 - h * h
    return h * (1.0 - h)  # sigmoid


def _batch_backprop(net: NetworkParams, x: np.ndarray, t: np.ndarray) -> tuple:
    """Mean squared error over all rows and outputs, and its exact gradient.

    x is (n, input_dim) of normalized inputs, t is (n, output_dim).
    """
    outputs, hidden = forward_batch(net, x)
    n, k = outputs.shape
    diff = outputs - t
    loss = float((diff * diff).sum() / (n * k))

    acts = [x, *hidden]  # input to each layer
    delta = diff * (2.0 / (n * k))
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        if i > 0:
            w, _ = net.layers[i]
            delta = (delta @ w) * _activation_slope(net.arch.activation, hidden[i - 1])
    return loss, GradientSet(grads)


def backprop(net: NetworkParams, x, target) -> tuple:
    """Loss and exact gradients for a single (input, target) row."""
    xv = np.asarray(x, dtype=np.float64).reshape(1, -1)
    tv = np.asarray(target, dtype=np.float64).reshape(1, -1)
    return _batch_backprop(net, xv, tv)


def adam_step(net: NetworkParams, grads: GradientSet, state: AdamState,
              lr: float, cfg: TrainConfig) -> tuple:
    """One adaptive-moment update; returns (new params, new state).

    Moments: m <- b1*m + (1-b1)*g and v <- b2*v + (1-b2)*g^2, bias-corrected
    by 1-b^t; the step is lr * m_hat / (sqrt(v_hat) + eps).
    """
    t = state.t + 1
    bc1 = 1.0 - cfg.adam_beta1 ** t
    bc2 = 1.0 - cfg.adam_beta2 ** t
    new_layers, new_m, new_v = [], [], []
    for (w, b), (gw, gb), (mw, mb), (vw, vb) in zip(
            net.layers, grads.layers, state.m, state.v):
        mw = cfg.adam_beta1 * mw + (1.0 - cfg.adam_beta1) * gw
        mb = cfg.adam_beta1 * mb + (1.0 - cfg.adam_beta1) * gb
        vw = cfg.adam_beta2 * vw + (1.0 - cfg.adam_beta2) * (gw * gw)
        vb = cfg.adam_beta2 * vb + (1.0 - cfg.adam_beta2) * (gb * gb)
        new_w = w - lr * (mw / bc1) / (np.sqrt(vw / bc2) + cfg.adam_eps)
        new_b = b - lr * (mb / bc1) / (np.sqrt(vb / bc2) + cfg.adam_eps)
        new_layers.append((new_w, new_b))
        new_m.append((mw, mb))
        new_v.append((vw, vb))
    return NetworkParams(net.arch, new_layers), AdamState(new_m, new_v, t)


def sample_batch(rng: Rng, tracks, batch_tracks: int) -> tuple:
    """Draw batch_tracks distinct tracks uniformly and stack all their rows.

    Returns (inputs (n, 6), targets (n, 10)); batches always contain whole
    tracks, never partial ones.
    """
    if batch_tracks > len(tracks):
        raise ValueError(
            f"batch of {batch_tracks} tracks requested but only {len(tracks)} available")
    idx = rng.choice_without_replacement(len(tracks), batch_tracks)
    x = np.concatenate([tracks[i].inputs for i in idx])
    t = np.concatenate([tracks[i].surge for i in idx])
    return x, t


def _shard_bounds(n_rows: int, workers: int) -> list:
    """Contiguous near-equal shards; the first n % w shards get one extra row."""
    w = min(workers, n_rows)
    base, extra = divmod(n_rows, w)
    bounds, lo = [], 0
    for i in range(w):
        hi = lo + base + (1 if i < extra else 0)
        bounds.append((lo, hi))
        lo = hi
    return bounds


def _weighted_mean_grads(results, bounds, n_rows: int) -> tuple:
    """Reduce per-shard (loss, grads) in shard order, weighting by shard size."""
    loss = 0.0
    acc = None
    for (shard_loss, shard_grads), (lo, hi) in zip(results, bounds):
        w = hi - lo
        loss += w * shard_loss
        if acc is None:
            acc = [[w * gw, w * gb] for gw, gb in shard_grads.layers]
        else:
            for slot, (gw, gb) in zip(acc, shard_grads.layers):
                slot[0] += w * gw
                slot[1] += w * gb
    scale = 1.0 / n_rows
    return loss * scale, GradientSet([(gw * scale, gb * scale) for gw, gb in acc])


def _parallel_loss_grads(net, x, t, workers, executor=None) -> tuple:
    n_rows = x.shape[0]
    if n_rows == 0:
        raise ValueError("cannot compute gradients for an empty batch")
    if workers <= 1 or n_rows == 1:
        return _batch_backprop(net, x, t)
    bounds = _shard_bounds(n_rows, workers)
    jobs = [(x[lo:hi], t[lo:hi]) for lo, hi in bounds]
    # Workers only read net; results are reduced in shard order regardless of
    # completion order, so scheduling cannot change the outcome.
    if executor is None:
        with ThreadPoolExecutor(max_workers=len(bounds)) as pool:
            results = list(pool.map(lambda job: _batch_backprop(net, *job), jobs))
    else:
        results = list(executor.map(lambda job: _batch_backprop(net, *job), jobs))
    return _weighted_mean_grads(results, bounds, n_rows)


def parallel_gradient(net: NetworkParams, batch: tuple, workers: int) -> GradientSet:
    """Mean gradient of a batch computed by sharding rows across workers.

    Equals the single-worker mean gradient up to float rounding.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    x, t = batch
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    _, grads = _parallel_loss_grads(net, x, t, workers)
    return grads


@dataclass(frozen=True)
class HistoryRow:
    """One epoch of the training record; val_mse is None off-interval."""

    epoch: int
    lr: float
    train_mse: float
    val_mse: float | None


def _dataset_mse(net: NetworkParams, x: np.ndarray, t: np.ndarray) -> float:
    outputs, _ = forward_batch(net, x)
    diff = outputs - t
    return float((diff * diff).sum() / diff.size)


def train(cfg: TrainConfig, split, progress=None) -> tuple:
    """Run the full training loop on an already-split dataset.

    Validation MSE is recorded every cfg.validation_every epochs (and at the
    final epoch); the returned checkpoint holds the parameters with the
    lowest validation MSE seen. validation_every = 0 skips validation and
    returns the final parameters. progress, if given, is called as
    progress(HistoryRow) at each validation point.

    Returns (Checkpoint, [HistoryRow per epoch]).
    """
    tracks = list(split.training)
    if not tracks:
        raise ValueError("training split is empty")
    if cfg.batch_tracks > len(tracks):
        raise ValueError(
            f"batch_tracks = {cfg.batch_tracks} exceeds the {len(tracks)} training tracks")

    normalizer = fit_normalizer(np.concatenate([tr.inputs for tr in tracks]))
    xs = [normalizer.apply(tr.inputs) for tr in tracks]
    ts = [np.asarray(tr.surge, dtype=np.float64) for tr in tracks]

    val_x = val_t = None
    if cfg.validation_every and split.validation:
        val_x = normalizer.apply(np.concatenate([tr.inputs for tr in split.validation]))
        val_t = np.concatenate([np.asarray(tr.surge) for tr in split.validation])

    root = Rng(cfg.seed)
    net = init_network(cfg.arch, root.child(0))
    batch_rng = root.child(1)
    state = AdamState.zeros(net)

    history = []
    best = None  # (val_mse, params copy, epoch, train_mse)
    executor = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            lr = cfg.learning_rate * cfg.lr_decay ** (epoch - 1)
            idx = batch_rng.choice_without_replacement(len(tracks), cfg.batch_tracks)
            x = np.concatenate([xs[i] for i in idx])
            t = np.concatenate([ts[i] for i in idx])
            loss, grads = _parallel_loss_grads(net, x, t, cfg.workers, executor)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}")
            net, state = adam_step(net, grads, state, lr, cfg)

            val = None
            if val_x is not None and (epoch % cfg.validation_every == 0 or epoch == cfg.epochs):
                val = _dataset_mse(net, val_x, val_t)
                if best is None or val < best[0]:
                    best = (val, net.copy(), epoch, loss)
            row = HistoryRow(epoch, lr, loss, val)
            history.append(row)
            if progress is not None and val is not None:
                progress(row)
    finally:
        if executor is not None:
            executor.shutdown()

    if best is not None:
        _, final_net, sel_epoch, sel_loss = best
    else:
        final_net, sel_epoch, sel_loss = net, cfg.epochs, history[-1].train_mse
    meta = CheckpointMeta(seed=cfg.seed, epochs_trained=sel_epoch, final_train_mse=sel_loss)
    return Checkpoint(final_net, normalizer, meta), history


def write_history(history, path) -> None:
    """Write the per-epoch record as CSV: epoch, lr, train_mse, val_mse."""
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "lr", "train_mse", "val_mse"))
        for row in history:
            writer.writerow((
                row.epoch,
                format(row.lr, ".17g"),
                format(row.train_mse, ".17g"),
                "" if row.val_mse is None else format(row.val_mse, ".17g"),
            ))

"""Losses, Adam, learning-rate schedules, the training loop, evaluation.

The loop is deliberately plain: full-precision minibatch SGD with Adam,
seed-derived shuffling per epoch, and three schedule variants. Everything is
deterministic given (config, seed); metrics serialize to JSON lines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import Rng
from .net import backward_bptt, deep_forward

__all__ = [
    "Constant",
    "ReduceOnPlateau",
    "StepDecay",
    "TrainConfig",
    "AdamState",
    "init_adam",
    "adam_step",
    "mse_loss",
    "cross_entropy_loss",
    "evaluate",
    "Metrics",
    "write_metrics_jsonl",
    "TrainingDiverged",
    "train",
]


class TrainingDiverged(RuntimeError):
    """Loss or gradients became non-finite; carries the last good epoch."""

    def __init__(self, message: str, last_good_epoch: int):
        super().__init__(message)
        self.last_good_epoch = last_good_epoch


# ---------------------------------------------------------------------------
# Schedules


@dataclass(frozen=True)
class Constant:
    def validate(self):
        pass


@dataclass(frozen=True)
class ReduceOnPlateau:
    """Multiply lr by `factor` after `patience` epochs without improvement.

    Improvement means the validation loss beats the best seen so far by at
    least `threshold` (absolute).
    """

    factor: float = 0.5
    patience: int = 3
    threshold: float = 1e-6

    def validate(self):
        if not 0.0 < self.factor < 1.0:
            raise ValueError("plateau factor must be in (0, 1)")
        if self.patience < 1:
            raise ValueError("plateau patience must be >= 1")


@dataclass(frozen=True)
class StepDecay:
    factor: float = 0.5
    every_n: int = 10

    def validate(self):
        if not 0.0 < self.factor < 1.0:
            raise ValueError("step factor must be in (0, 1)")
        if self.every_n < 1:
            raise ValueError("step period must be >= 1")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 10
    max_iterations: int | None = None
    seed: int = 0
    schedule: object = field(default_factory=Constant)
    loss: str = "mse"
    min_lr: float = 1e-6
    gradient_clip: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")
        if self.loss not in ("mse", "cross_entropy"):
            raise ValueError("loss must be 'mse' or 'cross_entropy'")
        if self.gradient_clip is not None and self.gradient_clip <= 0:
            raise ValueError("gradient_clip must be positive when set")
        self.schedule.validate()


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: dict[str, np.ndarray], beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> None:
    """One in-place Adam update with bias correction."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name in sorted(params):
        p = params[name]
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name}: {g.shape} vs {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in tensor {name}", -1)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ---------------------------------------------------------------------------
# Losses and evaluation


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean over all output elements. Returns (loss, d loss / d pred)."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray):
    """Softmax cross entropy, mean over rows. Labels: int classes or one-hot."""
    labels = np.asarray(labels)
    rows = logits.reshape(-1, logits.shape[-1])
    if labels.ndim == logits.ndim and labels.shape == logits.shape:
        idx = np.argmax(labels.reshape(-1, logits.shape[-1]), axis=1)
    else:
        idx = labels.reshape(-1).astype(np.int64)
    n, c = rows.shape
    if np.any(idx < 0) or np.any(idx >= c):
        raise ValueError("label out of range")
    shifted = rows - rows.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(logz - shifted[np.arange(n), idx]))
    soft = np.exp(shifted)
    soft /= soft.sum(axis=1, keepdims=True)
    soft[np.arange(n), idx] -= 1.0
    return loss, (soft / n).reshape(logits.shape)


_LOSSES = {"mse": mse_loss, "cross_entropy": cross_entropy_loss}

_EVAL_CHUNK = 1024


def _forward_chunked(model, inputs: np.ndarray) -> np.ndarray:
    outs = []
    for lo in range(0, inputs.shape[0], _EVAL_CHUNK):
        out, _ = deep_forward(model, inputs[lo:lo + _EVAL_CHUNK])
        outs.append(out)
    return np.concatenate(outs, axis=0)


def evaluate(model, batch, metric: str = "mse") -> float:
    """Mean squared error or argmax accuracy of the model on a batch."""
    inputs = np.asarray(batch.inputs, dtype=np.float64)
    targets = np.asarray(batch.targets)
    if inputs.shape[0] < 1:
        raise ValueError("empty batch")
    pred = _forward_chunked(model, inputs)
    if metric == "mse":
        return float(np.mean((pred - targets.astype(np.float64)) ** 2))
    if metric == "accuracy":
        chosen = np.argmax(pred.reshape(pred.shape[0], -1), axis=1)
        if targets.ndim == pred.ndim and targets.shape == pred.shape and targets.shape[-1] > 1:
            truth = np.argmax(targets.reshape(targets.shape[0], -1), axis=1)
        else:
            truth = targets.reshape(-1).astype(np.int64)
        return float(np.mean(chosen == truth))
    raise ValueError(f"unknown metric {metric!r}")


# ---------------------------------------------------------------------------
# Metrics records


@dataclass
class Metrics:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    extra: dict = field(default_factory=dict)

    def to_json_line(self) -> str:
        rec = {"epoch": self.epoch, "train_loss": self.train_loss,
               "val_loss": self.val_loss, "lr": self.lr, "extra": self.extra}
        return json.dumps(rec)


def write_metrics_jsonl(metrics, path) -> None:
    with open(path, "w") as fh:
        for m in metrics:
            fh.write(m.to_json_line() + "\n")


# ---------------------------------------------------------------------------
# Training loop


def _loss_on(model, loss_fn, inputs, targets) -> float:
    pred = _forward_chunked(model, inputs)
    loss, _ = loss_fn(pred, targets)
    return loss


def _clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = 0.0
    for name in sorted(grads):
        g = grads[name]
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale


def _wh_distance(model, truth) -> float:
    target = truth.dense() if hasattr(truth, "dense") else np.asarray(truth, dtype=np.float64)
    return float(np.linalg.norm(model.cells[0].wh.dense() - target))


def train(model, splits: dict, config: TrainConfig, callbacks=None, truth=None):
    """Minibatch training. Returns (model, list of Metrics).

    ``splits``: dict with a non-empty "train" batch and optional "val"
    (plateau scheduling falls back to the train loss without one). Each batch
    needs ``.inputs`` (N, T, d_in) and ``.targets``. ``callbacks``: iterable
    of ``fn(model, metrics) -> bool``; any truthy return stops training after
    that epoch. ``truth``: optional ground-truth recurrent matrix; when given,
    each Metrics.extra carries "wh_dist" (Frobenius distance, layer 0).
    """
    train_batch = splits.get("train")
    if train_batch is None or np.asarray(train_batch.inputs).shape[0] < 1:
        raise ValueError("train split is required and must be non-empty")
    val_batch = splits.get("val")
    callbacks = list(callbacks or [])
    loss_fn = _LOSSES[config.loss]

    x_train = np.asarray(train_batch.inputs, dtype=np.float64)
    y_train = np.asarray(train_batch.targets, dtype=np.float64)
    n = x_train.shape[0]

    params = model.params()
    state = init_adam(params)
    lr = config.learning_rate
    history: list[Metrics] = []
    best_val = np.inf
    bad_epochs = 0
    iteration = 0
    stop = False

    for epoch in range(1, config.max_epochs + 1):
        perm = Rng(config.seed).substream("shuffle", epoch).permutation(n)
        loss_sum = 0.0
        seen = 0
        for lo in range(0, n, config.batch_size):
            idx = perm[lo:lo + config.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            out, cache = deep_forward(model, xb)
            loss, dout = loss_fn(out, yb)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"loss diverged at epoch {epoch}; last good epoch {epoch - 1}",
                    epoch - 1,
                )
            grads = backward_bptt(model, cache, dout)
            if config.gradient_clip is not None:
                _clip_grads(grads, config.gradient_clip)
            try:
                adam_step(params, grads, state, lr)
            except TrainingDiverged as exc:
                raise TrainingDiverged(
                    f"{exc} at epoch {epoch}; last good epoch {epoch - 1}",
                    epoch - 1,
                ) from None
            loss_sum += loss * len(idx)
            seen += len(idx)
            iteration += 1
            if config.max_iterations is not None and iteration >= config.max_iterations:
                stop = True
                break

        train_loss = loss_sum / seen
        if val_batch is not None:
            val_loss = _loss_on(model, loss_fn, np.asarray(val_batch.inputs, dtype=np.float64),
                                np.asarray(val_batch.targets, dtype=np.float64))
        else:
            val_loss = train_loss
        if not np.isfinite(val_loss):
            raise TrainingDiverged(
                f"validation loss diverged at epoch {epoch}; last good epoch {epoch - 1}",
                epoch - 1,
            )

        extra = {}
        if truth is not None:
            extra["wh_dist"] = _wh_distance(model, truth)
        record = Metrics(epoch=epoch, train_loss=train_loss, val_loss=val_loss,
                         lr=lr, extra=extra)
        history.append(record)

        for cb in callbacks:
            if cb(model, record):
                stop = True
        if stop:
            break

        # schedule update happens after the epoch's record is written
        sched = config.schedule
        if isinstance(sched, ReduceOnPlateau):
            if val_loss < best_val - sched.threshold:
                best_val = val_loss
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= sched.patience:
                    bad_epochs = 0
                    new_lr = lr * sched.factor
                    if new_lr < config.min_lr:
                        break
                    lr = new_lr
        elif isinstance(sched, StepDecay):
            if epoch % sched.every_n == 0:
                new_lr = lr * sched.factor
                if new_lr < config.min_lr:
                    break
                lr = new_lr

    return model, history

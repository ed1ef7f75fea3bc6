"""Optimization loop: Adam over BPTT gradients, early stopping, evaluation.

Training unrolls the network for all T timesteps under one tape per
minibatch (no truncation; T is small) and applies the configured loss to
the output firing rates. Poisson encodings are resampled fresh every epoch
as implicit augmentation; validation and test encodings use fixed streams
so metrics are reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import Tape, Tensor, backward, cross_entropy_loss, mse_loss
from .encoding import poisson_encode_batch, repeat_encode_batch
from .network import run_network
from .util import fmt6, subrng

LOSS_KINDS = ("mse", "cross-entropy")
ENCODINGS = ("poisson", "repeat")

# minimum drop in monitored loss that counts as an improvement
MIN_IMPROVEMENT = 1e-6


class TrainingDivergedError(RuntimeError):
    """Loss or gradients stopped being finite."""


@dataclass
class TrainConfig:
    loss: str = "mse"  # applied to output firing rates
    lr: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 30
    patience: int = 5
    val_fraction: float = 0.1
    seed: int = 0
    encoding: str = "poisson"

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.encoding not in ENCODINGS:
            raise ValueError(f"encoding must be one of {ENCODINGS}, got {self.encoding!r}")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.patience < 0:
            raise ValueError(f"patience must be >= 0, got {self.patience}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(
            m=[np.zeros_like(p.values) for p in params],
            v=[np.zeros_like(p.values) for p in params],
            beta1=beta1, beta2=beta2, eps=eps,
        )


def adam_step(params, state, lr):
    """Standard Adam update with bias correction; mutates params in place."""
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad if p.grad is not None else np.zeros_like(p.values)
        if not np.isfinite(g).all():
            raise TrainingDivergedError(
                f"non-finite gradient at adam step {state.step} "
                f"(param shape {tuple(p.values.shape)})"
            )
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.values = p.values - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def target_for(label, classes, loss_kind):
    """MSE targets are one-hot rate vectors; cross-entropy keeps the index."""
    if loss_kind == "cross-entropy":
        return label
    one_hot = np.zeros(classes, dtype=np.float64)
    one_hot[int(label)] = 1.0
    return one_hot


def _targets_matrix(labels, classes):
    out = np.zeros((len(labels), classes), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


class EarlyStopper:
    """Strict-improvement tracker: stop after patience+1 non-improving epochs."""

    def __init__(self, patience):
        self.patience = patience
        self.best = np.inf
        self.bad_epochs = 0

    def update(self, loss) -> bool:
        if loss < self.best - MIN_IMPROVEMENT:
            self.best = loss
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self):
        return self.bad_epochs >= self.patience + 1


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


def _encode(images, encoding, t_steps, rng):
    if encoding == "poisson":
        return poisson_encode_batch(images, t_steps, rng)
    return repeat_encode_batch(images, t_steps)


def _encode_eval(images, encoding, t_steps, seed, indices):
    """Fixed per-sample streams: evaluation frames do not depend on batching."""
    if encoding == "repeat":
        return repeat_encode_batch(images, t_steps)
    frames = np.empty((t_steps,) + images.shape, dtype=np.float64)
    for pos, idx in enumerate(indices):
        frames[:, pos] = poisson_encode_batch(
            images[pos : pos + 1], t_steps, subrng(seed, "enc-eval", int(idx))
        )[:, 0]
    return frames


def _loss_tensor(rates, labels, loss_kind):
    if loss_kind == "mse":
        return mse_loss(rates, Tensor(_targets_matrix(labels, rates.shape[1])))
    return cross_entropy_loss(rates, labels)


def _loss_value(rates, labels, loss_kind):
    if loss_kind == "mse":
        diff = rates - _targets_matrix(labels, rates.shape[1])
        return float(np.mean(diff * diff))
    z = rates - rates.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(labels)), labels].mean())


@dataclass
class EvalResult:
    accuracy: float
    total_spikes: int
    silent_fraction: float
    loss: Optional[float] = None


def _run_split(net, images, labels, indices, encoding, seed, loss_kind, batch_size=256):
    correct = 0
    silent = 0
    spikes = 0.0
    loss_sum = 0.0
    for start in range(0, len(images), batch_size):
        stop = min(start + batch_size, len(images))
        frames = _encode_eval(
            images[start:stop], encoding, net.t_steps, seed, indices[start:stop]
        )
        rates, _, batch_spikes = run_network(net, frames)
        rv = rates.values
        preds = rv.argmax(axis=1)  # ties resolve to the lowest class index
        correct += int((preds == labels[start:stop]).sum())
        silent += int((rv.sum(axis=1) == 0.0).sum())
        spikes += batch_spikes
        loss_sum += _loss_value(rv, labels[start:stop], loss_kind) * (stop - start)
    n = len(images)
    return EvalResult(
        accuracy=correct / n,
        total_spikes=int(round(spikes)),
        silent_fraction=silent / n,
        loss=loss_sum / n,
    )


def evaluate(net, dataset, encoding="poisson", seed=0, loss_kind="mse", batch_size=256):
    """Argmax-of-rates accuracy plus the total spike count over the set."""
    if len(dataset) == 0:
        raise ValueError("evaluate: empty dataset")
    return _run_split(
        net, dataset.images, dataset.labels, np.arange(len(dataset)),
        encoding, seed, loss_kind, batch_size,
    )


def fit(net, dataset, cfg: TrainConfig):
    """Train with BPTT; restore the weights of the best validation epoch.

    Returns (net, history). The monitored loss is validation loss when a
    validation split exists, else the epoch's training loss.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("fit: empty dataset")
    order = subrng(cfg.seed, "split").permutation(n)
    n_val = int(round(cfg.val_fraction * n))
    val_idx = order[:n_val]
    train_idx = order[n_val:]
    if len(train_idx) == 0:
        raise ValueError("fit: validation split leaves no training data")

    params = net.parameters()
    adam = AdamState.for_params(params)
    stopper = EarlyStopper(cfg.patience)
    best_weights = net.get_weights()
    history = []

    for epoch in range(1, cfg.max_epochs + 1):
        perm = train_idx[subrng(cfg.seed, "shuffle", epoch).permutation(len(train_idx))]
        loss_sum = 0.0
        for start in range(0, len(perm), cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            frames = _encode(
                dataset.images[batch], cfg.encoding, net.t_steps,
                subrng(cfg.seed, "enc-train", epoch, start),
            )
            with Tape() as tape:
                rates, _, _ = run_network(net, frames)
                loss = _loss_tensor(rates, dataset.labels[batch], cfg.loss)
                lv = loss.item()
                if not np.isfinite(lv):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, batch starting {start}"
                    )
                backward(tape, loss)
            adam_step(params, adam, cfg.lr)
            net.zero_grad()
            loss_sum += lv * len(batch)
        train_loss = loss_sum / len(perm)

        if n_val:
            val = _run_split(
                net, dataset.images[val_idx], dataset.labels[val_idx], val_idx,
                cfg.encoding, cfg.seed, cfg.loss,
            )
            val_loss, val_acc = val.loss, val.accuracy
        else:
            val_loss, val_acc = train_loss, float("nan")

        history.append(EpochStats(epoch, train_loss, val_loss, val_acc))
        if stopper.update(val_loss):
            best_weights = net.get_weights()
        if stopper.should_stop:
            break

    net.set_weights(best_weights)
    return net, history


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
        for row in history:
            writer.writerow([row.epoch, fmt6(row.train_loss), fmt6(row.val_loss), fmt6(row.val_acc)])

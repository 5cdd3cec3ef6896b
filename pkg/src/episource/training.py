# Training loop for the source-scoring GCN: Adam, plateau learning-rate
# decay, per-epoch validation and best-checkpoint selection. Snapshots on
# the same graph are stacked into (batch, node, channel) tensors; a batch
# mixing several graphs is processed as same-graph groups, which is the
# block-diagonal batching semantics.
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .datasets import Dataset
from .dynamics import Snapshot
from .gnn import GnnModel, backward, forward, loss_and_grad, one_hot_states

__all__ = ["TrainConfig", "EpochLog", "Adam", "train", "evaluate_split", "write_training_log"]


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; defaults are the full-scale settings."""

    epochs: int = 150
    batch_size: int = 128
    hidden: int = 128
    dropout: float = 0.265
    layers: int = 10
    initial_lr: float = 0.0033
    plateau_factor: float = 0.5
    patience: int = 10
    rule_kind: str = "symmetric"
    slope: float = 0.01
    dtype: str = "float32"  # training precision; checkpoints always store float64
    selection: str = "best_val"  # or "final": skip best-validation rollback
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("epochs", "batch_size", "hidden", "layers", "patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.initial_lr <= 0 or self.plateau_factor <= 0:
            raise ValueError("initial_lr and plateau_factor must be positive")


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_top1: float


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            m = self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            params[name] -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def _grouped_batches(samples: list[Snapshot], batch_size: int,
                     order: np.ndarray) -> list[list[int]]:
    """Batch sample indices so each batch shares one graph id."""
    batches: list[list[int]] = []
    current: list[int] = []
    current_gid: str | None = None
    for idx in order:
        snap = samples[int(idx)]
        if current and (len(current) >= batch_size or snap.graph_id != current_gid):
            batches.append(current)
            current = []
        current_gid = snap.graph_id
        current.append(int(idx))
    if current:
        batches.append(current)
    return batches


def _stack_batch(samples: list[Snapshot], idxs: list[int], model_kind: str):
    states = np.stack([samples[i].states for i in idxs])
    x = one_hot_states(states, model_kind)
    targets = np.array([samples[i].source for i in idxs])
    return x, targets


def evaluate_split(model: GnnModel, ds: Dataset, split: str,
                   batch_size: int = 256) -> tuple[float, float]:
    """(mean loss, top-1 accuracy) of a split under eval-mode forwards."""
    samples = ds.subset(split)
    if not samples:
        raise ValueError(f"split {split!r} is empty")
    order = np.arange(len(samples))
    total_loss = 0.0
    hits = 0
    for idxs in _grouped_batches(samples, batch_size, order):
        g = ds.graphs[samples[idxs[0]].graph_id]
        x, targets = _stack_batch(samples, idxs, ds.params.model)
        logits = forward(model, g, x, mode="eval")
        loss, _ = loss_and_grad(logits, targets)
        total_loss += loss * len(idxs)
        pred = logits.argmax(axis=1)  # first maximum = lowest-id tie-break
        hits += int((pred == targets).sum())
    return total_loss / len(samples), hits / len(samples)


def train(
    ds: Dataset,
    config: TrainConfig,
    seed: int,
) -> tuple[GnnModel, list[EpochLog]]:
    """Train on the dataset's train split, validating each epoch.

    The learning rate is multiplied by ``plateau_factor`` whenever the
    validation loss has not improved for ``patience`` consecutive epochs.
    Returns the parameters of the best-validation epoch and the full log.
    All randomness (init, shuffling, dropout) derives from ``seed``, so a
    rerun reproduces the checkpoint bit for bit.
    """
    train_samples = ds.subset("train")
    if not train_samples:
        raise ValueError("train split is empty")
    if not ds.splits.get("val"):
        raise ValueError("val split is empty")
    in_channels = ds.params.n_channels
    model = GnnModel.initialize(
        n_layers=config.layers, channels=config.hidden, in_channels=in_channels,
        seed=seed, rule_kind=config.rule_kind, dropout=config.dropout,
        slope=config.slope, dtype=config.dtype,
    )
    opt = Adam(model.params, lr=config.initial_lr, beta1=config.adam_beta1,
               beta2=config.adam_beta2, eps=config.adam_eps)
    shuffle_rng = np.random.default_rng(seed + 1)
    dropout_rng = np.random.default_rng(seed + 2)

    logs: list[EpochLog] = []
    best_val = np.inf
    best_state: dict | None = None
    stale = 0
    lr = config.initial_lr

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_samples))
        epoch_loss = 0.0
        for idxs in _grouped_batches(train_samples, config.batch_size, order):
            g = ds.graphs[train_samples[idxs[0]].graph_id]
            x, targets = _stack_batch(train_samples, idxs, ds.params.model)
            logits, cache = forward(model, g, x, mode="train", rng=dropout_rng,
                                    want_cache=True)
            loss, dlogits = loss_and_grad(logits, targets)
            grads = backward(model, g, cache, dlogits)
            opt.lr = lr
            opt.step(model.params, grads)
            epoch_loss += loss * len(idxs)
        train_loss = epoch_loss / len(train_samples)
        val_loss, val_top1 = evaluate_split(model, ds, "val")
        logs.append(EpochLog(epoch=epoch, lr=lr, train_loss=train_loss,
                             val_loss=val_loss, val_top1=val_top1))

        if val_loss < best_val:
            best_val = val_loss
            stale = 0
            best_state = {
                "params": {k: v.copy() for k, v in model.params.items()},
                "bn_mean": [m.copy() for m in model.bn_mean],
                "bn_var": [v.copy() for v in model.bn_var],
            }
        else:
            stale += 1
            if stale >= config.patience:
                lr *= config.plateau_factor
                stale = 0

    if config.selection == "best_val" and best_state is not None:
        model.params = best_state["params"]
        model.bn_mean = best_state["bn_mean"]
        model.bn_var = best_state["bn_var"]
    return model, logs


def write_training_log(logs: list[EpochLog], path: str | Path,
                       config_hash: str = "", seed: int = 0) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config={config_hash} seed={seed}\n")
        writer = csv.DictWriter(fh, fieldnames=["epoch", "lr", "train_loss",
                                                "val_loss", "val_top1"])
        writer.writeheader()
        for row in logs:
            writer.writerow(asdict(row))

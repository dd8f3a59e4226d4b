"""Minibatch SGD with momentum on cross-entropy plus the SCEF penalties."""
from __future__ import annotations

import contextlib
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .checkpoint import save_checkpoint
from .data import Dataset, train_val_split
from .errors import DimensionError, NumericError, ParameterError
from .network import Network
from .objective import RegWeights, regularizers, softmax_cross_entropy

log = logging.getLogger(__name__)

METRIC_FIELDS = ("epoch", "task_loss", "phi1", "phi2", "total", "train_acc", "val_acc")


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    reg: RegWeights = field(default_factory=RegWeights)
    val_fraction: float = 0.2
    checkpoint_every: int = 1
    serial: bool = True

    def __post_init__(self):
        if isinstance(self.reg, dict):
            self.reg = RegWeights(**self.reg)
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise ParameterError("learning_rate must be >= 0 and momentum in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.checkpoint_every < 1:
            raise ParameterError("batch_size, checkpoint_every must be >= 1 and epochs >= 0")


@dataclass
class TrainResult:
    net: Network
    metrics: list
    checkpoints: list


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_FIELDS)
        for row in rows:
            writer.writerow([row["epoch"]] + [repr(float(row[k])) for k in METRIC_FIELDS[1:]])


def evaluate(net: Network, data: Dataset) -> float:
    if len(data) == 0:
        return float("nan")
    return float(np.mean(net.predict(data.images) == data.labels))


def train(net: Network, cfg: TrainConfig, dataset: Dataset, out_dir=None,
          val: Dataset | None = None) -> TrainResult:
    """Train ``net`` in place.

    If ``val`` is not given, ``cfg.val_fraction`` of ``dataset`` is held
    out.  With ``out_dir`` set, checkpoints ``ckpt_epoch{NNNN}.zip`` are
    written every ``cfg.checkpoint_every`` epochs (plus epoch 0, before any
    update) along with ``metrics.csv``.  ``cfg.serial`` pins BLAS to one
    thread so repeated runs are bit-identical.
    """
    if len(dataset) == 0:
        raise DimensionError("training dataset is empty")
    if dataset.images.shape[1:] != net.config.input_shape:
        raise DimensionError(f"dataset images {dataset.images.shape[1:]} != network input {net.config.input_shape}")
    if val is None:
        train_set, val = train_val_split(dataset, cfg.val_fraction, cfg.seed)
    else:
        train_set = dataset
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    limiter = threadpool_limits(limits=1) if cfg.serial else contextlib.nullcontext()
    with limiter:
        return _run(net, cfg, train_set, val, out)


def _run(net: Network, cfg: TrainConfig, train_set: Dataset, val: Dataset, out: Path | None) -> TrainResult:
    rng = np.random.default_rng(cfg.seed)
    names = net.trainable_names()
    velocity = {n: np.zeros_like(net.params[n]) for n in names}
    scef_idx = [i for i, _ in net.scef_layers()]
    metrics, ckpts = [], []

    def checkpoint(epoch, row):
        if out is not None:
            p = save_checkpoint(out / f"ckpt_epoch{epoch:04d}.zip", net, epoch, row or {}, cfg.seed)
            ckpts.append(p)

    checkpoint(0, None)
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        sums = np.zeros(3)
        correct = 0
        n_batches = 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start:start + cfg.batch_size]
            logits, caches = net.forward(train_set.images[idx], keep_cache=True)
            task, dlogits = softmax_cross_entropy(logits, train_set.labels[idx])
            grads = net.backward(dlogits, caches)
            p1, p2, reg_grads = regularizers([net.scef_params(i) for i in scef_idx], cfg.reg)
            for i, (g1, g2) in zip(scef_idx, reg_grads):
                grads[f"layer{i}.eigen_filters"] = grads[f"layer{i}.eigen_filters"] + g1
                grads[f"layer{i}.coefficients"] = grads[f"layer{i}.coefficients"] + g2
            if not np.isfinite(task + p1 + p2):
                raise NumericError(f"loss is not finite at epoch {epoch}, batch {b}")
            for name in names:
                g = grads[name]
                if not np.all(np.isfinite(g)):
                    raise NumericError(f"gradient of {name} is not finite at epoch {epoch}, batch {b}")
                v = velocity[name]
                v *= cfg.momentum
                v += g
                net.params[name] -= cfg.learning_rate * v
            sums += (task, p1, p2)
            correct += int(np.sum(np.argmax(logits, axis=1) == train_set.labels[idx]))
            n_batches += 1
        task_m, p1_m, p2_m = sums / n_batches
        row = {
            "epoch": epoch,
            "task_loss": task_m,
            "phi1": p1_m,
            "phi2": p2_m,
            "total": task_m + p1_m + p2_m,
            "train_acc": correct / n,
            "val_acc": evaluate(net, val),
        }
        metrics.append(row)
        log.info("epoch %d: loss %.4f (phi1 %.2e, phi2 %.2e) train %.3f val %.3f",
                 epoch, row["total"], p1_m, p2_m, row["train_acc"], row["val_acc"])
        if epoch % cfg.checkpoint_every == 0 or epoch == cfg.epochs:
            checkpoint(epoch, row)
    if out is not None:
        write_metrics_csv(out / "metrics.csv", metrics)
    return TrainResult(net, metrics, ckpts)

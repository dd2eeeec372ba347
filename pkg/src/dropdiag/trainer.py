"""Mini-batch training of the dropout classifier.

Optimization is adaptive moment estimation with the usual defaults; the
paired data set must already be standardized (see dropdiag.data).  A run is
fully determined by (config.init_seed, train_config.shuffle_seed, data).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from dropdiag.data import LabeledDataset
from dropdiag.mathops import one_hot
from dropdiag.network import (
    NetworkConfig,
    NetworkParams,
    forward_batch,
    init_params,
    loss_and_gradients,
    sample_mask_block,
)
from dropdiag.rng import RngStream


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the epoch at which it happened."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


@dataclass
class TrainTrace:
    """Per-epoch mean training loss and accuracy (from the stochastic passes)."""

    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "accuracy"])
            for i, (loss, acc) in enumerate(zip(self.losses, self.accuracies)):
                writer.writerow([i, repr(loss), repr(acc)])


@dataclass
class EvalResult:
    accuracy: float
    mean_loss: float
    confusion: np.ndarray  # rows indexed by true label


def train(
    net_config: NetworkConfig, train_config: TrainConfig, data: LabeledDataset
) -> tuple[NetworkParams, TrainTrace]:
    """Train a fresh network on ``data``; returns final params and the trace.

    Raises TrainingDivergedError if any batch loss turns non-finite.
    """
    n = data.num_samples
    if data.labels.max() >= net_config.num_classes:
        raise ValueError("dataset labels exceed num_classes")
    X = data.features
    Y = one_hot(data.labels, net_config.num_classes)

    params = init_params(net_config)
    m = [np.zeros_like(w) for w in params.weights] + [np.zeros_like(b) for b in params.biases]
    v = [np.zeros_like(w) for w in params.weights] + [np.zeros_like(b) for b in params.biases]

    rng = RngStream(train_config.shuffle_seed)
    use_dropout = net_config.dropout_rate > 0.0
    trace = TrainTrace()
    step = 0
    tc = train_config

    for epoch in range(tc.epochs):
        order = rng.substream("shuffle", epoch).permutation(n)
        loss_sum = 0.0
        correct = 0
        for b, start in enumerate(range(0, n, tc.batch_size)):
            idx = order[start : start + tc.batch_size]
            Xb, Yb = X[idx], Y[idx]
            masks = (
                sample_mask_block(net_config, len(idx), rng.substream("dropout", epoch, b))
                if use_dropout
                else None
            )
            loss, probs, grads = loss_and_gradients(params, Xb, Yb, masks)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            loss_sum += loss * len(idx)
            correct += int(np.sum(np.argmax(probs, axis=1) == data.labels[idx]))

            step += 1
            tensors = params.weights + params.biases
            grad_list = grads.weights + grads.biases
            lr_t = tc.learning_rate * np.sqrt(1.0 - tc.beta2**step) / (1.0 - tc.beta1**step)
            for k, (tensor, g) in enumerate(zip(tensors, grad_list)):
                m[k] = tc.beta1 * m[k] + (1.0 - tc.beta1) * g
                v[k] = tc.beta2 * v[k] + (1.0 - tc.beta2) * g * g
                tensor -= lr_t * m[k] / (np.sqrt(v[k]) + tc.eps)

        trace.losses.append(loss_sum / n)
        trace.accuracies.append(correct / n)

    if not params.all_finite():
        raise TrainingDivergedError(tc.epochs - 1)
    return params, trace


def evaluate(params: NetworkParams, data: LabeledDataset) -> EvalResult:
    """Deterministic-forward accuracy, mean loss, and confusion matrix."""
    C = params.config.num_classes
    probs, _, _ = forward_batch(params, data.features)
    pred = np.argmax(probs, axis=1)
    accuracy = float(np.mean(pred == data.labels))
    picked = probs[np.arange(data.num_samples), data.labels]
    mean_loss = float(-np.mean(np.log(np.clip(picked, 1e-12, 1.0))))
    confusion = np.zeros((C, C), dtype=np.int64)
    np.add.at(confusion, (data.labels, pred), 1)
    return EvalResult(accuracy=accuracy, mean_loss=mean_loss, confusion=confusion)

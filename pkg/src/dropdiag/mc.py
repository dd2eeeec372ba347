"""Monte-Carlo dropout prediction.

Keeps dropout active at test time: T stochastic forward passes with fresh
masks yield T sampled output distributions, summarized by their per-class
mean (the expected output) and population variance (the model's confidence
in its own prediction; larger means less certain).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from dropdiag.network import NetworkParams, forward, forward_batch, sample_mask_block
from dropdiag.rng import RngStream


@dataclass
class PredictiveSummary:
    """Componentwise mean / variance / std over T sampled output vectors."""

    mean: np.ndarray
    variance: np.ndarray
    std: np.ndarray
    T: int
    predicted_class: int

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "variance": self.variance.tolist(),
            "std": self.std.tolist(),
            "T": self.T,
            "predicted_class": self.predicted_class,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def mc_predict(
    params: NetworkParams, x: np.ndarray, T: int = 100, rng: RngStream | None = None
) -> PredictiveSummary:
    """Summarize T dropout-sampled forward passes on one input.

    Variance is the population form (1/T).  With dropout rate 0 there is no
    randomness at all: every pass would repeat the deterministic output, so
    the summary is computed in closed form with exactly zero variance.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    config = params.config
    if config.dropout_rate == 0.0:
        probs, _ = forward(params, x)
        zero = np.zeros_like(probs)
        return PredictiveSummary(
            mean=probs, variance=zero, std=zero.copy(), T=T,
            predicted_class=int(np.argmax(probs)),
        )

    if rng is None:
        rng = RngStream(0)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (config.input_dim,):
        raise ValueError(f"input shape {x.shape} does not match input_dim {config.input_dim}")
    # One mask row per pass; treating the T passes as a batch over copies of x
    # is equivalent to T single passes with those masks.
    masks = sample_mask_block(config, T, rng)
    X = np.broadcast_to(x, (T, config.input_dim))
    probs, _, _ = forward_batch(params, X, masks)
    mean = probs.mean(axis=0)
    variance = probs.var(axis=0)
    return PredictiveSummary(
        mean=mean,
        variance=variance,
        std=np.sqrt(variance),
        T=T,
        predicted_class=int(np.argmax(mean)),
    )


def mc_predict_batch(
    params: NetworkParams,
    X: np.ndarray,
    T: int = 100,
    rng: RngStream | None = None,
    row_keys: Sequence[int] | None = None,
) -> list[PredictiveSummary]:
    """Row-wise mc_predict with per-row keyed substreams.

    Each row draws from ``rng.substream("row", key)`` so results do not
    depend on evaluation order.  Keys default to row position; callers that
    reorder rows can pass the original keys to reproduce the same summaries
    in the new order.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix of row vectors")
    if rng is None:
        rng = RngStream(0)
    n = X.shape[0]
    keys = list(range(n)) if row_keys is None else [int(k) for k in row_keys]
    if len(keys) != n:
        raise ValueError("row_keys must match the number of rows")
    return [
        mc_predict(params, X[i], T, rng.substream("row", keys[i])) for i in range(n)
    ]


@dataclass
class ConditionSummaryRows:
    """Per-condition heatmap rows: each row is a class-indexed vector.

    ``mean_rows[i]`` / ``variance_rows[i]`` average the member summaries'
    means and variances for condition i.  ``pooled_variance_rows`` instead
    treats all members' draws as one pool (average variance plus the spread
    of the member means).
    """

    conditions: list[str]
    mean_rows: np.ndarray
    variance_rows: np.ndarray
    pooled_variance_rows: np.ndarray


def mean_class_summary(
    groups: Mapping[str, Sequence[PredictiveSummary]]
) -> ConditionSummaryRows:
    """Average member summaries per condition group, preserving group order."""
    conditions, mean_rows, var_rows, pooled_rows = [], [], [], []
    for condition, members in groups.items():
        if not members:
            raise ValueError(f"condition {condition!r} has no summaries")
        means = np.stack([s.mean for s in members])
        variances = np.stack([s.variance for s in members])
        conditions.append(condition)
        mean_rows.append(means.mean(axis=0))
        var_rows.append(variances.mean(axis=0))
        pooled_rows.append(variances.mean(axis=0) + means.var(axis=0))
    return ConditionSummaryRows(
        conditions=conditions,
        mean_rows=np.stack(mean_rows),
        variance_rows=np.stack(var_rows),
        pooled_variance_rows=np.stack(pooled_rows),
    )

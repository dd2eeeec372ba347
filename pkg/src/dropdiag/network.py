"""Feedforward classifier with dropout: definition, forward pass, gradients.

The architecture is a chain of fully-connected hidden layers with ReLU
activation, each optionally followed by a dropout mask, and a final
bias-free linear layer feeding a softmax.  Dropout uses the inverted
convention: retained activations are scaled by 1/(1-p) at mask time, so a
pass without masks is the correct deterministic expectation of the masked
ensemble on any linear stretch of the network.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from dropdiag.mathops import softmax_rows
from dropdiag.rng import RngStream

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_layers: tuple[int, ...] = (20, 20, 20, 20)
    num_classes: int = 7
    dropout_rate: float = 0.0
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(w) for w in self.hidden_layers))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not self.hidden_layers or any(w < 1 for w in self.hidden_layers):
            raise ValueError("hidden layer widths must be positive")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must lie in [0, 1)")


@dataclass
class NetworkParams:
    """Per-layer weights and biases.

    ``weights[l]`` has shape (width_l, width_{l-1}); the last entry is the
    output layer, which carries no bias (a constant shift of every logit
    leaves the softmax unchanged).
    """

    config: NetworkConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            config=self.config,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights) and all(
            np.all(np.isfinite(b)) for b in self.biases
        )

    def num_parameters(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


@dataclass
class DropoutMaskSet:
    """One 0/1 keep mask per hidden layer, drawn with the stored keep probability."""

    masks: list[np.ndarray]
    keep_prob: float


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass, as needed by tests and callers
    that inspect pre-softmax behavior."""

    pre_activations: list[np.ndarray]
    hidden: list[np.ndarray]  # post-activation, post-mask
    logits: np.ndarray


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def _layer_shapes(config: NetworkConfig) -> list[tuple[int, int]]:
    widths = (config.input_dim,) + config.hidden_layers + (config.num_classes,)
    return [(widths[i + 1], widths[i]) for i in range(len(widths) - 1)]


def init_params(config: NetworkConfig) -> NetworkParams:
    """Fresh parameters: weights uniform on +-sqrt(6/fan_in), biases zero.

    Deterministic in config.init_seed; each layer draws from its own keyed
    substream so the layout of one layer cannot shift another's values.
    """
    rng = RngStream(config.init_seed)
    weights, biases = [], []
    shapes = _layer_shapes(config)
    for l, (rows, cols) in enumerate(shapes):
        bound = np.sqrt(6.0 / cols)
        weights.append(rng.substream("init", l).uniform(-bound, bound, (rows, cols)))
        if l < len(shapes) - 1:  # output layer is bias-free
            biases.append(np.zeros(rows))
    return NetworkParams(config=config, weights=weights, biases=biases)


def sample_masks(config: NetworkConfig, rng: RngStream) -> DropoutMaskSet:
    """Draw one keep mask per hidden layer; units survive with prob 1 - p."""
    keep = 1.0 - config.dropout_rate
    return DropoutMaskSet(
        masks=[rng.keep_mask(keep, w) for w in config.hidden_layers],
        keep_prob=keep,
    )


def sample_mask_block(config: NetworkConfig, n: int, rng: RngStream) -> list[np.ndarray]:
    """Per-sample masks for a batch of n rows, one (n, width) array per layer.

    Row i's masks are i.i.d. with those of sample_masks; the block form just
    batches the draws.
    """
    keep = 1.0 - config.dropout_rate
    return [rng.keep_mask(keep, (n, w)) for w in config.hidden_layers]


def _check_masks(config: NetworkConfig, masks: DropoutMaskSet) -> None:
    if len(masks.masks) != len(config.hidden_layers):
        raise ValueError("mask count does not match hidden layer count")
    for m, w in zip(masks.masks, config.hidden_layers):
        if m.shape != (w,):
            raise ValueError(f"mask shape {m.shape} does not match layer width {w}")


def forward(
    params: NetworkParams, x: np.ndarray, masks: DropoutMaskSet | None = None
) -> tuple[np.ndarray, ForwardCache]:
    """One forward pass; stochastic when masks are given, deterministic otherwise.

    With masks, each hidden layer computes mask * relu(W h + b) / (1 - p);
    without, the plain ReLU chain.  Returns the softmax output and the cached
    intermediate values.
    """
    config = params.config
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (config.input_dim,):
        raise ValueError(f"input shape {x.shape} does not match input_dim {config.input_dim}")
    if masks is not None:
        _check_masks(config, masks)

    scale = 1.0 / masks.keep_prob if masks is not None else 1.0
    pre, hid = [], []
    h = x
    for l in range(len(config.hidden_layers)):
        z = params.weights[l] @ h + params.biases[l]
        h = np.maximum(z, 0.0)
        if masks is not None:
            h = h * masks.masks[l] * scale
        pre.append(z)
        hid.append(h)
    logits = params.weights[-1] @ h
    probs = softmax_rows(logits[None, :])[0]
    return probs, ForwardCache(pre_activations=pre, hidden=hid, logits=logits)


def forward_batch(
    params: NetworkParams, X: np.ndarray, layer_masks: list[np.ndarray] | None = None
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Row-wise forward over a batch; masks are per-sample (n, width) blocks.

    Returns (probs, pre_activations, hidden) with batch-major arrays.
    """
    config = params.config
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != config.input_dim:
        raise ValueError(f"batch shape {X.shape} does not match input_dim {config.input_dim}")
    scale = 1.0 / (1.0 - config.dropout_rate) if layer_masks is not None else 1.0

    pre, hid = [], []
    H = X
    for l in range(len(config.hidden_layers)):
        Z = H @ params.weights[l].T + params.biases[l]
        H = np.maximum(Z, 0.0)
        if layer_masks is not None:
            H = H * layer_masks[l] * scale
        pre.append(Z)
        hid.append(H)
    logits = H @ params.weights[-1].T
    return softmax_rows(logits), pre, hid


def loss_and_gradients(
    params: NetworkParams,
    X: np.ndarray,
    Y: np.ndarray,
    layer_masks: list[np.ndarray] | None = None,
) -> tuple[float, np.ndarray, Gradients]:
    """Mean cross-entropy over the batch plus its exact parameter gradients.

    Masks, when given, are the per-sample blocks used by the paired forward
    pass; the backward pass routes gradients through the same kept units with
    the same 1/(1-p) scaling.
    """
    config = params.config
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("batch must be nonempty")
    if Y.shape != (n, config.num_classes):
        raise ValueError(f"target shape {Y.shape} does not match ({n}, {config.num_classes})")
    if layer_masks is not None:
        for m, w in zip(layer_masks, config.hidden_layers):
            if m.shape != (n, w):
                raise ValueError(f"mask block shape {m.shape} does not match ({n}, {w})")

    probs, pre, hid = forward_batch(params, X, layer_masks)
    loss = float(-np.mean(np.sum(Y * np.log(np.clip(probs, 1e-12, 1.0)), axis=1)))

    scale = 1.0 / (1.0 - config.dropout_rate) if layer_masks is not None else 1.0
    L = len(config.hidden_layers)
    grad_w: list[np.ndarray | None] = [None] * (L + 1)
    grad_b: list[np.ndarray | None] = [None] * L

    delta = (probs - Y) / n  # d(mean loss)/d(logits)
    grad_w[L] = delta.T @ hid[L - 1]
    dH = delta @ params.weights[L]
    for l in range(L - 1, -1, -1):
        if layer_masks is not None:
            dH = dH * layer_masks[l] * scale
        dZ = dH * (pre[l] > 0.0)
        inputs = hid[l - 1] if l > 0 else X
        grad_w[l] = dZ.T @ inputs
        grad_b[l] = dZ.sum(axis=0)
        if l > 0:
            dH = dZ @ params.weights[l]
    return loss, probs, Gradients(weights=grad_w, biases=grad_b)


def backward(
    params: NetworkParams,
    X: np.ndarray,
    Y: np.ndarray,
    layer_masks: list[np.ndarray] | None = None,
) -> Gradients:
    """Exact mean-batch cross-entropy gradients, honoring the forward masks."""
    _, _, grads = loss_and_gradients(params, X, Y, layer_masks)
    return grads


# --- serialization ---------------------------------------------------------


def model_to_dict(params: NetworkParams, standardization: dict | None = None) -> dict:
    config = params.config
    layers = []
    for l, w in enumerate(params.weights):
        layers.append(
            {
                "weights": w.tolist(),
                "bias": params.biases[l].tolist() if l < len(params.biases) else None,
            }
        )
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "config": {
            "input_dim": config.input_dim,
            "hidden_layers": list(config.hidden_layers),
            "num_classes": config.num_classes,
            "dropout_rate": config.dropout_rate,
            "init_seed": config.init_seed,
        },
        "layers": layers,
        "standardization": standardization,
    }


def model_from_dict(doc: dict) -> tuple[NetworkParams, dict | None]:
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version: {version!r}")
    cfg = doc["config"]
    config = NetworkConfig(
        input_dim=int(cfg["input_dim"]),
        hidden_layers=tuple(int(w) for w in cfg["hidden_layers"]),
        num_classes=int(cfg["num_classes"]),
        dropout_rate=float(cfg["dropout_rate"]),
        init_seed=int(cfg["init_seed"]),
    )
    weights, biases = [], []
    for layer in doc["layers"]:
        weights.append(np.asarray(layer["weights"], dtype=np.float64))
        if layer["bias"] is not None:
            biases.append(np.asarray(layer["bias"], dtype=np.float64))
    params = NetworkParams(config=config, weights=weights, biases=biases)
    expected = _layer_shapes(config)
    actual = [w.shape for w in params.weights]
    if actual != expected:
        raise ValueError(f"layer shapes {actual} do not match config {expected}")
    return params, doc.get("standardization")


def model_to_json(params: NetworkParams, standardization: dict | None = None) -> str:
    # json emits floats via repr, which round-trips float64 exactly.
    return json.dumps(model_to_dict(params, standardization), sort_keys=True, indent=1)


def model_from_json(text: str) -> tuple[NetworkParams, dict | None]:
    return model_from_dict(json.loads(text))


def save_model(path, params: NetworkParams, standardization: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(params, standardization))
        fh.write("\n")


def load_model(path) -> tuple[NetworkParams, dict | None]:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(fh.read())

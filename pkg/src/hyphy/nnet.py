"""Small dense-network engine: forward/backward passes, cross-entropy and Adam.

Everything is plain numpy so that gradients can be checked against finite
differences and training runs are bitwise reproducible for a given seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError

__all__ = [
    "NetworkSpec",
    "NetworkParams",
    "OptimizerState",
    "init_params",
    "forward",
    "forward_cached",
    "backward",
    "softmax",
    "cross_entropy",
    "grad",
    "adam_init",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
]

_HIDDEN = ("relu", "linear")
_OUTPUT = ("softmax", "linear")
PROB_FLOOR = 1e-12
CHECKPOINT_FORMAT = "hyphy-nnet"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple
    hidden_activation: str = "relu"
    output_activation: str = "softmax"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError("need at least an input and an output layer with positive sizes")
        if self.hidden_activation not in _HIDDEN:
            raise ValueError(f"hidden_activation must be one of {_HIDDEN}")
        if self.output_activation not in _OUTPUT:
            raise ValueError(f"output_activation must be one of {_OUTPUT}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }


@dataclass
class NetworkParams:
    """Weights stored as (fan_in, fan_out) so that a layer computes ``x @ W + b``."""

    spec: NetworkSpec
    weights: list
    biases: list

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> list:
        return [*self.weights, *self.biases]

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(self.spec, [np.zeros_like(w) for w in self.weights],
                             [np.zeros_like(b) for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray) -> "NetworkParams":
        out = self.copy()
        pos = 0
        for a in out.arrays():
            a[...] = vec[pos:pos + a.size].reshape(a.shape)
            pos += a.size
        return out

    def scaled_add(self, other: "NetworkParams", c: float) -> "NetworkParams":
        """Return ``self + c * other``."""
        return NetworkParams(
            self.spec,
            [w + c * o for w, o in zip(self.weights, other.weights)],
            [b + c * o for b, o in zip(self.biases, other.biases)],
        )


@dataclass
class OptimizerState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> NetworkParams:
    """He-style uniform fan-in initialization; biases start at zero."""
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(spec, weights, biases)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.spec.layer_sizes[0]:
        raise DimensionError(f"input width {x.shape[-1]} != {params.spec.layer_sizes[0]}")
    return x


def forward_cached(params: NetworkParams, x: np.ndarray):
    """Pre-output-activation values plus the per-layer inputs needed by ``backward``."""
    a = _check_input(params, x)
    cache = []
    last = params.spec.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        cache.append((a, z))
        if i < last:
            a = np.maximum(z, 0.0) if params.spec.hidden_activation == "relu" else z
        else:
            a = z
    return a, cache


def forward(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Network output; probabilities when the output activation is softmax."""
    z, _ = forward_cached(params, x)
    return softmax(z) if params.spec.output_activation == "softmax" else z


def backward(params: NetworkParams, cache, grad_z: np.ndarray):
    """Back-propagate ``dLoss/d(last pre-activation)``.

    Returns the parameter gradients and the gradient with respect to the input.
    """
    gw = [None] * params.spec.n_layers
    gb = [None] * params.spec.n_layers
    g = grad_z
    for i in range(params.spec.n_layers - 1, -1, -1):
        a_in, z = cache[i]
        if i < params.spec.n_layers - 1 and params.spec.hidden_activation == "relu":
            g = g * (z > 0)
        gw[i] = a_in.T @ g
        gb[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    return NetworkParams(params.spec, gw, gb), g


def cross_entropy(logits: np.ndarray, labels: np.ndarray, weights: np.ndarray | None = None):
    """Weighted-mean softmax cross-entropy and its gradient with respect to the logits.

    ``weights`` default to ``1/n``; probabilities are floored at 1e-12.
    """
    labels = np.asarray(labels, dtype=int)
    n = logits.shape[0]
    if weights is None:
        weights = np.full(n, 1.0 / n)
    p = softmax(logits)
    picked = np.maximum(p[np.arange(n), labels], PROB_FLOOR)
    loss = float(-np.sum(weights * np.log(picked)))
    dz = p.copy()
    dz[np.arange(n), labels] -= 1.0
    return loss, dz * weights[:, None]


def grad(params: NetworkParams, x: np.ndarray, labels: np.ndarray, loss_kind: str = "ce",
         weights: np.ndarray | None = None):
    """Loss and parameter gradients for a batch.

    ``loss_kind`` is ``"ce"`` (softmax cross-entropy, integer labels) or
    ``"mse"`` (half mean squared error against real targets, linear output).
    """
    if len(x) == 0:
        raise ValueError("empty batch")
    z, cache = forward_cached(params, x)
    if loss_kind == "ce":
        loss, dz = cross_entropy(z, labels, weights)
    elif loss_kind == "mse":
        t = np.asarray(labels, dtype=float).reshape(z.shape)
        n = z.shape[0]
        w = np.full(n, 1.0 / n) if weights is None else weights
        r = z - t
        loss = float(0.5 * np.sum(w[:, None] * r * r))
        dz = w[:, None] * r
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    g, _ = backward(params, cache, dz)
    return loss, g


def adam_init(params: NetworkParams, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> OptimizerState:
    return OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
                          m=[np.zeros_like(a) for a in params.arrays()],
                          v=[np.zeros_like(a) for a in params.arrays()])


def adam_step(state: OptimizerState, params: NetworkParams, grads: NetworkParams):
    """Bias-corrected Adam update. Returns new (params, state); inputs are untouched."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_arrays = [], [], []
    c1 = 1 - b1**t
    c2 = 1 - b2**t
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        new_arrays.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    k = params.spec.n_layers
    out = NetworkParams(params.spec, new_arrays[:k], new_arrays[k:])
    new_state = OptimizerState(state.lr, b1, b2, state.eps, t, new_m, new_v)
    return out, new_state


def save_checkpoint(path, params: NetworkParams, extra: dict | None = None) -> None:
    """Write parameters to ``.npz`` with a JSON header recording format, version and spec."""
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "spec": params.spec.to_dict()}
    if extra:
        header["extra"] = extra
    arrays = {f"W{i}": w for i, w in enumerate(params.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(params.biases)})
    with open(Path(path), "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_checkpoint(path) -> NetworkParams:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
            raise ValueError("unrecognized checkpoint header")
        spec = NetworkSpec(tuple(header["spec"]["layer_sizes"]), header["spec"]["hidden_activation"],
                           header["spec"]["output_activation"])
        weights = [data[f"W{i}"] for i in range(spec.n_layers)]
        biases = [data[f"b{i}"] for i in range(spec.n_layers)]
    return NetworkParams(spec, weights, biases)

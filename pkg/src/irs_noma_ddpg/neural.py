"""Minimal dense-network engine in double-precision numpy.

Each layer is affine -> optional batch normalization -> activation
(tanh, relu or linear).  ``forward`` keeps the intermediates needed by
``backward``, which returns exact reverse-mode gradients for every
trainable tensor and for the layer input.  ``adam_step`` and
``soft_update`` operate on whole networks; two network shapes are
supported: a plain chain (:class:`Mlp`) and a two-branch chain whose
branch outputs are horizontally stacked before a shared trunk
(:class:`BranchedMlp`), which is enough to express a deterministic
policy network and a state/action value network.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

BN_EPS = 1e-5
BN_DECAY = 0.99  # running = decay * running + (1 - decay) * batch

ACTIVATIONS = ("tanh", "relu", "linear")

_MAGIC = b"NNET1\n"


class TrainingDivergenceError(RuntimeError):
    """A loss or gradient became non-finite."""


@dataclass
class DenseLayer:
    """One affine layer with optional batch normalization.

    ``gamma is None`` disables batch normalization; otherwise gamma,
    beta, run_mean and run_var all have the layer's output width.
    """

    W: np.ndarray
    b: np.ndarray
    activation: str = "linear"
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None
    run_mean: np.ndarray | None = None
    run_var: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        out = self.W.shape[1]
        if self.b.shape != (out,):
            raise ValueError(f"bias shape {self.b.shape} does not match width {out}")
        if self.batch_norm:
            for name in ("gamma", "beta", "run_mean", "run_var"):
                arr = getattr(self, name)
                if arr is None or arr.shape != (out,):
                    raise ValueError(f"batch-norm tensor {name} must have shape ({out},)")
            if np.any(self.run_var <= 0):
                raise ValueError("running variance entries must be positive")

    @property
    def batch_norm(self) -> bool:
        return self.gamma is not None

    @property
    def in_dim(self) -> int:
        return self.W.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W.shape[1]

    def trainable(self) -> dict[str, np.ndarray]:
        """Tensors updated by the optimizer (running stats excluded)."""
        t = {"W": self.W, "b": self.b}
        if self.batch_norm:
            t["gamma"] = self.gamma
            t["beta"] = self.beta
        return t

    def tensors(self) -> dict[str, np.ndarray]:
        """All tensors, including running statistics."""
        t = self.trainable()
        if self.batch_norm:
            t["run_mean"] = self.run_mean
            t["run_var"] = self.run_var
        return t


def dense_layer(
    in_dim: int,
    out_dim: int,
    activation: str,
    batch_norm: bool,
    rng: np.random.Generator,
    w_bound: float | None = None,
) -> DenseLayer:
    """Uniform +-1/sqrt(fan_in) init (or an explicit bound for output layers)."""
    bound = w_bound if w_bound is not None else 1.0 / np.sqrt(in_dim)
    layer = DenseLayer(
        W=rng.uniform(-bound, bound, size=(in_dim, out_dim)),
        b=rng.uniform(-bound, bound, size=out_dim),
        activation=activation,
    )
    if batch_norm:
        layer.gamma = np.ones(out_dim)
        layer.beta = np.zeros(out_dim)
        layer.run_mean = np.zeros(out_dim)
        layer.run_var = np.ones(out_dim)
    return layer


@dataclass
class Mlp:
    """Plain chain of dense layers."""

    layers: list[DenseLayer]

    def __post_init__(self) -> None:
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(
                    f"layer widths do not chain: {prev.out_dim} -> {nxt.in_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def all_layers(self) -> list[DenseLayer]:
        return self.layers


@dataclass
class BranchedMlp:
    """Two input chains stacked side by side, then a shared trunk."""

    branches: list[Mlp]
    trunk: Mlp

    def __post_init__(self) -> None:
        if len(self.branches) != 2:
            raise ValueError("exactly two input branches are supported")
        stacked = sum(b.out_dim for b in self.branches)
        if stacked != self.trunk.in_dim:
            raise ValueError(
                f"stacked branch width {stacked} does not match trunk input "
                f"{self.trunk.in_dim}"
            )

    @property
    def out_dim(self) -> int:
        return self.trunk.out_dim

    def all_layers(self) -> list[DenseLayer]:
        layers: list[DenseLayer] = []
        for b in self.branches:
            layers.extend(b.layers)
        layers.extend(self.trunk.layers)
        return layers


def clone(net):
    """Deep copy; used to initialize target networks as exact copies."""
    return copy.deepcopy(net)


# ---------------------------------------------------------------------------
# forward / backward


def _layer_forward(
    layer: DenseLayer, x: np.ndarray, mode: str, update_running: bool
) -> tuple[np.ndarray, dict]:
    z = x @ layer.W + layer.b
    cache: dict = {"x": x, "mode": mode}
    if layer.batch_norm:
        if mode == "train":
            if z.shape[0] < 2:
                raise ValueError("train-mode batch normalization needs a batch of >= 2")
            mean = z.mean(axis=0)
            var = z.var(axis=0)
            if update_running:
                layer.run_mean = BN_DECAY * layer.run_mean + (1.0 - BN_DECAY) * mean
                layer.run_var = BN_DECAY * layer.run_var + (1.0 - BN_DECAY) * var
        else:
            mean = layer.run_mean
            var = layer.run_var
        ivar = 1.0 / np.sqrt(var + BN_EPS)
        zhat = (z - mean) * ivar
        u = layer.gamma * zhat + layer.beta
        cache["zhat"] = zhat
        cache["ivar"] = ivar
    else:
        u = z
    if layer.activation == "tanh":
        y = np.tanh(u)
        cache["y"] = y
    elif layer.activation == "relu":
        y = np.maximum(u, 0.0)
        cache["u"] = u
    else:
        y = u
    return y, cache


def _layer_backward(
    layer: DenseLayer, cache: dict, dy: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    if layer.activation == "tanh":
        du = dy * (1.0 - cache["y"] ** 2)
    elif layer.activation == "relu":
        du = dy * (cache["u"] > 0.0)
    else:
        du = dy
    grads: dict[str, np.ndarray] = {}
    if layer.batch_norm:
        zhat, ivar = cache["zhat"], cache["ivar"]
        grads["gamma"] = np.sum(du * zhat, axis=0)
        grads["beta"] = np.sum(du, axis=0)
        dzhat = du * layer.gamma
        if cache["mode"] == "train":
            # Backprop through the batch statistics (biased variance).
            B = zhat.shape[0]
            dz = (ivar / B) * (
                B * dzhat
                - np.sum(dzhat, axis=0)
                - zhat * np.sum(dzhat * zhat, axis=0)
            )
        else:
            dz = dzhat * ivar
    else:
        dz = du
    x = cache["x"]
    grads["W"] = x.T @ dz
    grads["b"] = np.sum(dz, axis=0)
    dx = dz @ layer.W.T
    return grads, dx


def forward(
    net: Mlp, x: np.ndarray, mode: str = "inference", update_running: bool = True
) -> tuple[np.ndarray, dict]:
    """Run the chain; returns the output and a cache for ``backward``.

    ``mode`` is "train" (batch statistics; running stats updated unless
    ``update_running`` is False) or "inference" (running statistics).
    """
    if mode not in ("train", "inference"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ValueError(f"expected input of shape (batch, {net.in_dim}), got {x.shape}")
    layer_caches = []
    for layer in net.layers:
        x, cache = _layer_forward(layer, x, mode, update_running)
        layer_caches.append(cache)
    return x, {"mode": mode, "layers": layer_caches}


def backward(
    net: Mlp, cache: dict, grad_out: np.ndarray
) -> tuple[list[dict[str, np.ndarray]], np.ndarray]:
    """Exact gradients of sum(grad_out * output) w.r.t. parameters and input.

    Returns one gradient dict per layer (keys matching
    ``DenseLayer.trainable``) and the gradient w.r.t. the network input.
    """
    if cache is None or "layers" not in cache:
        raise ValueError("backward requires the cache produced by forward")
    if cache["mode"] != "train":
        raise ValueError("backward requires a train-mode forward cache")
    grads: list[dict[str, np.ndarray]] = [{} for _ in net.layers]
    dy = np.asarray(grad_out, dtype=float)
    for idx in range(len(net.layers) - 1, -1, -1):
        grads[idx], dy = _layer_backward(net.layers[idx], cache["layers"][idx], dy)
    return grads, dy


def forward_branched(
    net: BranchedMlp,
    inputs: Sequence[np.ndarray],
    mode: str = "inference",
    update_running: bool = True,
) -> tuple[np.ndarray, dict]:
    """Forward for a two-branch network; ``inputs`` pairs with branches."""
    if len(inputs) != len(net.branches):
        raise ValueError(f"expected {len(net.branches)} inputs, got {len(inputs)}")
    outs, caches = [], []
    for branch, x in zip(net.branches, inputs):
        y, c = forward(branch, x, mode, update_running)
        outs.append(y)
        caches.append(c)
    stacked = np.hstack(outs)
    y, trunk_cache = forward(net.trunk, stacked, mode, update_running)
    return y, {
        "mode": mode,
        "branches": caches,
        "trunk": trunk_cache,
        "widths": [b.out_dim for b in net.branches],
    }


def backward_branched(
    net: BranchedMlp, cache: dict, grad_out: np.ndarray
) -> tuple[list[dict[str, np.ndarray]], list[np.ndarray]]:
    """Gradients ordered as ``net.all_layers()`` plus per-branch input grads."""
    if cache is None or "trunk" not in cache:
        raise ValueError("backward requires the cache produced by forward_branched")
    trunk_grads, dstacked = backward(net.trunk, cache["trunk"], grad_out)
    grads: list[dict[str, np.ndarray]] = []
    input_grads: list[np.ndarray] = []
    offset = 0
    for branch, bcache, width in zip(net.branches, cache["branches"], cache["widths"]):
        bgrads, dx = backward(branch, bcache, dstacked[:, offset : offset + width])
        grads.extend(bgrads)
        input_grads.append(dx)
        offset += width
    grads.extend(trunk_grads)
    return grads, input_grads


# ---------------------------------------------------------------------------
# optimization


@dataclass
class AdamState:
    """First/second-moment accumulators shaped like the network's trainables."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[dict[str, np.ndarray]] = field(default_factory=list)
    v: list[dict[str, np.ndarray]] = field(default_factory=list)

    @classmethod
    def for_net(cls, net, lr: float) -> "AdamState":
        state = cls(lr=lr)
        for layer in net.all_layers():
            state.m.append({k: np.zeros_like(t) for k, t in layer.trainable().items()})
            state.v.append({k: np.zeros_like(t) for k, t in layer.trainable().items()})
        return state


def adam_step(net, grads: list[dict[str, np.ndarray]], state: AdamState) -> None:
    """One Adam update (with bias correction) applied in place."""
    layers = net.all_layers()
    if len(grads) != len(layers) or len(state.m) != len(layers):
        raise ValueError("gradient/optimizer structure does not match the network")
    for g in grads:
        for arr in g.values():
            if not np.all(np.isfinite(arr)):
                raise TrainingDivergenceError("non-finite gradient entries")
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for layer, g, m, v in zip(layers, grads, state.m, state.v):
        params = layer.trainable()
        if set(g) != set(params):
            raise ValueError(f"gradient keys {set(g)} do not match layer tensors")
        for key, p in params.items():
            if g[key].shape != p.shape:
                raise ValueError(f"gradient shape mismatch for {key}")
            m[key] = state.beta1 * m[key] + (1.0 - state.beta1) * g[key]
            v[key] = state.beta2 * v[key] + (1.0 - state.beta2) * g[key] ** 2
            p -= state.lr * (m[key] / c1) / (np.sqrt(v[key] / c2) + state.eps)


def soft_update(target, train, tau: float) -> None:
    """target <- tau * train + (1 - tau) * target over every tensor,
    batch-norm running statistics included."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    t_layers, s_layers = target.all_layers(), train.all_layers()
    if len(t_layers) != len(s_layers):
        raise ValueError("networks have different depths")
    for t_layer, s_layer in zip(t_layers, s_layers):
        t_tensors, s_tensors = t_layer.tensors(), s_layer.tensors()
        if set(t_tensors) != set(s_tensors):
            raise ValueError("networks have different layer structure")
        for key, t_arr in t_tensors.items():
            s_arr = s_tensors[key]
            if t_arr.shape != s_arr.shape:
                raise ValueError(f"shape mismatch on {key}")
            t_arr *= 1.0 - tau
            t_arr += tau * s_arr


# ---------------------------------------------------------------------------
# serialization
#
# Checkpoint layout: magic, one JSON header line describing the network
# kind, layer sizes, activations and batch-norm flags, then the raw
# float64 little-endian tensors in all_layers() order -- per layer W
# (row-major), b, and when batch-normalized gamma, beta, run_mean,
# run_var.


def _layer_meta(layer: DenseLayer) -> dict:
    return {
        "in": layer.in_dim,
        "out": layer.out_dim,
        "activation": layer.activation,
        "batch_norm": layer.batch_norm,
    }


def _net_meta(net) -> dict:
    if isinstance(net, Mlp):
        return {"kind": "mlp", "layers": [_layer_meta(l) for l in net.layers]}
    if isinstance(net, BranchedMlp):
        return {
            "kind": "branched",
            "branches": [[_layer_meta(l) for l in b.layers] for b in net.branches],
            "trunk": [_layer_meta(l) for l in net.trunk.layers],
        }
    raise TypeError(f"cannot serialize {type(net).__name__}")


def _write_layer(fh: BinaryIO, layer: DenseLayer) -> None:
    order = ["W", "b"] + (["gamma", "beta", "run_mean", "run_var"] if layer.batch_norm else [])
    tensors = layer.tensors()
    for key in order:
        fh.write(np.ascontiguousarray(tensors[key], dtype="<f8").tobytes())


def _read_layer(fh: BinaryIO, meta: dict) -> DenseLayer:
    def read(shape: tuple[int, ...]) -> np.ndarray:
        n = int(np.prod(shape))
        buf = fh.read(8 * n)
        if len(buf) != 8 * n:
            raise ValueError("truncated checkpoint")
        return np.frombuffer(buf, dtype="<f8").reshape(shape).astype(float)

    W = read((meta["in"], meta["out"]))
    b = read((meta["out"],))
    layer = DenseLayer(W=W, b=b, activation=meta["activation"])
    if meta["batch_norm"]:
        layer.gamma = read((meta["out"],))
        layer.beta = read((meta["out"],))
        layer.run_mean = read((meta["out"],))
        layer.run_var = read((meta["out"],))
    return layer


def write_net(fh: BinaryIO, net) -> None:
    fh.write(json.dumps(_net_meta(net)).encode() + b"\n")
    for layer in net.all_layers():
        _write_layer(fh, layer)


def read_net(fh: BinaryIO):
    meta = json.loads(fh.readline().decode())
    if meta["kind"] == "mlp":
        return Mlp([_read_layer(fh, m) for m in meta["layers"]])
    if meta["kind"] == "branched":
        branches = [Mlp([_read_layer(fh, m) for m in bmeta]) for bmeta in meta["branches"]]
        trunk = Mlp([_read_layer(fh, m) for m in meta["trunk"]])
        return BranchedMlp(branches=branches, trunk=trunk)
    raise ValueError(f"unknown network kind {meta['kind']!r}")


def save_net(net, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        write_net(fh, net)


def load_net(path: str | Path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a network checkpoint")
        return read_net(fh)

"""Trajectory predictor: one graph-convolution layer, then a residual temporal CNN.

Tensors are batched as (B, T, V, C): windows, time steps, graph nodes,
coordinate channels. Windows with fewer nodes than the batch maximum are
zero-padded and carry a node mask; masked activations are forced to zero after
every layer, which makes a padded node indistinguishable from the convolution's
own zero padding.

Gradients are derived by hand for this fixed architecture.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidConfig, ShapeMismatch
from .graph import window_adjacency
from .skeleton import LEVELS, LOW, OBSERVED, WindowSample

DEFAULT_SLOPE = 0.25


@dataclass(frozen=True)
class ModelConfig:
    level: str = LOW
    channels: int = 2
    time_in: int = OBSERVED
    num_tconv: int = 5
    node_kernel: int = 3
    binary_edges: bool = False  # low level: 0/1 skeleton edges instead of 1/d^2

    def __post_init__(self):
        if self.level not in LEVELS:
            raise InvalidConfig(f"level must be one of {LEVELS}")
        if self.node_kernel < 1 or self.node_kernel % 2 == 0:
            raise InvalidConfig("node_kernel must be a positive odd integer")
        if self.num_tconv < 0:
            raise InvalidConfig("num_tconv must be >= 0")


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    C, T, K = config.channels, config.time_in, config.node_kernel
    shapes: dict[str, tuple[int, ...]] = {"gcn.weight": (C, C), "gcn.bias": (C,), "gcn.slope": ()}
    for k in range(config.num_tconv):
        last = k == config.num_tconv - 1
        shapes[f"tconv{k}.kernel"] = (1 if last else T, T, K)
        shapes[f"tconv{k}.bias"] = (1 if last else T,)
        if not last:
            shapes[f"tconv{k}.slope"] = ()
    return shapes


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, np.ndarray]
    seed: Optional[int] = None

    def __post_init__(self):
        expected = param_shapes(self.config)
        if list(self.tensors) != list(expected):
            raise ShapeMismatch(f"parameter names {list(self.tensors)} != {list(expected)}")
        for name, shape in expected.items():
            arr = np.asarray(self.tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeMismatch(f"{name}: shape {arr.shape} != {shape}")
            self.tensors[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def replace(self, tensors: dict[str, np.ndarray]) -> "ModelParams":
        return ModelParams(self.config, tensors, self.seed)

    def copy(self) -> "ModelParams":
        return self.replace({k: v.copy() for k, v in self.tensors.items()})


def param_count(params_or_config) -> int:
    config = params_or_config.config if isinstance(params_or_config, ModelParams) else params_or_config
    return int(sum(np.prod(s, dtype=np.int64) for s in param_shapes(config).values()))


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Uniform(-r, r) with r = sqrt(1/fan_in); PReLU slopes start at 0.25."""
    rng = np.random.default_rng(seed)
    C, T, K = config.channels, config.time_in, config.node_kernel
    tensors = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".slope"):
            tensors[name] = np.array(DEFAULT_SLOPE)
            continue
        fan_in = C if name.startswith("gcn") else T * K
        r = np.sqrt(1.0 / fan_in)
        tensors[name] = rng.uniform(-r, r, size=shape)
    return ModelParams(config, tensors, seed)


def zeros_like_params(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.tensors.items()}


# --- primitives -------------------------------------------------------------


def prelu(x, slope):
    return np.where(x >= 0, x, slope * x)


def _prelu_grads(dy, pre, slope):
    """(d/dx, d/dslope) of prelu at ``pre`` given upstream ``dy``."""
    neg = pre < 0
    return np.where(neg, slope * dy, dy), float(np.sum(np.where(neg, dy * pre, 0.0)))


def _patches(z: np.ndarray, k: int) -> np.ndarray:
    """(N, I, V) -> (N, I, k, V) zero-padded neighbourhoods along the node axis."""
    p = k // 2
    V = z.shape[-1]
    zp = np.pad(z, ((0, 0), (0, 0), (p, p)))
    return np.stack([zp[..., j : j + V] for j in range(k)], axis=2)


def _conv(z, kernel, bias):
    patches = _patches(z, kernel.shape[-1])
    y = np.tensordot(patches, kernel, axes=([1, 2], [1, 2])).transpose(0, 2, 1)
    return y + bias[:, None], patches


def _conv_backward(dy, kernel, patches):
    K = kernel.shape[-1]
    p = K // 2
    N, _, V = dy.shape
    dk = np.tensordot(dy, patches, axes=([0, 2], [0, 3]))
    db = dy.sum(axis=(0, 2))
    dpatch = np.tensordot(dy, kernel, axes=([1], [0]))  # (N, V, I, K)
    dzp = np.zeros((N, kernel.shape[1], V + 2 * p))
    for j in range(K):
        dzp[..., j : j + V] += dpatch[..., j].transpose(0, 2, 1)
    return dk, db, dzp[..., p : p + V]


# --- batched forward / backward --------------------------------------------


@dataclass
class Batch:
    inputs: np.ndarray  # (B, T, V, C)
    adjacency: np.ndarray  # (B, T, V, V) normalized
    mask: np.ndarray  # (B, V) float 0/1
    target: Optional[np.ndarray] = None  # (B, V, C)
    windows: Sequence[WindowSample] = field(default_factory=tuple)

    def __len__(self) -> int:
        return self.inputs.shape[0]


def collate(windows: Sequence[WindowSample], config: ModelConfig) -> Batch:
    """Stack windows into one zero-padded batch with normalized adjacencies."""
    if not windows:
        raise ValueError("cannot collate an empty window list")
    B = len(windows)
    V = max(w.num_nodes for w in windows)
    T, C = config.time_in, config.channels
    x = np.zeros((B, T, V, C))
    pos = np.zeros((B, T, V, 2))
    tgt = np.zeros((B, V, C))
    mask = np.zeros((B, V))
    for b, w in enumerate(windows):
        if w.level != config.level:
            raise ShapeMismatch(f"{w.level}-level window given to {config.level}-level model")
        n = w.num_nodes
        x[b, :, :n] = w.inputs
        pos[b, :, :n] = w.positions
        tgt[b, :n] = w.target
        mask[b, :n] = 1.0
    adj = window_adjacency(pos, config.level, mask, config.binary_edges)
    return Batch(x, adj, mask, tgt, tuple(windows))


def _check(params: ModelParams, x, adj, mask):
    cfg = params.config
    if x.ndim != 4 or x.shape[1] != cfg.time_in or x.shape[3] != cfg.channels:
        raise ShapeMismatch(f"inputs {x.shape} incompatible with T={cfg.time_in}, C={cfg.channels}")
    B, T, V, _ = x.shape
    if adj.shape != (B, T, V, V):
        raise ShapeMismatch(f"adjacency {adj.shape} != {(B, T, V, V)}")
    if mask is None:
        return np.ones((B, V))
    if mask.shape != (B, V):
        raise ShapeMismatch(f"mask {mask.shape} != {(B, V)}")
    return mask


def forward(params: ModelParams, x: np.ndarray, adj: np.ndarray, mask: Optional[np.ndarray] = None,
            keep: bool = False):
    """Predict the next frame: (B, T, V, C) -> (B, V, C).

    With ``keep`` also returns the activations needed by ``backward``.
    """
    mask = _check(params, x, adj, mask)
    cfg = params.config
    if cfg.num_tconv < 1:
        raise ShapeMismatch("forward needs at least one temporal layer")
    P = params.tensors
    B, T, V, C = x.shape
    mg = mask[:, None, :, None]

    u = adj @ x
    s = u @ P["gcn.weight"] + P["gcn.bias"]
    h = prelu(s, P["gcn.slope"]) * mg

    mz = np.repeat(mask, C, axis=0)[:, None, :]  # (B*C, 1, V)
    z = h.transpose(0, 3, 1, 2).reshape(B * C, T, V)
    acts = []
    for k in range(cfg.num_tconv):
        y, patches = _conv(z, P[f"tconv{k}.kernel"], P[f"tconv{k}.bias"])
        if k == cfg.num_tconv - 1:
            out = y * mz
        elif k == 0:
            out = prelu(y, P[f"tconv{k}.slope"]) * mz
        else:
            out = prelu(y, P[f"tconv{k}.slope"]) * mz + z
        acts.append((y, patches))
        z = out
    pred = z.reshape(B, C, V).transpose(0, 2, 1)
    if keep:
        return pred, (u, s, mask, mz, acts)
    return pred


def backward(params: ModelParams, dpred: np.ndarray, cache) -> dict[str, np.ndarray]:
    """Vector-Jacobian product of ``forward`` w.r.t. every parameter."""
    cfg = params.config
    P = params.tensors
    u, s, mask, mz, acts = cache
    B, V, C = dpred.shape
    T = cfg.time_in
    grads: dict[str, np.ndarray] = {}

    dz = dpred.transpose(0, 2, 1).reshape(B * C, 1, V)
    for k in reversed(range(cfg.num_tconv)):
        y, patches = acts[k]
        last = k == cfg.num_tconv - 1
        dout = dz * mz
        if last:
            dy = dout
        else:
            dy, grads[f"tconv{k}.slope"] = _prelu_grads(dout, y, P[f"tconv{k}.slope"])
        dk, db, dz_in = _conv_backward(dy, P[f"tconv{k}.kernel"], patches)
        grads[f"tconv{k}.kernel"], grads[f"tconv{k}.bias"] = dk, db
        if not last and k > 0:
            dz_in = dz_in + dz  # residual branch
        dz = dz_in

    dh = dz.reshape(B, C, T, V).transpose(0, 2, 3, 1) * mask[:, None, :, None]
    ds, grads["gcn.slope"] = _prelu_grads(dh, s, P["gcn.slope"])
    grads["gcn.weight"] = np.einsum("btvi,btvo->io", u, ds)
    grads["gcn.bias"] = ds.sum(axis=(0, 1, 2))
    return {name: np.asarray(grads[name], dtype=np.float64).reshape(np.shape(P[name])) for name in P}


def window_mse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-window mean squared error over real nodes and channels, (B,)."""
    C = pred.shape[-1]
    sq = ((pred - target) ** 2).sum(axis=-1) * mask
    return sq.sum(axis=1) / (mask.sum(axis=1) * C)


def loss_and_grad(params: ModelParams, batch: Batch) -> tuple[float, dict[str, np.ndarray]]:
    """Batch-mean of per-window MSE and its exact gradient."""
    pred, cache = forward(params, batch.inputs, batch.adjacency, batch.mask, keep=True)
    B, V, C = pred.shape
    per_window = window_mse(pred, batch.target, batch.mask)
    weight = 2.0 / (B * batch.mask.sum(axis=1) * C)
    dpred = weight[:, None, None] * (pred - batch.target) * batch.mask[:, :, None]
    return float(per_window.mean()), backward(params, dpred, cache)


def predict(params: ModelParams, windows: Sequence[WindowSample], chunk: int = 512) -> list[np.ndarray]:
    """Model-space prediction for each window, (V_i, C) each."""
    out: list[np.ndarray] = []
    for i in range(0, len(windows), chunk):
        part = windows[i : i + chunk]
        batch = collate(part, params.config)
        pred = forward(params, batch.inputs, batch.adjacency, batch.mask)
        out.extend(pred[b, : w.num_nodes] for b, w in enumerate(part))
    return out


# --- single-window views ----------------------------------------------------
# Features here are (C, T, V) as a single un-batched tensor.


def gcn_layer(features: np.ndarray, adjacencies: np.ndarray, params: ModelParams) -> np.ndarray:
    C, T, V = features.shape
    if adjacencies.shape != (T, V, V):
        raise ShapeMismatch(f"adjacencies {adjacencies.shape} != {(T, V, V)}")
    if C != params.config.channels:
        raise ShapeMismatch(f"{C} channels, model expects {params.config.channels}")
    P = params.tensors
    x = features.transpose(1, 2, 0)
    return prelu(adjacencies @ x @ P["gcn.weight"] + P["gcn.bias"], P["gcn.slope"]).transpose(2, 0, 1)


def temporal_predictor(features: np.ndarray, params: ModelParams) -> np.ndarray:
    C, T, V = features.shape
    if T != params.config.time_in:
        raise ShapeMismatch(f"temporal predictor takes {params.config.time_in} frames, got {T}")
    P = params.tensors
    z = features
    n = params.config.num_tconv
    for k in range(n):
        y, _ = _conv(z, P[f"tconv{k}.kernel"], P[f"tconv{k}.bias"])
        if k == n - 1:
            z = y
        elif k == 0:
            z = prelu(y, P[f"tconv{k}.slope"])
        else:
            z = prelu(y, P[f"tconv{k}.slope"]) + z
    return z  # (C, 1, V)


def model_forward(window: WindowSample, params: ModelParams) -> np.ndarray:
    """Predicted feature frame (V, C) for one window."""
    batch = collate([window], params.config)
    return forward(params, batch.inputs, batch.adjacency, batch.mask)[0]


def window_backward(window: WindowSample, params: ModelParams,
                    target: Optional[np.ndarray] = None) -> tuple[float, dict[str, np.ndarray]]:
    batch = collate([window], params.config)
    if target is not None:
        batch.target = np.asarray(target, dtype=np.float64)[None]
    return loss_and_grad(params, batch)

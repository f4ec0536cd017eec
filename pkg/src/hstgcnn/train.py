"""Unsupervised next-frame training: MSE, SGD with momentum, cosine-annealed rate."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyDataset, FormatError, InvalidConfig, NumericError, ShapeMismatch
from .net import Batch, ModelConfig, ModelParams, collate, init_params, loss_and_grad, param_shapes
from .skeleton import LEVELS, WindowSample

log = logging.getLogger(__name__)

CKPT_MAGIC = "HSTGCNN-CKPT v1"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 30
    lr_max: float = 0.1
    lr_min: float = 0.0
    momentum: float = 0.9
    seed: int = 0
    level: str = "both"

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidConfig("momentum must lie in [0, 1)")
        if self.lr_max <= 0:
            raise InvalidConfig("lr_max must be > 0")
        if self.epochs < 1:
            raise InvalidConfig("epochs must be >= 1")
        if self.level not in LEVELS + ("both",):
            raise InvalidConfig(f"level must be one of {LEVELS + ('both',)}")

    @property
    def levels(self) -> tuple[str, ...]:
        return LEVELS if self.level == "both" else (self.level,)


@dataclass
class Checkpoint:
    params: dict[str, ModelParams]
    train_config: TrainConfig
    group: str = "0"
    final_loss: dict[str, float] = field(default_factory=dict)
    history: dict[str, list[float]] = field(default_factory=dict)


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {target.shape}")
    return float(np.mean((pred - target) ** 2))


def cosine_lr(epoch: float, total_epochs: int, lr_max: float, lr_min: float = 0.0) -> float:
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * epoch / total_epochs))


def sgd_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
             velocity: Mapping[str, np.ndarray], lr: float, beta: float):
    """Classical momentum: v' = beta*v + g, p' = p - lr*v'. Returns new dicts."""
    new_v = {k: beta * velocity[k] + grads[k] for k in params}
    new_p = {k: params[k] - lr * new_v[k] for k in params}
    return new_p, new_v


def _take(batch: Batch, idx: np.ndarray) -> Batch:
    return Batch(batch.inputs[idx], batch.adjacency[idx], batch.mask[idx], batch.target[idx])


def train_level(windows: Sequence[WindowSample], config: TrainConfig,
                model_config: ModelConfig, init: Optional[ModelParams] = None):
    """Train one predictor; returns (params, per-epoch mean loss)."""
    if not windows:
        raise EmptyDataset(f"no {model_config.level}-level training windows")
    params = init if init is not None else init_params(model_config, config.seed)
    data = collate(windows, model_config)
    n = len(data)
    rng = np.random.default_rng(config.seed)
    velocity = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    history = []
    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, config.epochs, config.lr_max, config.lr_min)
        order = rng.permutation(n)
        total = 0.0
        for i in range(0, n, config.batch_size):
            idx = order[i : i + config.batch_size]
            loss, grads = loss_and_grad(params, _take(data, idx))
            if not math.isfinite(loss):
                raise NumericError(f"{model_config.level}-level loss diverged at epoch {epoch}")
            total += loss * idx.size
            tensors, velocity = sgd_step(params.tensors, grads, velocity, lr, config.momentum)
            params = params.replace(tensors)
        history.append(total / n)
        log.debug("%s epoch %d lr %.4f loss %.6g", model_config.level, epoch, lr, history[-1])
    return params, history


def train(windows: Mapping[str, Sequence[WindowSample]], config: TrainConfig,
          model_configs: Optional[Mapping[str, ModelConfig]] = None, group: str = "0") -> Checkpoint:
    model_configs = dict(model_configs or {})
    params, final, history = {}, {}, {}
    for level in config.levels:
        mc = model_configs.get(level, ModelConfig(level=level))
        params[level], history[level] = train_level(windows.get(level, ()), config, mc)
        final[level] = history[level][-1]
    return Checkpoint(params, config, str(group), final, history)


# --- checkpoint file --------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".17g")


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    lines = [CKPT_MAGIC, f"group: {ckpt.group}"]
    for k, v in asdict(ckpt.train_config).items():
        lines.append(f"train.{k}: {v}")
    for level, loss in sorted(ckpt.final_loss.items()):
        lines.append(f"final_loss.{level}: {_fmt(loss)}")
    for level, p in ckpt.params.items():
        for k, v in asdict(p.config).items():
            lines.append(f"model.{level}.{k}: {v}")
        lines.append(f"model.{level}.seed: {p.seed}")
    for level, p in ckpt.params.items():
        for name, arr in p.tensors.items():
            lines.append(" ".join(["tensor", level, name, *map(str, arr.shape)]))
            lines.append(" ".join(_fmt(x) for x in arr.reshape(-1)))
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_value(text: str, kind):
    if kind is bool:
        if text not in ("True", "False"):
            raise ValueError(text)
        return text == "True"
    return kind(text)


def load_checkpoint(path) -> Checkpoint:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != CKPT_MAGIC:
        got = lines[0].strip() if lines else "<empty>"
        raise FormatError(f"{path}: expected header {CKPT_MAGIC!r}, got {got!r}")
    if lines[-1].strip() != "end":
        raise FormatError(f"{path}: truncated checkpoint (missing end marker)")
    meta: dict[str, str] = {}
    tensors: dict[str, dict[str, np.ndarray]] = {}
    i = 1
    try:
        while i < len(lines) - 1:
            line = lines[i]
            if line.startswith("tensor "):
                parts = line.split()
                level, name, shape = parts[1], parts[2], tuple(int(s) for s in parts[3:])
                values = np.array([float(s) for s in lines[i + 1].split()], dtype=np.float64)
                if values.size != int(np.prod(shape, dtype=np.int64)):
                    raise FormatError(f"{path}: tensor {level}/{name} has {values.size} values for shape {shape}")
                tensors.setdefault(level, {})[name] = values.reshape(shape)
                i += 2
            else:
                key, sep, value = line.partition(": ")
                if not sep:
                    raise FormatError(f"{path}:{i + 1}: malformed line {line!r}")
                meta[key] = value
                i += 1

        tc_fields = TrainConfig.__dataclass_fields__
        tc = TrainConfig(**{k: _parse_value(meta[f"train.{k}"], type(getattr(TrainConfig(), k)))
                            for k in tc_fields})
        params = {}
        for level in tensors:
            mc_defaults = ModelConfig(level=level)
            mc = ModelConfig(**{k: _parse_value(meta[f"model.{level}.{k}"], type(getattr(mc_defaults, k)))
                                for k in ModelConfig.__dataclass_fields__})
            seed_text = meta.get(f"model.{level}.seed", "None")
            seed = None if seed_text == "None" else int(seed_text)
            if list(tensors[level]) != list(param_shapes(mc)):
                raise FormatError(f"{path}: {level} tensors do not match model config")
            params[level] = ModelParams(mc, tensors[level], seed)
        final = {k.split(".", 1)[1]: float(v) for k, v in meta.items() if k.startswith("final_loss.")}
    except FormatError:
        raise
    except (KeyError, ValueError, IndexError, ShapeMismatch) as exc:
        raise FormatError(f"{path}: {exc!r}") from None
    return Checkpoint(params, tc, meta.get("group", "0"), final)

"""Seeded, deterministic training with torch."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..exceptions import ShapeError, TrainingDivergedError
from .layers import FC, BatchNorm, Conv, Dropout, MaxPool, NetworkSpec, ReLU, Softmax
from .weights import WeightStore, init_weights


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 10
    batch_size: int = 32
    validation_fraction: float = 0.0
    early_stop_patience: int | None = None
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError(f"validation_fraction must lie in [0, 1), got {self.validation_fraction}")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")


class EarlyStopping:
    """Stop once the monitored loss has not improved for ``patience`` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.stale = 0

    def step(self, loss: float) -> bool:
        if loss < self.best:
            self.best = loss
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


class _FlattenHWC(nn.Module):
    def forward(self, x):
        return x.permute(0, 2, 3, 1).flatten(1)


def to_torch(net: NetworkSpec, weights: WeightStore) -> nn.Sequential:
    """Torch module (NCHW) computing the same logits as the numpy forward pass."""
    modules = []
    flat = False
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Conv):
            m = nn.Conv2d(layer.in_channels, layer.out_channels, layer.kernel, padding=layer.kernel // 2)
            p = weights[layer.name]
            m.weight.data = torch.from_numpy(np.ascontiguousarray(p["weight"].transpose(3, 2, 0, 1)))
            m.bias.data = torch.from_numpy(p["bias"].copy())
        elif isinstance(layer, FC):
            if not flat:
                modules.append(_FlattenHWC())
                flat = True
            m = nn.Linear(layer.inputs, layer.outputs)
            p = weights[layer.name]
            m.weight.data = torch.from_numpy(np.ascontiguousarray(p["weight"].T))
            m.bias.data = torch.from_numpy(p["bias"].copy())
        elif isinstance(layer, BatchNorm):
            m = nn.BatchNorm2d(layer.channels, eps=layer.eps) if not flat else nn.BatchNorm1d(layer.channels, eps=layer.eps)
            p = weights[layer.name]
            m.weight.data = torch.from_numpy(p["gamma"].copy())
            m.bias.data = torch.from_numpy(p["beta"].copy())
            m.running_mean = torch.from_numpy(p["mean"].copy())
            m.running_var = torch.from_numpy(p["var"].copy())
        elif isinstance(layer, ReLU):
            m = nn.ReLU()
        elif isinstance(layer, MaxPool):
            m = nn.MaxPool2d(layer.size)
        elif isinstance(layer, Dropout):
            m = nn.Dropout(layer.rate)
        elif isinstance(layer, Softmax):
            continue
        else:
            raise ShapeError(f"unsupported layer {layer!r}", i)
        modules.append(m)
    return nn.Sequential(*modules)


def from_torch(net: NetworkSpec, model: nn.Sequential) -> WeightStore:
    entries = {}
    torch_layers = [m for m in model if not isinstance(m, _FlattenHWC)]
    spec_layers = [layer for layer in net.layers if not isinstance(layer, Softmax)]
    for layer, m in zip(spec_layers, torch_layers):
        if isinstance(layer, Conv):
            entries[layer.name] = {"weight": m.weight.detach().numpy().transpose(2, 3, 1, 0), "bias": m.bias.detach().numpy()}
        elif isinstance(layer, FC):
            entries[layer.name] = {"weight": m.weight.detach().numpy().T, "bias": m.bias.detach().numpy()}
        elif isinstance(layer, BatchNorm):
            entries[layer.name] = {
                "gamma": m.weight.detach().numpy(),
                "beta": m.bias.detach().numpy(),
                "mean": m.running_mean.numpy(),
                "var": m.running_var.numpy(),
            }
    return WeightStore(entries)


def _loss(model, x, y, loss_fn, batch_size):
    model.eval()
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            total += loss_fn(model(x[start : start + batch_size]), y[start : start + batch_size]).item() * len(
                x[start : start + batch_size]
            )
    return total / len(x)


def train(net: NetworkSpec, data, cfg: TrainConfig = TrainConfig(), initial: WeightStore | None = None,
          log=None) -> WeightStore:
    """Adam on cross-entropy; returns the weights after the last completed epoch."""
    if len(data) == 0:
        raise ShapeError("cannot train on an empty dataset")
    weights = initial if initial is not None else init_weights(net, cfg.seed)
    weights.validate(net)
    rng = np.random.default_rng(cfg.seed)
    images = np.asarray(data.images, dtype=np.float32).transpose(0, 3, 1, 2)
    labels = np.asarray(data.labels, dtype=np.int64)
    order = rng.permutation(len(labels))
    n_val = int(round(cfg.validation_fraction * len(labels)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    x = torch.from_numpy(np.ascontiguousarray(images[train_idx]))
    y = torch.from_numpy(labels[train_idx])
    xv = torch.from_numpy(np.ascontiguousarray(images[val_idx]))
    yv = torch.from_numpy(labels[val_idx])
    stopper = EarlyStopping(cfg.early_stop_patience) if cfg.early_stop_patience and n_val else None

    previous = torch.are_deterministic_algorithms_enabled()
    torch.use_deterministic_algorithms(True)
    try:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            model = to_torch(net, weights)
            loss_fn = nn.CrossEntropyLoss()
            opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
            for epoch in range(cfg.epochs):
                model.train()
                perm = rng.permutation(len(y))
                running = 0.0
                for start in range(0, len(perm), cfg.batch_size):
                    idx = torch.from_numpy(perm[start : start + cfg.batch_size])
                    opt.zero_grad()
                    loss = loss_fn(model(x[idx]), y[idx])
                    if not torch.isfinite(loss):
                        raise TrainingDivergedError(f"non-finite loss at epoch {epoch + 1}")
                    loss.backward()
                    opt.step()
                    running += loss.item() * len(idx)
                train_loss = running / len(y)
                val_loss = _loss(model, xv, yv, loss_fn, 256) if n_val else float("nan")
                if log:
                    log(epoch + 1, train_loss, val_loss)
                if stopper and stopper.step(val_loss):
                    break
            return from_torch(net, model)
    finally:
        torch.use_deterministic_algorithms(previous)

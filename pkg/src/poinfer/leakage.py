"""Leakage plans: which weight groups stay encrypted and which are revealed."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import PlanError
from .packing.groups import CONV_SCHEMES, FC_KINDS, group_count, group_weights, hidden_mask, hidden_quota

DEFAULT_SCHEMES = {2: "naive", 4: "filter"}


@dataclass(frozen=True)
class Random:
    """Hide a uniformly random subset of groups."""

    seed: int = 0
    name: str = field(default="random", init=False)

    def select(self, W, groups, quota: int, layer_index: int) -> list[int]:
        rng = np.random.default_rng([self.seed, layer_index])
        return sorted(int(g) for g in rng.choice(len(groups), size=quota, replace=False))


@dataclass(frozen=True)
class MaxWeight:
    """Hide the groups with the largest mean absolute weight, lowest index first on ties."""

    name: str = field(default="max-weight", init=False)

    def select(self, W, groups, quota: int, layer_index: int) -> list[int]:
        scores = np.array([group_score(W, g) for g in groups])
        return sorted(int(g) for g in np.argsort(-scores, kind="stable")[:quota])


def strategy_from_name(name: str, seed: int = 0):
    if name == "random":
        return Random(seed)
    if name == "max-weight":
        return MaxWeight()
    raise PlanError(f"unknown selection strategy {name!r}; expected 'random' or 'max-weight'")


def group_score(W, group, normalizer: float = 1.0) -> float:
    """Mean absolute value of the weights in ``group`` (flat indices), times ``normalizer``."""
    values = np.asarray(W, dtype=np.float64).ravel()[np.asarray(group, dtype=np.int64)]
    if values.size == 0:
        raise PlanError("cannot score an empty group")
    return float(normalizer * np.mean(np.abs(values)))


@dataclass(frozen=True)
class LayerPlan:
    name: str
    scheme: str
    shape: tuple
    hidden: tuple
    bias_hidden: bool
    p: float

    @property
    def group_count(self) -> int:
        return group_count(self.shape, self.scheme)

    @property
    def revealed(self) -> tuple:
        hidden = set(self.hidden)
        return tuple(g for g in range(self.group_count) if g not in hidden)

    def weight_mask(self) -> np.ndarray:
        """True where the weight tensor entry is hidden."""
        return hidden_mask(self.shape, self.scheme, self.hidden)


@dataclass(frozen=True)
class LeakagePlan:
    layers: tuple
    strategy: str
    seed: int
    hide_biases: bool

    def __getitem__(self, name: str) -> LayerPlan:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "hide_biases": self.hide_biases,
            "layers": [
                {**asdict(layer), "shape": list(layer.shape), "hidden": list(layer.hidden),
                 "revealed_count": len(layer.revealed), "group_count": layer.group_count}
                for layer in self.layers
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "LeakagePlan":
        layers = tuple(
            LayerPlan(d["name"], d["scheme"], tuple(d["shape"]), tuple(d["hidden"]), bool(d["bias_hidden"]), float(d["p"]))
            for d in data["layers"]
        )
        return cls(layers, data["strategy"], int(data["seed"]), bool(data["hide_biases"]))

    @classmethod
    def from_json(cls, text: str) -> "LeakagePlan":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "LeakagePlan":
        return cls.from_json(Path(path).read_text())


def linear_layers(weights) -> list[str]:
    return [name for name in weights if "weight" in weights[name] and weights[name]["weight"].ndim in (2, 4)]


def _scheme_for(name: str, W, schemes) -> str:
    scheme = (schemes or {}).get(name, DEFAULT_SCHEMES.get(W.ndim))
    allowed = FC_KINDS if W.ndim == 2 else CONV_SCHEMES
    if scheme not in allowed:
        raise PlanError(f"scheme {scheme!r} cannot group layer {name} with weight shape {W.shape}")
    return scheme


def plan_leakage(weights, p: float, strategy="random", hide_biases: bool = True, seed: int = 0,
                 schemes: dict | None = None) -> LeakagePlan:
    """Hide ``floor(p * groups)`` groups in every linear layer."""
    if isinstance(strategy, str):
        strategy = strategy_from_name(strategy, seed)
    layers = []
    for index, name in enumerate(linear_layers(weights)):
        W = weights[name]["weight"]
        scheme = _scheme_for(name, W, schemes)
        groups = group_weights(W.shape, scheme)
        quota = hidden_quota(p, len(groups))
        hidden = tuple(strategy.select(W, groups, quota, index))
        layers.append(LayerPlan(name, scheme, tuple(W.shape), hidden, bool(hide_biases), float(p)))
    return LeakagePlan(tuple(layers), strategy.name, int(getattr(strategy, "seed", seed)), bool(hide_biases))


def validate_plan(plan: LeakagePlan, weights) -> list[str]:
    """Every violation found; an empty list means the plan is well formed."""
    problems = []
    names = linear_layers(weights)
    planned = [layer.name for layer in plan.layers]
    for name in names:
        if name not in planned:
            problems.append(f"{name}: missing from plan")
    for layer in plan.layers:
        if layer.name not in names:
            problems.append(f"{layer.name}: no such linear layer")
            continue
        shape = tuple(weights[layer.name]["weight"].shape)
        if tuple(layer.shape) != shape:
            problems.append(f"{layer.name}: plan shape {tuple(layer.shape)} != weight shape {shape}")
            continue
        try:
            count = group_count(shape, layer.scheme)
        except Exception as exc:  # unknown scheme or rank mismatch
            problems.append(f"{layer.name}: {exc}")
            continue
        if len(set(layer.hidden)) != len(layer.hidden):
            problems.append(f"{layer.name}: duplicated hidden group indices")
        bad = [g for g in layer.hidden if not 0 <= g < count]
        if bad:
            problems.append(f"{layer.name}: hidden indices out of range {bad[:5]}")
        try:
            quota = hidden_quota(layer.p, count)
        except PlanError as exc:
            problems.append(f"{layer.name}: {exc}")
            continue
        if len(set(layer.hidden)) != quota:
            problems.append(f"{layer.name}: {len(set(layer.hidden))} hidden groups, quota is {quota}")
        if layer.bias_hidden != plan.hide_biases:
            problems.append(f"{layer.name}: bias flag disagrees with the plan")
    return problems


class LeakagePlanner(BaseEstimator):
    """``fit(weights)`` builds ``plan_`` for the configured fraction and strategy."""

    def __init__(self, p=0.5, strategy="random", hide_biases=True, seed=0, schemes=None):
        self.p = p
        self.strategy = strategy
        self.hide_biases = hide_biases
        self.seed = seed
        self.schemes = schemes

    def fit(self, weights, y=None):
        self.plan_ = plan_leakage(weights, self.p, self.strategy, self.hide_biases, self.seed, self.schemes)
        return self

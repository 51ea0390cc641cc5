"""Model-stealing simulation: fill in hidden weights and measure the accuracy gained."""
from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import PlanError
from .leakage import LeakagePlan, plan_leakage
from .nn.forward import evaluate_accuracy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Const:
    value: float = 0.0
    stochastic = False

    @property
    def name(self) -> str:
        return f"const({self.value:g})"


@dataclass(frozen=True)
class Mean:
    """Mean of the revealed weights of the same layer."""

    name: str = field(default="mean", init=False)
    stochastic = False


@dataclass(frozen=True)
class StdNormal:
    name: str = field(default="std-normal", init=False)
    stochastic = True


@dataclass(frozen=True)
class FittedNormal:
    """Normal with the revealed weights' mean and unbiased standard deviation."""

    name: str = field(default="fitted-normal", init=False)
    stochastic = True


POLICIES = ("const", "mean", "std-normal", "fitted-normal")


def policy_from_name(name: str):
    m = re.fullmatch(r"const(?:\((-?[0-9.eE+-]+)\))?", name)
    if m:
        return Const(float(m.group(1)) if m.group(1) else 0.0)
    table = {"mean": Mean, "std-normal": StdNormal, "fitted-normal": FittedNormal}
    if name not in table:
        raise PlanError(f"unknown attack policy {name!r}; expected const(c), mean, std-normal or fitted-normal")
    return table[name]()


def _fill_parameters(policy, revealed: np.ndarray, layer: str) -> tuple[float, float]:
    """(center, spread) such that hidden entries become ``center + spread * z``."""
    if isinstance(policy, Const):
        return policy.value, 0.0
    if isinstance(policy, StdNormal):
        return 0.0, 1.0
    needed = 1 if isinstance(policy, Mean) else 2
    if revealed.size < needed:
        log.info("%s: %d revealed weights, falling back to const(0)", layer, revealed.size)
        return 0.0, 0.0
    if isinstance(policy, Mean):
        return float(np.mean(revealed)), 0.0
    return float(np.mean(revealed)), float(np.std(revealed, ddof=1))


def reconstruct(weights, plan: LeakagePlan, policy, seed: int = 0):
    """Copy revealed entries exactly and fill hidden ones according to ``policy``.

    Stochastic policies draw one full-size standard normal sample per tensor, in
    plan order, whatever the plan hides; two plans evaluated with the same seed
    therefore see the same random numbers at every position.
    """
    rng = np.random.default_rng(seed)
    entries = {}
    for layer in plan.layers:
        W = np.asarray(weights[layer.name]["weight"], dtype=np.float32)
        b = np.asarray(weights[layer.name]["bias"], dtype=np.float32)
        w_noise = rng.standard_normal(W.shape) if policy.stochastic else np.zeros(W.shape)
        b_noise = rng.standard_normal(b.shape) if policy.stochastic else np.zeros(b.shape)
        mask = layer.weight_mask()
        center, spread = _fill_parameters(policy, W[~mask].astype(np.float64), layer.name)
        new_w = W.copy()
        new_w[mask] = (center + spread * w_noise)[mask]
        new_b = (center + spread * b_noise).astype(np.float32) if layer.bias_hidden else b.copy()
        entries[layer.name] = {"weight": new_w, "bias": new_b}
    return weights.with_entries(entries)


@dataclass(frozen=True)
class AdvantageReport:
    p: float
    strategy: str
    policy: str
    biases_hidden: bool
    acc_full: float
    acc_attacked: tuple
    acc_baselines: tuple

    @property
    def runs(self) -> int:
        return len(self.acc_attacked)

    @property
    def acc_baseline(self) -> float:
        return float(np.mean(self.acc_baselines))

    @property
    def adv_runs(self) -> np.ndarray:
        return np.asarray(self.acc_attacked) - np.asarray(self.acc_baselines)

    @property
    def adv_mean(self) -> float:
        return float(np.mean(self.adv_runs))

    @property
    def adv_std(self) -> float:
        return float(np.std(self.adv_runs))


def run_seeds(seed: int, runs: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(runs)]


def attacker_advantage(net, weights, testset, p_grid, strategy="random", policy=Const(0.0), runs: int = 10,
                       seed: int = 0, hide_biases: bool = True, schemes=None, seeds=None,
                       acc_full: float | None = None) -> list[AdvantageReport]:
    """One report per hidden fraction in ``p_grid``.

    Run ``r`` uses seed ``seeds[r]`` both to select groups (random strategy) and
    to draw fill values. The baseline of run ``r`` reconstructs from the plan that
    hides every group, with the same policy and seed.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if isinstance(policy, str):
        policy = policy_from_name(policy)
    seeds = list(seeds) if seeds is not None else run_seeds(seed, runs)
    if len(seeds) != runs:
        raise ValueError(f"{len(seeds)} seeds for {runs} runs")
    if acc_full is None:
        acc_full = evaluate_accuracy(net, weights, testset)
    strategy_name = strategy if isinstance(strategy, str) else strategy.name

    def attacked_accuracy(p, s):
        plan = plan_leakage(weights, p, strategy_name, hide_biases, s, schemes)
        return evaluate_accuracy(net, reconstruct(weights, plan, policy, s), testset)

    baselines = [attacked_accuracy(1.0, s) for s in seeds]
    reports = []
    for p in p_grid:
        attacked = baselines if p == 1.0 else [attacked_accuracy(p, s) for s in seeds]
        reports.append(AdvantageReport(float(p), strategy_name, policy.name, bool(hide_biases), acc_full,
                                       tuple(attacked), tuple(baselines)))
    return reports


def is_lambda_secure(report: AdvantageReport, lam: float) -> bool:
    return report.adv_mean <= lam


def worst_case_advantage(reports) -> dict:
    """Per-p maximum of per-run advantages across all reports."""
    families: dict = {}
    for r in reports:
        families.setdefault((r.strategy, r.policy, r.biases_hidden), set()).add(r.p)
    grids = {frozenset(g) for g in families.values()}
    if len(grids) > 1:
        raise ValueError("reports do not share the same p grid")
    out: dict = {}
    for r in reports:
        best = float(np.max(r.adv_runs))
        out[r.p] = max(out.get(r.p, -np.inf), best)
    return dict(sorted(out.items()))


RUN_COLUMNS = ("dataset", "p", "strategy", "policy", "biases_hidden", "run", "acc_attacked", "acc_baseline", "adv")
AGGREGATE_COLUMNS = ("dataset", "p", "strategy", "policy", "biases_hidden", "runs", "acc_full", "acc_baseline",
                     "adv_mean", "adv_std")


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_runs_csv(path, reports, dataset: str, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(RUN_COLUMNS)
        for r in reports:
            for i, (att, base) in enumerate(zip(r.acc_attacked, r.acc_baselines)):
                w.writerow([dataset, _fmt(r.p), r.strategy, r.policy, int(r.biases_hidden), i, _fmt(att), _fmt(base),
                            _fmt(att - base)])


def write_aggregate_csv(path, reports, dataset: str, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(AGGREGATE_COLUMNS)
        for r in reports:
            w.writerow([dataset, _fmt(r.p), r.strategy, r.policy, int(r.biases_hidden), r.runs, _fmt(r.acc_full),
                        _fmt(r.acc_baseline), _fmt(r.adv_mean), _fmt(r.adv_std)])


class WeightReconstructor(BaseEstimator, TransformerMixin):
    """``transform(weights)`` returns the attacker's estimate under ``plan``."""

    def __init__(self, plan=None, policy="const(0)", seed=0):
        self.plan = plan
        self.policy = policy
        self.seed = seed

    def fit(self, weights=None, y=None):
        if self.plan is None:
            raise PlanError("WeightReconstructor needs a leakage plan")
        self.policy_ = policy_from_name(self.policy) if isinstance(self.policy, str) else self.policy
        return self

    def transform(self, weights):
        if not hasattr(self, "policy_"):
            self.fit()
        return reconstruct(weights, self.plan, self.policy_, self.seed)

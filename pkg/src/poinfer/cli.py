"""Command-line entry point: train, plan, attack, bench, cost, report."""
from __future__ import annotations

import argparse
import csv
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import config_hash, load_config
from .exceptions import ConfigError, PoinferError

THREADS_ENV = "POINFER_THREADS"


def _header(cfg: dict) -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return f"config_sha256={config_hash(cfg)} seed={cfg['seed']} generated={stamp}"


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _datasets(cfg):
    from .nn import load_cifar10_bin, load_idx, mnist_sample

    d = cfg["dataset"]
    if d["name"] == "mnist-sample":
        return mnist_sample(d["train_per_class"], d["test_per_class"], d["split_seed"])
    if d["name"] == "idx":
        return (load_idx(d["train_images"], d["train_labels"], "train"),
                load_idx(d["test_images"], d["test_labels"], "test"))
    if d["name"] == "cifar10":
        return load_cifar10_bin(d["train_files"], "train"), load_cifar10_bin(d["test_files"], "test")
    raise ConfigError(f"unknown dataset {d['name']!r}")


def _train_config(cfg, seed):
    from .nn import TrainConfig

    t = cfg["train"]
    return TrainConfig(t["learning_rate"], t["epochs"], t["batch_size"], t["validation_fraction"],
                       t["early_stop_patience"], seed)


def _trained(cfg, train_set, seed):
    from .nn import architecture, train

    net = architecture(cfg["arch"])
    return net, train(net, train_set, _train_config(cfg, seed))


def _model(cfg, args, train_set):
    """Folded network and weights from --weights / config, or freshly trained."""
    from .nn import architecture, fold_batchnorm, load_weights

    path = args.weights or cfg["weights"]
    if path:
        net, weights = architecture(cfg["arch"]), load_weights(path)
    else:
        net, weights = _trained(cfg, train_set, cfg["seed"])
    return fold_batchnorm(net, weights)


def cmd_train(cfg, args):
    from .nn import evaluate_accuracy, fold_batchnorm, save_weights

    train_set, test_set = _datasets(cfg)
    net, weights = _trained(cfg, train_set, cfg["seed"])
    path = _out(args) / "weights.pow"
    save_weights(path, weights)
    acc = evaluate_accuracy(*fold_batchnorm(net, weights), test_set)
    print(f"wrote {path}; test accuracy {acc:.4f}")


def cmd_plan(cfg, args):
    from .leakage import plan_leakage

    train_set = None if (args.weights or cfg["weights"]) else _datasets(cfg)[0]
    _, weights = _model(cfg, args, train_set)
    out = _out(args)
    schemes = _schemes(weights, cfg)
    for strategy in cfg["strategies"]:
        for p in cfg["p_grid"]:
            plan = plan_leakage(weights, p, strategy, cfg["hide_biases"], cfg["seed"], schemes)
            path = out / f"plan_{strategy}_p{p:.2f}.json"
            plan.save(path)
            print(f"wrote {path}")


def _schemes(weights, cfg):
    from .leakage import linear_layers

    kinds = cfg["packing"]
    return {name: kinds["fc"] if weights[name]["weight"].ndim == 2 else kinds["conv"] for name in linear_layers(weights)}


def cmd_attack(cfg, args):
    from .attacker import attacker_advantage, policy_from_name, run_seeds, write_aggregate_csv, write_runs_csv

    train_set, test_set = _datasets(cfg)
    seeds = run_seeds(cfg["seed"], cfg["runs"])
    reports = []
    if cfg["retrain"]:
        from .nn import fold_batchnorm

        models = [(fold_batchnorm(*_trained(cfg, train_set, s)), [s]) for s in seeds]
    else:
        models = [(_model(cfg, args, train_set), seeds)]
    for strategy in cfg["strategies"]:
        for name in cfg["policies"]:
            policy = policy_from_name(name)
            per_model = []
            for (net, weights), model_seeds in models:
                per_model.append(attacker_advantage(net, weights, test_set, cfg["p_grid"], strategy, policy,
                                                    len(model_seeds), cfg["seed"], cfg["hide_biases"],
                                                    _schemes(weights, cfg), model_seeds))
            reports += _merge_runs(per_model)
    out = _out(args)
    header = _header(cfg)
    dataset = cfg["dataset"]["name"]
    write_runs_csv(out / "attack_runs.csv", reports, dataset, header)
    write_aggregate_csv(out / "attack_aggregate.csv", reports, dataset, header)
    print(f"wrote {out / 'attack_runs.csv'} and {out / 'attack_aggregate.csv'}")


def _merge_runs(per_model):
    from .attacker import AdvantageReport

    if len(per_model) == 1:
        return per_model[0]
    merged = []
    for cells in zip(*per_model):
        first = cells[0]
        merged.append(AdvantageReport(
            first.p, first.strategy, first.policy, first.biases_hidden,
            float(np.mean([c.acc_full for c in cells])),
            tuple(a for c in cells for a in c.acc_attacked),
            tuple(b for c in cells for b in c.acc_baselines),
        ))
    return merged


def cmd_bench(cfg, args):
    from .costbench import calibrate, write_cost_table_csv
    from .he import CKKSBackend, preset

    bench = cfg["bench"]
    backend = CKKSBackend(preset(bench["params"]), cfg["seed"])
    table = calibrate(backend, bench["repetitions"], seed=cfg["seed"])
    path = _out(args) / "cost_table.csv"
    write_cost_table_csv(path, table, _header(cfg))
    print(f"wrote {path}: ciph {table.ciph_mult:.2f}, rescale {table.rescale:.2f}, relin {table.relinearization:.2f}")


def _cost_table(cfg):
    from .costbench import read_cost_table_csv
    from .he import CostTable

    source = cfg["cost_table"]
    if source == "paper-default":
        return CostTable.published(4096, 2)
    if isinstance(source, str) and source.startswith("paper-default("):
        n, depth = (int(v) for v in source[len("paper-default("):-1].split(","))
        return CostTable.published(n, depth)
    return read_cost_table_csv(source)


def cmd_cost(cfg, args):
    from .costbench import overhead_factor, write_overhead_csv
    from .he import preset

    table = _cost_table(cfg)
    slots = preset(cfg["params"]).slot_count
    reports = [overhead_factor(layer["dims"], layer["kind"], cfg["p_grid"], table, cfg["mode"], slots)
               for layer in cfg["layers"]]
    path = _out(args) / "overhead.csv"
    write_overhead_csv(path, reports, _header(cfg))
    print(render_overhead(_read_csv(path)[1]))
    print(f"wrote {path}")


def _read_csv(path):
    header = {}
    lines = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                for token in line[1:].split():
                    key, _, value = token.partition("=")
                    header[key] = value
            else:
                lines.append(line)
    return header, list(csv.DictReader(lines))


def _grid(rows, row_key, col_key, cell):
    cols = list(dict.fromkeys(col_key(r) for r in rows))
    keys = sorted({float(r[row_key]) for r in rows})
    table = [[row_key] + cols]
    for k in keys:
        line = [f"{k:.1f}"]
        for c in cols:
            match = [r for r in rows if float(r[row_key]) == k and col_key(r) == c]
            line.append(cell(match[0]) if match else "-")
        table.append(line)
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in table)


def render_advantage(rows) -> str:
    """p down the side, one column per (strategy, policy, bias) cell, entries ``100*mean (100*std)``."""
    def col(r):
        return f"{r['strategy']}/{r['policy']}/{'b' if r['biases_hidden'] == '1' else 'nb'}"

    return _grid(rows, "p", col, lambda r: f"{100 * float(r['adv_mean']):.1f} ({100 * float(r['adv_std']):.1f})")


def render_overhead(rows) -> str:
    return _grid(rows, "p", lambda r: f"{r['layer']}[{r['mode']}]", lambda r: f"{float(r['factor']):.2f}")


def render_cost_table(rows) -> str:
    width = max(len(r["operation"]) for r in rows)
    return "\n".join(f"{r['operation'].ljust(width)}  {float(r['relative_cost']):8.2f}" for r in rows)


def cmd_report(cfg, args):
    expected = config_hash(cfg) if args.config else None
    for path in args.csvs:
        header, rows = _read_csv(path)
        if expected and header.get("config_sha256") != expected:
            raise ConfigError(f"{path}: config hash {header.get('config_sha256')} does not match {expected}")
        if not rows:
            raise PoinferError(f"{path}: no data rows")
        columns = set(rows[0])
        if "adv_mean" in columns:
            text = render_advantage(rows)
        elif "factor" in columns:
            text = render_overhead(rows)
        elif "relative_cost" in columns:
            text = render_cost_table(rows)
        elif "adv" in columns:
            raise PoinferError(f"{path}: per-run file; pass the aggregate CSV instead")
        else:
            raise PoinferError(f"{path}: unrecognized CSV columns {sorted(columns)}")
        print(f"== {path}")
        print(text)


COMMANDS = {
    "train": cmd_train,
    "plan": cmd_plan,
    "attack": cmd_attack,
    "bench": cmd_bench,
    "cost": cmd_cost,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poinfer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", default=".", help="output directory")
        if name in ("plan", "attack"):
            p.add_argument("--weights", help="POW1 weight file (trained if omitted)")
        if name == "report":
            p.add_argument("csvs", nargs="+")
    return parser


def _set_threads():
    value = os.environ.get(THREADS_ENV)
    if value:
        import torch

        try:
            torch.set_num_threads(int(value))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _set_threads()
        cfg = load_config(args.config, args.seed)
        COMMANDS[args.command](cfg, args)
    except Exception as exc:  # every failure becomes one line and exit code 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

import csv
import math

import numpy as np
import pytest

from poinfer.attacker import (
    AGGREGATE_COLUMNS,
    RUN_COLUMNS,
    AdvantageReport,
    Const,
    FittedNormal,
    Mean,
    StdNormal,
    WeightReconstructor,
    attacker_advantage,
    is_lambda_secure,
    policy_from_name,
    reconstruct,
    run_seeds,
    worst_case_advantage,
    write_aggregate_csv,
    write_runs_csv,
)
from poinfer.exceptions import PlanError
from poinfer.leakage import LayerPlan, LeakagePlan, plan_leakage
from poinfer.nn import FC, Conv, Dataset, MaxPool, NetworkSpec, ReLU, Softmax, WeightStore, init_weights, predict

POLICIES = [Const(0.0), Const(0.5), Mean(), StdNormal(), FittedNormal()]


@pytest.fixture(scope="module")
def toy():
    """A small conv net and a test set labelled by the net itself, so it scores 1.0."""
    net = NetworkSpec((Conv("conv1", 3, 1, 4), ReLU(), MaxPool(), FC("fc1", 3 * 3 * 4, 10), Softmax()), (6, 6, 1), "toy")
    weights = init_weights(net, seed=0)
    images = np.random.default_rng(1).uniform(0, 1, (300, 6, 6, 1)).astype(np.float32)
    return net, weights, Dataset(images, predict(net, weights, images), "test")


def fc_plan(hidden, shape=(2, 3), bias_hidden=False, p=None):
    G = shape[1]
    return LeakagePlan((LayerPlan("fc", "naive", shape, tuple(hidden), bias_hidden, len(hidden) / G if p is None else p),),
                       "random", 0, bias_hidden)


@pytest.mark.parametrize("policy", POLICIES, ids=lambda p: p.name)
def test_revealed_entries_are_copied_bitwise(toy, policy):
    _, weights, _ = toy
    plan = plan_leakage(weights, 0.5, "random", seed=3)
    out = reconstruct(weights, plan, policy, seed=9)
    for layer in plan.layers:
        mask = layer.weight_mask()
        a, b = weights[layer.name]["weight"], out[layer.name]["weight"]
        assert np.array_equal(a[~mask].view(np.uint32), b[~mask].view(np.uint32))


def test_const_zero_at_p_zero_only_zeroes_biases(toy):
    _, weights, _ = toy
    out = reconstruct(weights, plan_leakage(weights, 0.0, hide_biases=True), Const(0.0))
    for name in weights:
        assert np.array_equal(out[name]["weight"], weights[name]["weight"])
        assert not out[name]["bias"].any()
    kept = reconstruct(weights, plan_leakage(weights, 0.0, hide_biases=False), Const(0.0))
    assert kept == weights


def test_fitted_normal_uses_unbiased_spread():
    # revealed column holds [1, 3]; both hidden columns are drawn from N(2, sqrt 2)
    W = np.array([[1.0, 5.0, 7.0], [3.0, 5.0, 7.0]])
    weights = WeightStore({"fc": {"weight": W, "bias": np.zeros(3)}})
    out = reconstruct(weights, fc_plan([1, 2]), FittedNormal(), seed=4)
    z = np.random.default_rng(4).standard_normal((2, 3))
    expected = 2.0 + math.sqrt(2.0) * z
    assert np.allclose(out["fc"]["weight"][:, 1:], expected[:, 1:].astype(np.float32))
    assert out["fc"]["weight"][:, 0].tolist() == [1.0, 3.0]


def test_mean_policy_uses_revealed_mean():
    W = np.array([[1.0, 5.0], [3.0, 5.0]])
    weights = WeightStore({"fc": {"weight": W, "bias": np.ones(2)}})
    out = reconstruct(weights, fc_plan([1], (2, 2), bias_hidden=True), Mean())
    assert out["fc"]["weight"].tolist() == [[1.0, 2.0], [3.0, 2.0]]
    assert out["fc"]["bias"].tolist() == [2.0, 2.0]


@pytest.mark.parametrize("policy", [Mean(), FittedNormal()], ids=lambda p: p.name)
def test_fully_hidden_layer_falls_back_to_const(policy):
    weights = WeightStore({"fc": {"weight": np.full((2, 3), 4.0), "bias": np.ones(3)}})
    out = reconstruct(weights, fc_plan([0, 1, 2], bias_hidden=True), policy, seed=1)
    assert not out["fc"]["weight"].any() and not out["fc"]["bias"].any()


def test_single_revealed_weight_falls_back_for_fitted_normal():
    weights = WeightStore({"fc": {"weight": np.array([[2.0, 9.0, 9.0]]), "bias": np.zeros(3)}})
    out = reconstruct(weights, fc_plan([1, 2], (1, 3)), FittedNormal(), seed=1)
    assert out["fc"]["weight"].tolist() == [[2.0, 0.0, 0.0]]


def test_std_normal_draws_unit_normals():
    weights = WeightStore({"fc": {"weight": np.zeros((200, 50)), "bias": np.zeros(50)}})
    out = reconstruct(weights, fc_plan(range(50), (200, 50)), StdNormal(), seed=2)
    w = out["fc"]["weight"]
    assert abs(w.mean()) < 0.02 and abs(w.std() - 1) < 0.02


def test_policy_names_roundtrip():
    for policy in POLICIES:
        assert policy_from_name(policy.name) == policy
    assert policy_from_name("const") == Const(0.0)
    assert policy_from_name("const(-1.5)") == Const(-1.5)
    with pytest.raises(PlanError):
        policy_from_name("median")


def test_reconstructor_estimator(toy):
    _, weights, _ = toy
    plan = plan_leakage(weights, 0.5, seed=1)
    est = WeightReconstructor(plan=plan, policy="mean", seed=3)
    assert est.fit_transform(weights) == reconstruct(weights, plan, Mean(), 3)
    with pytest.raises(PlanError):
        WeightReconstructor().fit(weights)


# ------------------------------------------------------------------ advantage

@pytest.mark.parametrize("policy", POLICIES, ids=lambda p: p.name)
def test_full_hiding_has_zero_advantage(toy, policy):
    net, weights, test = toy
    (report,) = attacker_advantage(net, weights, test, [1.0], "random", policy, runs=3, seed=5)
    assert report.adv_mean == 0.0 and report.adv_std == 0.0
    assert report.runs == 3


def test_zero_network_scores_the_lowest_class_prior(toy):
    net, weights, test = toy
    labels = np.repeat(np.arange(10), 7)
    balanced = Dataset(np.zeros((70, 6, 6, 1), dtype=np.float32), labels)
    (report,) = attacker_advantage(net, weights, balanced, [1.0], policy=Const(0.0), runs=2)
    assert report.acc_baselines == (0.1, 0.1)


def test_advantage_report_statistics(toy):
    net, weights, test = toy
    reports = attacker_advantage(net, weights, test, [0.0, 0.5, 1.0], "random", Const(0.0), runs=4, seed=2,
                                 hide_biases=False)
    assert [r.p for r in reports] == [0.0, 0.5, 1.0]
    low = reports[0]
    assert low.acc_full == 1.0 and low.acc_attacked == (1.0,) * 4
    for r in reports:
        assert r.runs == 4
        assert math.isclose(r.adv_mean, np.mean(r.acc_attacked) - r.acc_baseline, abs_tol=1e-12)


def test_advantage_is_deterministic(toy):
    net, weights, test = toy
    args = (net, weights, test, [0.0, 0.3], "random", FittedNormal())
    assert attacker_advantage(*args, runs=3, seed=8) == attacker_advantage(*args, runs=3, seed=8)
    assert attacker_advantage(*args, runs=2, seeds=[5, 6]) == attacker_advantage(*args, runs=2, seeds=[5, 6])


def test_run_seeds_are_distinct_and_stable():
    assert run_seeds(0, 10) == run_seeds(0, 10)
    assert len(set(run_seeds(0, 10))) == 10


def test_advantage_argument_errors(toy):
    net, weights, test = toy
    with pytest.raises(ValueError):
        attacker_advantage(net, weights, test, [0.0], runs=0)
    with pytest.raises(ValueError):
        attacker_advantage(net, weights, test, [0.0], runs=2, seeds=[1])


def report(p, attacked, baselines, policy="const(0)"):
    return AdvantageReport(p, "random", policy, True, 0.9, tuple(attacked), tuple(baselines))


def test_lambda_security():
    assert is_lambda_secure(report(1.0, [0.1], [0.1]), 0.01)
    assert not is_lambda_secure(report(0.0, [0.579], [0.1]), 0.05)
    assert is_lambda_secure(report(0.5, [0.25], [0.0]), 0.25)


def test_worst_case_single_report():
    assert worst_case_advantage([report(0.5, [0.3, 0.6, 0.4], [0.1, 0.1, 0.1])]) == {0.5: pytest.approx(0.5)}


def test_worst_case_is_elementwise_max():
    a = [report(0.0, [0.9, 0.5], [0.1, 0.1]), report(0.5, [0.2, 0.3], [0.1, 0.1])]
    b = [report(0.0, [0.4, 0.6], [0.1, 0.1], "mean"), report(0.5, [0.6, 0.1], [0.1, 0.1], "mean")]
    worst = worst_case_advantage(a + b)
    assert worst == {0.0: pytest.approx(0.8), 0.5: pytest.approx(0.5)}


def test_worst_case_rejects_mismatched_grids():
    with pytest.raises(ValueError):
        worst_case_advantage([report(0.0, [0.5], [0.1]), report(0.5, [0.5], [0.1], "mean")])


def test_csv_columns(tmp_path):
    reports = [report(0.0, [0.9, 0.8], [0.1, 0.1]), report(1.0, [0.1, 0.1], [0.1, 0.1])]
    write_runs_csv(tmp_path / "runs.csv", reports, "mnist", header="config=abc seed=0")
    write_aggregate_csv(tmp_path / "agg.csv", reports, "mnist")
    lines = (tmp_path / "runs.csv").read_text().splitlines()
    assert lines[0] == "# config=abc seed=0"
    rows = list(csv.DictReader(lines[1:]))
    assert tuple(rows[0]) == RUN_COLUMNS and len(rows) == 4
    assert float(rows[1]["adv"]) == pytest.approx(0.7)
    agg = list(csv.DictReader((tmp_path / "agg.csv").read_text().splitlines()))
    assert tuple(agg[0]) == AGGREGATE_COLUMNS
    assert float(agg[0]["adv_mean"]) == pytest.approx(0.75) and float(agg[0]["adv_std"]) == pytest.approx(0.05)
    assert float(agg[1]["adv_mean"]) == 0.0

"""Smoke tests for the Python bindings: exercises the core operations
end-to-end on the 3-state reference chain and checks a handful of values
that are easy to verify by hand."""

import math

import pytest

import capsrl


@pytest.fixture(scope="module")
def chain():
    env = capsrl.make_chain3()
    tables = capsrl.solve_all(env)
    return env, tables


def test_chain3_oracle_values(chain):
    env, tables = chain
    assert env.n_states == 3
    assert env.horizon == 1
    # Hand DP: the safe action lands in a zero-cost state worth 0.2 reward,
    # the risky action lands in a unit-cost state worth 1.0 reward.
    assert tables.qr[0][0] == pytest.approx([0.2, 1.0], abs=1e-12)
    assert tables.qc[0][0] == pytest.approx([0.0, 1.0], abs=1e-12)
    assert tables.vc[0][0] == 0.0


def test_decision_rule_switches_on_budget(chain):
    env, tables = chain
    ex = capsrl.make_exact_artifacts(tables, 2)
    assert ex.K == 2
    # No budget: only the safe action is feasible.
    assert ex.action(0.0, 0, 0, 0) == 0
    # Unit budget: the risky action fits and pays more reward.
    assert ex.action(1.0, 0, 0, 0) == 1
    # Head order is [reward-greedy, cost-greedy]: the reward head proposes
    # the risky action (infeasible at zero budget), the cost head the safe one.
    d = ex.decide(0.0, 0, 0, 0)
    assert not d.fallback_used
    assert d.candidate_actions == [1, 0]
    assert d.feasible_mask == [False, True]
    assert d.qr_estimates == pytest.approx([1.0, 0.2], abs=1e-12)


def test_theorem_bound_holds(chain):
    env, tables = chain
    ex = capsrl.make_exact_artifacts(tables, 2)
    for kappa in (0.0, 0.5, 1.0):
        rep = capsrl.verify_theorem_bound(
            env, lambda s, t, c: ex.action(kappa, s, t, c), kappa
        )
        assert rep.applicable
        assert rep.max_violation <= 1e-9
        assert rep.admissibility.passed


def test_lambda_schedule():
    assert capsrl.lambda_schedule(2) == []
    assert capsrl.lambda_schedule(4) == [2.0 / 3.0, 4.0 / 3.0]
    assert capsrl.lambda_schedule(8) == [k / 3.5 for k in range(1, 7)]


def test_train_and_evaluate_roundtrip(tmp_path, chain):
    env, tables = chain
    behavior = capsrl.BehaviorSpec()
    behavior.weight_reward_greedy = 0.3
    behavior.weight_cost_greedy = 0.3
    behavior.weight_uniform = 0.4
    behavior.epsilon_explore = 0.1
    ds = capsrl.generate_dataset(env, behavior, 300, 17, tables)
    assert len(ds) == 300 * env.horizon

    cfg = capsrl.TrainConfig()
    cfg.algo = capsrl.Algo.tabular
    cfg.K = 2
    cfg.gamma = 1.0
    art = capsrl.train(ds, env, cfg)
    assert art.critic_passes == 2
    assert art.extractions == 2
    # Every (s, a, t=0) pair appears in a 300-episode mixed dataset, so the
    # tabular critic reproduces the oracle exactly.
    for a in range(env.n_actions):
        assert art.q_cost_at(0, a, 0) == pytest.approx(tables.qc[0][0][a], abs=1e-12)

    out = tmp_path / "artifact"
    capsrl.save_artifacts(art, out)
    back = capsrl.load_artifacts(out)
    assert back.dataset_hash == art.dataset_hash
    assert back.head_action(1, 0, 0) == art.head_action(1, 0, 0)

    ec = capsrl.EvalConfig()
    ec.mode = capsrl.EvalMode.exact
    ec.thresholds = [0.5, 1.0]
    rep = capsrl.evaluate(back, env, ec)
    assert rep.n_thresholds == 2
    assert rep.n_safe == 2
    # kappa=0.5 forces the safe action (reward 0.2); kappa=1 admits the
    # risky action (reward 1.0, cost 1.0).
    assert rep.rows[0].raw_reward == pytest.approx(0.2, abs=1e-12)
    assert rep.rows[0].raw_cost == pytest.approx(0.0, abs=1e-12)
    assert rep.rows[1].raw_reward == pytest.approx(1.0, abs=1e-12)
    assert rep.rows[1].raw_cost == pytest.approx(1.0, abs=1e-12)
    assert math.isfinite(rep.avg_norm_reward)


def test_dataset_io_is_deterministic(tmp_path, chain):
    env, tables = chain
    behavior = capsrl.BehaviorSpec()
    behavior.weight_reward_greedy = 0.5
    behavior.weight_cost_greedy = 0.25
    behavior.weight_uniform = 0.25
    ds1 = capsrl.generate_dataset(env, behavior, 50, 3, tables)
    ds2 = capsrl.generate_dataset(env, behavior, 50, 3, tables)
    assert capsrl.dataset_hash(ds1) == capsrl.dataset_hash(ds2)
    p = tmp_path / "ds.txt"
    capsrl.save_dataset(ds1, p)
    assert capsrl.dataset_hash(capsrl.load_dataset(p)) == capsrl.dataset_hash(ds1)

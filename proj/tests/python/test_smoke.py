import json

import pytest

import memlen


def test_builtin_analyze_passive_tmaze():
    m = memlen.builtin("passive-tmaze", T=4)
    assert m.horizon == 4
    r = memlen.analyze(m)
    assert r["l_mem"] == 4
    assert r["m_task"] == 4
    assert r["c_task"] == 1
    assert r["theorem1_holds"]


def test_boat_counterexample():
    r = memlen.analyze(memlen.builtin("boat"))
    assert r["num_optimal_policies"] == 2
    assert sorted(r["c_per_policy"]) == [2, 3]
    assert r["c_task"] == 2


def test_json_round_trip():
    m = memlen.builtin("active-tmaze", T=4)
    back = memlen.from_json(m.to_json())
    assert back.num_states == m.num_states
    assert back.to_json() == m.to_json()
    doc = json.loads(memlen.analyze_json(m))
    assert doc["l_mem"] == 4


def test_transforms():
    base = memlen.builtin("random-mdp", T=4, seed=11)
    d = memlen.delay(base, "reward", 3)
    assert memlen.analyze(d)["m_reward"] == 3
    es = memlen.episodic_sum(base)
    assert memlen.analyze(es)["m_reward"] == base.horizon


def test_invalid_inputs_raise():
    with pytest.raises(ValueError):
        memlen.builtin("no-such-task")
    with pytest.raises(ValueError):
        memlen.from_json("not json")


def test_rollout_is_seed_deterministic():
    m = memlen.builtin("passive-tmaze", T=3)
    acts = [1, 1, 1]
    assert memlen.rollout_return(m, 7, acts) == memlen.rollout_return(m, 7, acts)


def test_grad_check_fast_path():
    r = memlen.grad_check(seed=0)
    assert r["passed"]
    assert r["causality_err"] < 1e-12


def test_tabular_training_learns_tiny_task():
    m = memlen.builtin("passive-tmaze", T=3)
    out = memlen.train(m, "tabular", episodes=800, context=3, seed=0)
    assert out["final_greedy_return"] >= memlen.optimal_return(m) - 1e-3

"""Episode runner, trial batches, aggregation, and CSV output."""

import functools

import numpy as np
import pytest

from rmab import instances
from rmab.mdp import ArmMdp, DynamicsEvent, RmabInstance
from rmab.policies import Policy, RandomPolicy, build_policy
from rmab.sim import (
    TrialLog,
    aggregate,
    moving_average,
    read_agg_csv,
    run_episode,
    run_trials,
    write_agg_csv,
    write_raw_csv,
)
from rmab.whittle import index_table

from .oracles import joint_index_policy_value, random_policy_value


class FirstArmsPolicy(Policy):
    """Deterministic stub that also counts per-arm update calls."""

    name = "stub"

    def __init__(self, n_arms, budget):
        super().__init__(n_arms, budget)
        self.update_calls = 0
        self.transitions_seen = []

    def select(self, states, t, rng):
        return np.arange(self.budget)

    def update(self, arm, state, action, reward, next_state):
        self.update_calls += 1
        self.transitions_seen.append((arm, state, action, reward, next_state))


def two_state_deterministic_instance():
    t = np.zeros((2, 2, 2))
    t[:, 0, 1] = 1.0
    t[:, 1, 0] = 1.0
    arm = ArmMdp(t, [[0.0, 1.0], [0.0, 1.0]])
    return RmabInstance(arms=(arm,), budget=1, initial_states=(0,))


def test_deterministic_chain_alternates():
    inst = two_state_deterministic_instance()
    log = run_episode(inst, FirstArmsPolicy(1, 1), T=6, seed=0)
    assert log.per_step_total_reward.tolist() == [0.0, 1.0, 0.0, 1.0, 0.0, 1.0]
    inst1 = RmabInstance(arms=inst.arms, budget=1, initial_states=(1,))
    log1 = run_episode(inst1, FirstArmsPolicy(1, 1), T=6, seed=0)
    assert log1.per_step_total_reward.tolist() == [1.0, 0.0, 1.0, 0.0, 1.0, 0.0]


def test_same_seed_same_log():
    inst = instances.circulant(5, budget=2, seed=1)
    a = run_episode(inst, build_policy("wiql", inst), T=400, seed=9)
    b = run_episode(inst, build_policy("wiql", inst), T=400, seed=9)
    assert np.array_equal(a.per_step_total_reward, b.per_step_total_reward)
    assert np.array_equal(a.actions, b.actions)
    assert a.seed == b.seed == 9


def test_budget_and_restlessness():
    inst = instances.circulant(6, budget=2, seed=2)
    pol = FirstArmsPolicy(6, 2)
    T = 150
    log = run_episode(inst, pol, T=T, seed=3)
    assert log.actions.shape == (T, 2)
    assert all(len(set(row.tolist())) == 2 for row in log.actions)
    # one update per arm per step: arms move with or without interventions
    assert pol.update_calls == 6 * T


def test_total_reward_is_sum_of_individual_rewards():
    inst = instances.maternal_static(2, 2, 2, budget=2)
    pol = FirstArmsPolicy(6, 2)
    log = run_episode(inst, pol, T=50, seed=4)
    by_step = np.zeros(50)
    for k, (arm, state, action, reward, next_state) in enumerate(pol.transitions_seen):
        by_step[k // 6] += reward
    np.testing.assert_allclose(log.per_step_total_reward, by_step)


def test_policy_returning_bad_selection_is_rejected():
    class Broken(Policy):
        name = "broken"

        def select(self, states, t, rng):
            return np.array([0, 0])

    inst = instances.circulant(4, budget=2, seed=0)
    with pytest.raises(RuntimeError, match="invalid selection"):
        run_episode(inst, Broken(4, 2), T=3, seed=0)


def test_opt_long_run_matches_joint_chain_oracle():
    inst = instances.circulant(5, budget=1, seed=3)
    tables = [index_table(arm) for arm in inst.arms]
    oracle = joint_index_policy_value(list(inst.arms), tables, m=1)
    pol = build_policy("opt", inst)
    log = run_episode(inst, pol, T=100_000, seed=5)
    sim_mean = log.per_step_total_reward[10_000:].mean()
    assert abs(sim_mean - oracle) < 0.02


def test_random_trials_match_mixture_oracle():
    inst = instances.circulant(5, budget=1, seed=6)
    per_arm = random_policy_value(inst.arms[0], p_active=1 / 5)
    oracle_total = 5 * per_arm
    logs = run_trials(inst, functools.partial(build_policy, "random", inst), T=10_000,
                      n_trials=30, base_seed=100)
    sim_mean = np.mean([log.per_step_total_reward[2000:].mean() for log in logs])
    assert abs(sim_mean - oracle_total) < 0.02


def test_run_trials_seed_law():
    inst = instances.circulant(3, budget=1, seed=7)
    logs = run_trials(inst, functools.partial(build_policy, "random", inst), T=5,
                      n_trials=30, base_seed=7)
    assert [log.seed for log in logs] == list(range(7, 37))


def test_concurrent_equals_sequential():
    inst = instances.circulant(4, budget=1, seed=8)
    factory = functools.partial(build_policy, "wiql", inst)
    seq = run_trials(inst, factory, T=200, n_trials=4, base_seed=0, workers=1)
    par = run_trials(inst, factory, T=200, n_trials=4, base_seed=0, workers=2)
    for a, b in zip(seq, par):
        assert np.array_equal(a.per_step_total_reward, b.per_step_total_reward)
        assert np.array_equal(a.actions, b.actions)


def test_dynamics_apply_before_selection_and_match_replacement_rows():
    base_rows = np.zeros((2, 2, 2))
    base_rows[:, :, 0] = 1.0  # both states collapse to 0 under either action
    new_rows = np.array([
        [[0.3, 0.7], [0.6, 0.4]],
        [[0.8, 0.2], [0.1, 0.9]],
    ])
    arm = ArmMdp(base_rows, np.zeros((2, 2)))
    replacement = ArmMdp(new_rows, np.zeros((2, 2)))
    change_step = 1001
    inst = RmabInstance(
        arms=(arm, arm),
        budget=1,
        initial_states=(0, 0),
        dynamics_schedule=(DynamicsEvent(step=change_step, arm=0, replacement=replacement),),
    )

    class RecordingRandom(RandomPolicy):
        def __init__(self, *args):
            super().__init__(*args)
            self.seen = []
            self.dynamics_events = []

        def update(self, arm_i, state, action, reward, next_state):
            self.seen.append((arm_i, state, action, next_state))

        def update_batch(self, states, actions, rewards, next_states):
            Policy.update_batch(self, states, actions, rewards, next_states)

        def on_dynamics(self, arm_i, mdp):
            self.dynamics_events.append((len(self.seen) // 2 + 1, arm_i))

    pol = RecordingRandom(2, 1)
    T = 9000
    run_episode(inst, pol, T=T, seed=10)
    assert pol.dynamics_events == [(change_step, 0)]

    post = [(s, a, s2) for (i, s, a, s2) in pol.seen[2 * change_step:] if i == 0]
    counts = np.zeros((2, 2, 2))
    for s, a, s2 in post:
        counts[a, s, s2] += 1
    for a in range(2):
        for s in range(2):
            n = counts[a, s].sum()
            assert n > 200
            freq = counts[a, s] / n
            np.testing.assert_allclose(freq, new_rows[a, s], atol=4.0 / np.sqrt(n))


def test_dynamic_instance_prefix_matches_static():
    static = instances.maternal_static(3, 3, 6, budget=2)
    dynamic = instances.maternal_dynamic(3, 3, 6, change_week=28, budget=2, seed=0)
    log_s = run_episode(static, build_policy("wiql", static), T=40, seed=11)
    log_d = run_episode(dynamic, build_policy("wiql", dynamic), T=40, seed=11)
    np.testing.assert_array_equal(
        log_s.per_step_total_reward[:27], log_d.per_step_total_reward[:27]
    )
    np.testing.assert_array_equal(log_s.actions[:27], log_d.actions[:27])


# --- aggregation ---------------------------------------------------------------


def constant_log(value, T, seed=0):
    return TrialLog(np.full(T, float(value)), np.zeros((T, 1), dtype=np.int64), seed)


def test_aggregate_single_log_identity():
    log = TrialLog(np.array([1.0, 2.0, 3.0]), np.zeros((3, 1), dtype=np.int64), 0)
    series = aggregate([log], window=1)
    np.testing.assert_array_equal(series.mean, log.per_step_total_reward)
    np.testing.assert_array_equal(series.stderr, 0.0)
    np.testing.assert_array_equal(series.moving_avg, log.per_step_total_reward)


def test_aggregate_two_constant_logs():
    series = aggregate([constant_log(3, 10), constant_log(1, 10)])
    np.testing.assert_allclose(series.mean, 2.0)
    np.testing.assert_allclose(series.stderr, 1.0)


def test_full_window_moving_average_is_prefix_mean():
    x = np.array([4.0, 0.0, 2.0, 6.0])
    ma = moving_average(x, window=4)
    np.testing.assert_allclose(ma, [4.0, 2.0, 2.0, 3.0])
    assert ma[-1] == x.mean()


def test_aggregate_requires_logs():
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_rejects_unequal_lengths():
    with pytest.raises(ValueError):
        aggregate([constant_log(1, 5), constant_log(1, 6)])


# --- CSV formats ----------------------------------------------------------------


def test_csv_formats_and_determinism(tmp_path):
    inst = instances.circulant(3, budget=1, seed=12)
    logs = run_trials(inst, functools.partial(build_policy, "random", inst), T=20,
                      n_trials=2, base_seed=0)
    series = aggregate(logs, window=5)

    raw = tmp_path / "raw.csv"
    agg = tmp_path / "agg.csv"
    write_raw_csv(raw, "circulant", "random", logs)
    write_agg_csv(agg, "circulant", "random", series)

    raw_bytes = raw.read_bytes()
    assert b"\r" not in raw_bytes
    lines = raw_bytes.decode().splitlines()
    assert lines[0] == "instance,policy,trial,t,total_reward"
    assert lines[1].startswith("circulant,random,0,1,")
    assert len(lines) == 1 + 2 * 20

    agg_lines = agg.read_bytes().decode().splitlines()
    assert agg_lines[0] == "instance,policy,t,mean,stderr,moving_avg"
    assert len(agg_lines) == 1 + 20
    for line in agg_lines[1:]:
        for cell in line.split(",")[3:]:
            float(cell)  # '.' decimal separator parses directly

    write_raw_csv(tmp_path / "raw2.csv", "circulant", "random", logs)
    assert (tmp_path / "raw2.csv").read_bytes() == raw_bytes

    data = read_agg_csv(agg)
    np.testing.assert_allclose(data["mean"], series.mean)
    np.testing.assert_allclose(data["moving_avg"], series.moving_avg)
    assert data["policy"] == "random"

"""Generators for the benchmark instances and the JSON file format."""

import json
import math

import numpy as np
import pytest

from rmab import instances
from rmab.instances import (
    CATEGORY_A,
    CATEGORY_B,
    CATEGORY_C,
    STATE_L,
    STATE_P,
    STATE_S,
    InstanceFormatError,
    load,
    maternal_arm,
    save,
)
from rmab.mdp import validate_instance
from rmab.whittle import index_table


def all_rows_stochastic(instance):
    return all(
        np.allclose(arm.transitions.sum(axis=2), 1.0, atol=1e-12) for arm in instance.arms
    )


def test_circulant_matrices_exact():
    arm = instances.circulant(3).arms[0]
    np.testing.assert_array_equal(arm.transitions[1, 3], [0.5, 0.0, 0.0, 0.5])
    np.testing.assert_array_equal(arm.transitions[0, 0], [0.5, 0.0, 0.0, 0.5])
    np.testing.assert_array_equal(arm.rewards[0], [-1.0, 0.0, 0.0, 1.0])
    assert all_rows_stochastic(instances.circulant(3))


def test_restart_active_forces_state0():
    arm = instances.restart(2).arms[0]
    for z in range(5):
        np.testing.assert_array_equal(arm.transitions[1, z], [1.0, 0.0, 0.0, 0.0, 0.0])
    assert arm.rewards[0][3] == pytest.approx(0.729)
    assert all_rows_stochastic(instances.restart(2))


def test_restart_passive_structure():
    arm = instances.restart(1).arms[0]
    assert arm.transitions[0, 2, 0] == pytest.approx(0.1)
    assert arm.transitions[0, 2, 3] == pytest.approx(0.9)
    assert arm.transitions[0, 4, 4] == pytest.approx(0.9)


def test_restart_active_reward_override():
    inst = instances.restart(1, active_rewards=[1, 1, 1, 1, 1])
    assert np.all(inst.arms[0].rewards[1] == 1.0)
    # default keeps rewards state-only
    assert np.array_equal(instances.restart(1).arms[0].rewards[0], instances.restart(1).arms[0].rewards[1])


def test_mentoring_rewards_and_band():
    arm = instances.mentoring(1).arms[0]
    assert arm.rewards[0][9] == pytest.approx(math.sqrt(0.9))
    assert arm.rewards[0][0] == 0.0
    assert arm.transitions[0, 0, 0] == pytest.approx(0.3)
    assert arm.transitions[0, 0, 1] == pytest.approx(0.7)
    assert arm.transitions[0, 5, 4] == pytest.approx(0.3)
    assert arm.transitions[0, 5, 6] == pytest.approx(0.7)
    assert arm.transitions[0, 9, 9] == pytest.approx(0.7)
    assert all_rows_stochastic(instances.mentoring(1))


def test_mentoring_literal_defaults_have_zero_indices():
    # printed parameters make both actions identical, so no subsidy is ever needed
    arm = instances.mentoring(1).arms[0]
    np.testing.assert_array_equal(arm.transitions[0], arm.transitions[1])
    table = index_table(arm, eps=1e-3)
    np.testing.assert_allclose(table, 0.0, atol=1e-3)


def test_mentoring_effective_differs():
    arm = instances.mentoring_effective(1).arms[0]
    assert not np.array_equal(arm.transitions[0], arm.transitions[1])


def test_mentoring_rejects_nonstochastic_params():
    with pytest.raises(ValueError):
        instances.mentoring(1, p1=0.7, q1=0.4)


def test_maternal_category_rows():
    arm = maternal_arm(CATEGORY_A)
    assert arm.transitions[1, STATE_P, STATE_S] == pytest.approx(0.8)
    assert arm.transitions[0, STATE_P, STATE_L] == pytest.approx(0.8)
    arm_b = maternal_arm(CATEGORY_B)
    assert arm_b.transitions[1, STATE_P, STATE_S] == pytest.approx(0.4)
    assert arm_b.transitions[0, STATE_P, STATE_L] == pytest.approx(0.6)
    arm_c = maternal_arm(CATEGORY_C)
    assert arm_c.transitions[1, STATE_P, STATE_S] == pytest.approx(0.1)


def test_maternal_pinned_constraints():
    # no P->S without intervention; L->P identical across actions
    for cat in (CATEGORY_A, CATEGORY_B, CATEGORY_C):
        arm = maternal_arm(cat)
        assert arm.transitions[0, STATE_P, STATE_S] == 0.0
        assert arm.transitions[0, STATE_L, STATE_P] == arm.transitions[1, STATE_L, STATE_P]


def test_maternal_static_composition_and_defaults():
    inst = instances.maternal_static()
    assert inst.n_arms == 50
    assert inst.budget == 10
    assert all(z == STATE_P for z in inst.initial_states)
    assert all_rows_stochastic(inst)
    assert validate_instance(inst) == []


def test_maternal_dynamic_schedule():
    inst = instances.maternal_dynamic(10, 10, 30, budget=10, seed=4)
    assert all(ev.step == 28 for ev in inst.dynamics_schedule)
    # A block adopts B parameters, B block adopts C parameters
    by_arm = {ev.arm: ev.replacement for ev in inst.dynamics_schedule}
    assert by_arm[0] == maternal_arm(CATEGORY_B)
    assert by_arm[10] == maternal_arm(CATEGORY_C)
    promoted = [a for a in by_arm if a >= 20]
    assert len(promoted) == 10
    assert all(by_arm[a] == maternal_arm(CATEGORY_A) for a in promoted)
    assert validate_instance(inst) == []


def test_generators_validate_clean_and_deterministic():
    for name, gen in instances.GENERATORS.items():
        inst_a = gen()
        inst_b = gen()
        assert validate_instance(inst_a) == [], name
        assert inst_a == inst_b, name


def test_roundtrip_circulant(tmp_path):
    inst = instances.circulant(5, budget=2, seed=9)
    path = tmp_path / "circ.json"
    save(inst, path)
    assert load(path) == inst


def test_roundtrip_dynamic_instance(tmp_path):
    inst = instances.maternal_dynamic(2, 2, 4, budget=2, seed=1)
    path = tmp_path / "dyn.json"
    save(inst, path)
    assert load(path) == inst


def test_load_rejects_nonstochastic_row(tmp_path):
    inst = instances.circulant(2)
    path = tmp_path / "bad.json"
    save(inst, path)
    doc = json.loads(path.read_text())
    doc["arms"][1]["transitions"][0][2] = [0.5, 0.5, 0.5, 0.0]
    path.write_text(json.dumps(doc))
    with pytest.raises(InstanceFormatError, match=r"arms\[1\]") as err:
        load(path)
    assert "row 2" in str(err.value)


def test_load_rejects_budget_above_n(tmp_path):
    inst = instances.circulant(2)
    path = tmp_path / "overbudget.json"
    save(inst, path)
    doc = json.loads(path.read_text())
    doc["budget"] = 5
    path.write_text(json.dumps(doc))
    with pytest.raises(InstanceFormatError, match="budget"):
        load(path)


def test_load_rejects_malformed_structure(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"budget": 1, "arms": [{"n_states": 2}]}')
    with pytest.raises(InstanceFormatError, match=r"arms\[0\]"):
        load(path)


def test_make_unknown_generator():
    with pytest.raises(KeyError, match="unknown instance"):
        instances.make("not_a_generator")


def test_three_decimal_probabilities_load_cleanly(tmp_path):
    # row sums written with 3 decimals accumulate float drift well under the tolerance
    doc = {
        "budget": 1,
        "arms": [
            {
                "n_states": 3,
                "transitions": [
                    [[0.1, 0.45, 0.45], [0.2, 0.3, 0.5], [0.6, 0.2, 0.2]],
                    [[0.25, 0.7, 0.05], [0.15, 0.15, 0.7], [0.333, 0.333, 0.334]],
                ],
                "rewards": [[0, 1, 2], [0, 1, 2]],
                "initial_state": 0,
            }
        ],
    }
    path = tmp_path / "decimals.json"
    path.write_text(json.dumps(doc))
    inst = load(path)
    assert np.all(inst.arms[0].transitions.sum(axis=2) == 1.0)

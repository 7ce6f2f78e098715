"""Benchmark instance generators and the JSON instance file format.

State conventions: the engagement model orders states worst to best,
0 = lost cause (L), 1 = persuadable (P), 2 = self-motivated (S), with
state-equal rewards (0, 1, 2). Benchmark instances (circulant, restart,
mentoring) use the matrices from the literature verbatim.
"""

from __future__ import annotations

import inspect
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mdp import ArmMdp, DynamicsEvent, RmabInstance, validate, validate_instance

# engagement-model state indices
STATE_L, STATE_P, STATE_S = 0, 1, 2


class InstanceFormatError(ValueError):
    """Instance file fails structural or MDP validation; message names the path."""


@dataclass(frozen=True)
class MaternalCategory:
    """Persuadable-state behavior: P->S chance with intervention, P->L without."""

    label: str
    p_ps: float
    p_pl: float

    def __post_init__(self):
        if not (0.0 <= self.p_ps <= 1.0 and 0.0 <= self.p_pl <= 1.0):
            raise ValueError("category probabilities must lie in [0, 1]")


CATEGORY_A = MaternalCategory("A", p_ps=0.8, p_pl=0.8)
CATEGORY_B = MaternalCategory("B", p_ps=0.4, p_pl=0.6)
CATEGORY_C = MaternalCategory("C", p_ps=0.1, p_pl=0.6)


def _uniform_initials(n_arms: int, n_states: int, seed: int) -> tuple[int, ...]:
    rng = np.random.default_rng(seed)
    return tuple(int(z) for z in rng.integers(0, n_states, size=n_arms))


def circulant(n_arms: int = 5, budget: int = 1, seed: int = 0) -> RmabInstance:
    """Four-state cyclic arms: active walks the cycle up, passive walks it down.

    Rewards (-1, 0, 0, 1) for both actions. Initial states uniform per arm,
    drawn from `seed`.
    """
    p1 = [
        [0.5, 0.5, 0.0, 0.0],
        [0.0, 0.5, 0.5, 0.0],
        [0.0, 0.0, 0.5, 0.5],
        [0.5, 0.0, 0.0, 0.5],
    ]
    p0 = [
        [0.5, 0.0, 0.0, 0.5],
        [0.5, 0.5, 0.0, 0.0],
        [0.0, 0.5, 0.5, 0.0],
        [0.0, 0.0, 0.5, 0.5],
    ]
    r = [-1.0, 0.0, 0.0, 1.0]
    arm = ArmMdp([p0, p1], [r, r]).normalized()
    return RmabInstance(
        arms=(arm,) * n_arms,
        budget=budget,
        initial_states=_uniform_initials(n_arms, 4, seed),
    )


def restart(
    n_arms: int = 5,
    budget: int = 1,
    seed: int = 0,
    active_rewards: list[float] | None = None,
) -> RmabInstance:
    """Five-state arms where the active action forces a restart at state 0.

    Passive drifts upward with probability 0.9 and restarts with 0.1; the
    passive reward at state Z is 0.9**Z. The source leaves the active-action
    reward open; default reuses the same state reward (state-only rewards),
    override with `active_rewards`.
    """
    n = 5
    p_active, q_active = 1.0, 0.0
    p_passive, q_passive = 0.1, 0.9
    t = np.zeros((2, n, n))
    for z in range(n):
        up = min(z + 1, n - 1)
        t[0, z, 0] += p_passive
        t[0, z, up] += q_passive
        t[1, z, 0] += p_active
        t[1, z, up] += q_active
    passive_r = [0.9**z for z in range(n)]
    active_r = list(passive_r) if active_rewards is None else [float(x) for x in active_rewards]
    arm = ArmMdp(t, [passive_r, active_r]).normalized()
    return RmabInstance(
        arms=(arm,) * n_arms,
        budget=budget,
        initial_states=_uniform_initials(n_arms, n, seed),
    )


def _band_matrix(n: int, p: float, q: float) -> np.ndarray:
    """Birth-death band: q one state down, p one state up, boundaries self-loop."""
    m = np.zeros((n, n))
    for z in range(n):
        m[z, max(z - 1, 0)] += q
        m[z, min(z + 1, n - 1)] += p
    return m


def mentoring(
    n_arms: int = 5,
    p1: float = 0.7,
    q1: float = 0.3,
    p0: float = 0.7,
    q0: float = 0.3,
    budget: int = 1,
    seed: int = 0,
) -> RmabInstance:
    """Ten-state study-level arms with reward sqrt(Z/10).

    The literal default parameters make both actions identical (so all
    Whittle indices are 0); see `mentoring_effective` for a variant where
    the active action actually helps.
    """
    for name, (p, q) in {"1": (p1, q1), "0": (p0, q0)}.items():
        if abs(p + q - 1.0) > 1e-9:
            raise ValueError(f"p{name} + q{name} must equal 1, got {p + q}")
    n = 10
    t = np.stack([_band_matrix(n, p0, q0), _band_matrix(n, p1, q1)])
    r = [math.sqrt(z / 10.0) for z in range(n)]
    arm = ArmMdp(t, [r, r]).normalized()
    return RmabInstance(
        arms=(arm,) * n_arms,
        budget=budget,
        initial_states=_uniform_initials(n_arms, n, seed),
    )


def mentoring_effective(n_arms: int = 5, budget: int = 1, seed: int = 0) -> RmabInstance:
    """Mentoring variant where passive mirrors active: arms drift down unaided."""
    return mentoring(n_arms, p1=0.7, q1=0.3, p0=0.3, q0=0.7, budget=budget, seed=seed)


def maternal_arm(
    category: MaternalCategory,
    s_stay: float = 0.9,
    l_up: float = 0.1,
    active_split: float = 0.5,
) -> ArmMdp:
    """Three-state S/P/L engagement arm for one behavior category.

    Pinned structure: no P->S transition without intervention; L->P happens
    with the same small probability with or without intervention; S and L
    rows are action-independent. At P under intervention, mass not going to
    S splits between staying at P and dropping to L by `active_split`.
    """
    t = np.zeros((2, 3, 3))
    for a in range(2):
        t[a, STATE_S] = [0.0, 1.0 - s_stay, s_stay]
        t[a, STATE_L] = [1.0 - l_up, l_up, 0.0]
    rem = 1.0 - category.p_ps
    t[1, STATE_P] = [rem * active_split, rem * (1.0 - active_split), category.p_ps]
    t[0, STATE_P] = [category.p_pl, 1.0 - category.p_pl, 0.0]
    r = [0.0, 1.0, 2.0]
    return ArmMdp(t, [r, r]).normalized()


def maternal_static(
    n_a: int = 10,
    n_b: int = 10,
    n_c: int = 30,
    budget: int = 10,
) -> RmabInstance:
    """Static engagement cohort: n_a/n_b/n_c arms of categories A/B/C.

    All arms start in the persuadable state. Arms are ordered A block, B
    block, C block.
    """
    arms = (
        (maternal_arm(CATEGORY_A),) * n_a
        + (maternal_arm(CATEGORY_B),) * n_b
        + (maternal_arm(CATEGORY_C),) * n_c
    )
    return RmabInstance(
        arms=arms,
        budget=budget,
        initial_states=(STATE_P,) * len(arms),
    )


def maternal_dynamic(
    n_a: int = 10,
    n_b: int = 10,
    n_c: int = 30,
    change_week: int = 28,
    budget: int = 10,
    seed: int = 0,
) -> RmabInstance:
    """Engagement cohort whose behavior shifts at `change_week`.

    At the change, category-A arms adopt B's parameters, B arms adopt C's,
    and n_a arms drawn from the C block (seeded) adopt A's. Before the
    change the instance behaves exactly like `maternal_static`.
    """
    static = maternal_static(n_a, n_b, n_c, budget=budget)
    arm_b = maternal_arm(CATEGORY_B)
    arm_c = maternal_arm(CATEGORY_C)
    arm_a = maternal_arm(CATEGORY_A)
    events = []
    for i in range(n_a):
        events.append(DynamicsEvent(step=change_week, arm=i, replacement=arm_b))
    for i in range(n_a, n_a + n_b):
        events.append(DynamicsEvent(step=change_week, arm=i, replacement=arm_c))
    rng = np.random.default_rng(seed)
    promoted = rng.choice(np.arange(n_a + n_b, n_a + n_b + n_c), size=min(n_a, n_c), replace=False)
    for i in sorted(int(x) for x in promoted):
        events.append(DynamicsEvent(step=change_week, arm=i, replacement=arm_a))
    return RmabInstance(
        arms=static.arms,
        budget=budget,
        initial_states=static.initial_states,
        dynamics_schedule=tuple(events),
    )


def action_symmetric(n_arms: int = 1, budget: int = 1, seed: int = 0) -> RmabInstance:
    """Arms whose actions are indistinguishable; every Whittle index is 0."""
    rows = [
        [0.6, 0.3, 0.1],
        [0.2, 0.5, 0.3],
        [0.1, 0.4, 0.5],
    ]
    r = [0.0, 1.0, 2.0]
    arm = ArmMdp([rows, rows], [r, r]).normalized()
    return RmabInstance(
        arms=(arm,) * n_arms,
        budget=budget,
        initial_states=_uniform_initials(n_arms, 3, seed),
    )


def nonindexable(n_arms: int = 1, budget: int = 1, seed: int = 0) -> RmabInstance:
    """A 3-state arm whose passive set is not monotone in the subsidy.

    Found by randomized counterexample search with check_indexability
    (average-reward mode): state 2 leaves the passive set as the subsidy
    grows through about -0.35.
    """
    p0 = [
        [0.71, 0.28, 0.01],
        [0.04, 0.06, 0.90],
        [0.97, 0.01, 0.02],
    ]
    p1 = [
        [0.97, 0.01, 0.02],
        [0.12, 0.88, 0.00],
        [0.00, 0.91, 0.09],
    ]
    r = [0.45, 0.26, 0.96]
    arm = ArmMdp([p0, p1], [r, r]).normalized()
    return RmabInstance(
        arms=(arm,) * n_arms,
        budget=budget,
        initial_states=_uniform_initials(n_arms, 3, seed),
    )


GENERATORS = {
    "circulant": circulant,
    "restart": restart,
    "mentoring": mentoring,
    "mentoring_effective": mentoring_effective,
    "maternal_static": maternal_static,
    "maternal_dynamic": maternal_dynamic,
    "action_symmetric": action_symmetric,
    "nonindexable": nonindexable,
}


def make(name: str, **params) -> RmabInstance:
    """Build a named instance; unknown names list the available generators."""
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise KeyError(f"unknown instance {name!r}; available: {', '.join(sorted(GENERATORS))}") from None
    return gen(**params)


def generator_defaults(name: str) -> dict:
    """Default parameters of a registered generator, for CLI listings."""
    sig = inspect.signature(GENERATORS[name])
    return {k: p.default for k, p in sig.parameters.items() if p.default is not inspect.Parameter.empty}


# --- instance file format ---------------------------------------------------


def _arm_to_obj(arm: ArmMdp, initial_state: int | None = None) -> dict:
    obj = {
        "n_states": arm.n_states,
        "transitions": [arm.transitions[0].tolist(), arm.transitions[1].tolist()],
        "rewards": [arm.rewards[0].tolist(), arm.rewards[1].tolist()],
    }
    if initial_state is not None:
        obj["initial_state"] = initial_state
    return obj


def save(instance: RmabInstance, path: str | Path) -> None:
    """Write the instance as a JSON document (see `load` for the schema)."""
    doc = {
        "budget": instance.budget,
        "arms": [
            _arm_to_obj(arm, initial_state=instance.initial_states[i])
            for i, arm in enumerate(instance.arms)
        ],
        "dynamics": [
            {"step": ev.step, "arm": ev.arm, "replacement": _arm_to_obj(ev.replacement)}
            for ev in instance.dynamics_schedule
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _require(cond: bool, path: str, msg: str):
    if not cond:
        raise InstanceFormatError(f"{path}: {msg}")


def _parse_arm(obj, path: str) -> ArmMdp:
    _require(isinstance(obj, dict), path, "must be an object")
    for key in ("n_states", "transitions", "rewards"):
        _require(key in obj, path, f"missing field {key!r}")
    n = obj["n_states"]
    _require(isinstance(n, int) and n >= 1, f"{path}.n_states", "must be a positive integer")
    tr = obj["transitions"]
    _require(isinstance(tr, list) and len(tr) == 2, f"{path}.transitions",
             "must hold two matrices (passive, active)")
    for a in range(2):
        _require(isinstance(tr[a], list) and len(tr[a]) == n, f"{path}.transitions[{a}]",
                 f"must hold {n} rows")
        for i, row in enumerate(tr[a]):
            _require(isinstance(row, list) and len(row) == n, f"{path}.transitions[{a}][{i}]",
                     f"must hold {n} entries")
            for j, x in enumerate(row):
                _require(isinstance(x, (int, float)) and not isinstance(x, bool),
                         f"{path}.transitions[{a}][{i}][{j}]", "must be a number")
    rw = obj["rewards"]
    _require(isinstance(rw, list) and len(rw) == 2, f"{path}.rewards",
             "must hold two per-state lists (passive, active)")
    for a in range(2):
        _require(isinstance(rw[a], list) and len(rw[a]) == n, f"{path}.rewards[{a}]",
                 f"must hold {n} entries")
        for j, x in enumerate(rw[a]):
            _require(isinstance(x, (int, float)) and not isinstance(x, bool),
                     f"{path}.rewards[{a}][{j}]", "must be a number")
    arm = ArmMdp(tr, rw)
    violations = validate(arm)
    if violations:
        raise InstanceFormatError(f"{path}: " + "; ".join(violations))
    return arm.normalized()


def load(path: str | Path) -> RmabInstance:
    """Parse and validate an instance file; any failure names the offending path.

    Schema: `{"budget": int, "arms": [{"n_states": int, "transitions":
    [[..],[..]], "rewards": [[..],[..]], "initial_state": int}, ...],
    "dynamics": [{"step": int, "arm": int, "replacement": <arm object>}]}`.
    Transition rows are renormalized once after validation.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"$: not valid JSON ({exc})") from exc
    _require(isinstance(doc, dict), "$", "document must be an object")
    _require("budget" in doc, "$", "missing field 'budget'")
    _require(isinstance(doc["budget"], int), "$.budget", "must be an integer")
    _require("arms" in doc, "$", "missing field 'arms'")
    _require(isinstance(doc["arms"], list) and doc["arms"], "$.arms", "must be a non-empty list")

    arms = []
    initial_states = []
    for i, obj in enumerate(doc["arms"]):
        arm_path = f"$.arms[{i}]"
        arm = _parse_arm(obj, arm_path)
        _require("initial_state" in obj, arm_path, "missing field 'initial_state'")
        z = obj["initial_state"]
        _require(isinstance(z, int), f"{arm_path}.initial_state", "must be an integer")
        arms.append(arm)
        initial_states.append(z)

    events = []
    for k, obj in enumerate(doc.get("dynamics", [])):
        ev_path = f"$.dynamics[{k}]"
        _require(isinstance(obj, dict), ev_path, "must be an object")
        for key in ("step", "arm", "replacement"):
            _require(key in obj, ev_path, f"missing field {key!r}")
        _require(isinstance(obj["step"], int), f"{ev_path}.step", "must be an integer")
        _require(isinstance(obj["arm"], int), f"{ev_path}.arm", "must be an integer")
        events.append(
            DynamicsEvent(
                step=obj["step"],
                arm=obj["arm"],
                replacement=_parse_arm(obj["replacement"], f"{ev_path}.replacement"),
            )
        )

    instance = RmabInstance(
        arms=tuple(arms),
        budget=doc["budget"],
        initial_states=tuple(initial_states),
        dynamics_schedule=tuple(events),
    )
    violations = validate_instance(instance)
    if violations:
        raise InstanceFormatError("; ".join(f"$.{v}" for v in violations))
    return instance

"""Arm-level MDPs and the multi-arm instance container.

An arm is a finite MDP with two actions: 0 (passive) and 1 (active).
Transition sampling is seeded and uses inverse-CDF lookup over the row in
state-index order, so equal generator states give bit-identical draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

ROW_SUM_TOL = 1e-9

PASSIVE = 0
ACTIVE = 1


@dataclass(frozen=True, eq=False)
class ArmMdp:
    """One arm: transitions (2, S, S) indexed by action, rewards (2, S).

    Arrays are copied, cast to float64 and frozen. `rewards[a, z]` is the
    reward for taking action `a` in state `z`; instances with state-only
    rewards simply duplicate the row across actions.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    # cumulative row sums, precomputed for inverse-CDF sampling
    _cumulative: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.array(self.transitions, dtype=np.float64)
        r = np.array(self.rewards, dtype=np.float64)
        if t.ndim != 3 or t.shape[0] != 2 or t.shape[1] != t.shape[2]:
            raise ValueError(f"transitions must have shape (2, S, S), got {t.shape}")
        if r.shape != (2, t.shape[1]):
            raise ValueError(f"rewards must have shape (2, {t.shape[1]}), got {r.shape}")
        c = np.cumsum(t, axis=2)
        for a in (t, r, c):
            a.flags.writeable = False
        object.__setattr__(self, "transitions", t)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "_cumulative", c)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ArmMdp):
            return NotImplemented
        return np.array_equal(self.transitions, other.transitions) and np.array_equal(
            self.rewards, other.rewards
        )

    @property
    def n_states(self) -> int:
        return self.transitions.shape[1]

    def normalized(self) -> "ArmMdp":
        """Copy with each transition row renormalized to sum exactly to 1.

        Meant to be applied once after validation so that float drift in
        hand-written probabilities (e.g. three-decimal configs) never reaches
        the sampler. Idempotent: already-exact rows are returned bit-identical,
        so save/load round trips are stable.
        """
        t = np.array(self.transitions)
        for a in range(2):
            for i in range(t.shape[1]):
                row = t[a, i]
                total = row.sum()
                if total != 1.0:
                    row /= total
                    # absorb residual float drift into the largest entry
                    row[int(np.argmax(row))] += 1.0 - row.sum()
        return ArmMdp(t, self.rewards)


def validate(mdp: ArmMdp) -> list[str]:
    """Check ArmMdp invariants; return a list of violations (empty = ok).

    Every violation names the offending coordinates. Never raises.
    """
    violations = []
    s = mdp.n_states
    if s < 2:
        violations.append(f"n_states must be >= 2, got {s}")
    for a in range(2):
        for i in range(s):
            row = mdp.transitions[a, i]
            for j in range(s):
                p = row[j]
                if not (0.0 <= p <= 1.0) or not np.isfinite(p):
                    violations.append(
                        f"transitions[{a}][{i}][{j}] = {p} outside [0, 1]"
                    )
            total = row.sum()
            if abs(total - 1.0) > ROW_SUM_TOL:
                violations.append(
                    f"transitions[{a}] row {i} sums to {total} (must be 1 within {ROW_SUM_TOL})"
                )
    if not np.all(np.isfinite(mdp.rewards)):
        bad = np.argwhere(~np.isfinite(mdp.rewards))
        for a, z in bad:
            violations.append(f"rewards[{a}][{z}] = {mdp.rewards[a, z]} is not finite")
    return violations


def reward(mdp: ArmMdp, state: int, action: int) -> float:
    """Reward for taking `action` in `state`. Pure lookup."""
    _check_indices(mdp, state, action)
    return float(mdp.rewards[action, state])


def sample_transition(mdp: ArmMdp, state: int, action: int, rng: np.random.Generator) -> int:
    """Draw the next state from the row P(state, action, .).

    Inverse-CDF over the row in state-index order: one uniform draw per call,
    next state is the first index whose cumulative mass exceeds the draw.
    """
    _check_indices(mdp, state, action)
    u = rng.random()
    row = mdp._cumulative[action, state]
    j = int(np.searchsorted(row, u, side="right"))
    return min(j, mdp.n_states - 1)


def _check_indices(mdp: ArmMdp, state: int, action: int):
    if action not in (0, 1):
        raise IndexError(f"action must be 0 or 1, got {action}")
    if not 0 <= state < mdp.n_states:
        raise IndexError(f"state {state} out of range for {mdp.n_states}-state arm")


@dataclass(frozen=True)
class DynamicsEvent:
    """Scheduled replacement of one arm's MDP at the start of step `step`."""

    step: int
    arm: int
    replacement: ArmMdp


@dataclass(frozen=True, eq=False)
class RmabInstance:
    """N arms, a per-step activation budget, and optional scheduled dynamics."""

    arms: tuple[ArmMdp, ...]
    budget: int
    initial_states: tuple[int, ...]
    dynamics_schedule: tuple[DynamicsEvent, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(self, "initial_states", tuple(int(z) for z in self.initial_states))
        object.__setattr__(self, "dynamics_schedule", tuple(self.dynamics_schedule))

    def __eq__(self, other) -> bool:
        if not isinstance(other, RmabInstance):
            return NotImplemented
        return (
            self.arms == other.arms
            and self.budget == other.budget
            and self.initial_states == other.initial_states
            and self.dynamics_schedule == other.dynamics_schedule
        )

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    def with_budget(self, budget: int) -> "RmabInstance":
        return replace(self, budget=budget)


def validate_instance(instance: RmabInstance) -> list[str]:
    """Check RmabInstance invariants, including all arm invariants."""
    violations = []
    n = instance.n_arms
    if n == 0:
        violations.append("instance has no arms")
    if not 1 <= instance.budget <= max(n, 1):
        violations.append(f"budget must satisfy 1 <= M <= {n}, got {instance.budget}")
    for i, arm in enumerate(instance.arms):
        violations.extend(f"arms[{i}]: {v}" for v in validate(arm))
    if len(instance.initial_states) != n:
        violations.append(
            f"initial_states has length {len(instance.initial_states)}, expected {n}"
        )
    else:
        for i, z in enumerate(instance.initial_states):
            if not 0 <= z < instance.arms[i].n_states:
                violations.append(f"initial_states[{i}] = {z} out of range")
    last_step = 0
    for k, ev in enumerate(instance.dynamics_schedule):
        if ev.step < 1:
            violations.append(f"dynamics[{k}].step = {ev.step} must be >= 1")
        if ev.step < last_step:
            violations.append(f"dynamics[{k}].step = {ev.step} not sorted ascending")
        last_step = max(last_step, ev.step)
        if not 0 <= ev.arm < n:
            violations.append(f"dynamics[{k}].arm = {ev.arm} out of range")
        else:
            violations.extend(f"dynamics[{k}].replacement: {v}" for v in validate(ev.replacement))
            if ev.replacement.n_states != instance.arms[ev.arm].n_states:
                violations.append(
                    f"dynamics[{k}].replacement has {ev.replacement.n_states} states, "
                    f"arm {ev.arm} has {instance.arms[ev.arm].n_states}"
                )
    return violations

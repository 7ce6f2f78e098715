"""Arm-selection policies behind a uniform select/update contract.

Every policy selects exactly M distinct arms per step and observes every
arm's (state, action, reward, next state) transition afterwards, because
arms are restless: they move and pay out whether selected or not.

Policies are addressed by name: wiql, opt, ab, fu, greedy, random, myopic.
"""

from __future__ import annotations

import math

import numpy as np

from . import whittle
from .mdp import ArmMdp, RmabInstance


def top_m(values, m: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of the m largest values, ties broken uniformly at random.

    Returns sorted arm indices. Consumes one uniform per entry as the
    tie-break key.
    """
    values = np.asarray(values, dtype=np.float64)
    if not 0 < m <= values.size:
        raise ValueError(f"m must be in [1, {values.size}], got {m}")
    order = np.lexsort((rng.random(values.size), -values))
    return np.sort(order[:m])


class Policy:
    """Base select/update contract; subclasses learn or look up priorities."""

    name = "policy"

    def __init__(self, n_arms: int, budget: int):
        if not 1 <= budget <= n_arms:
            raise ValueError(f"budget must satisfy 1 <= M <= {n_arms}, got {budget}")
        self.n_arms = n_arms
        self.budget = budget

    def select(self, states: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
        """Return exactly `budget` distinct arm indices for step t >= 1."""
        raise NotImplementedError

    def update(self, arm: int, state: int, action: int, reward: float, next_state: int) -> None:
        """Observe one arm's transition. Default: stateless policy, no-op."""

    def update_batch(self, states, actions, rewards, next_states) -> None:
        """Observe all N transitions of one step.

        Equivalent to N `update` calls in arm order; subclasses override
        with a vectorized version of the same arithmetic.
        """
        for i in range(self.n_arms):
            self.update(i, int(states[i]), int(actions[i]), float(rewards[i]), int(next_states[i]))

    def on_dynamics(self, arm: int, mdp: ArmMdp) -> None:
        """Notification that an arm's true MDP was replaced mid-episode."""


class WiqlPolicy(Policy):
    """Index-estimate Q-learning with epsilon-decay selection.

    Keeps per-arm Q(state, action) tables initialized to zero and treats the
    difference Q(z, 1) - Q(z, 0) as the arm's priority at state z. At step t
    the whole M-subset is drawn uniformly with probability N/(N+t), otherwise
    the top M arms by priority are taken with uniform tie-breaks. The Q
    update averages sampled targets with step size 1/(visits + 1).

    `epsilon_override` pins the exploration probability (1.0 reproduces the
    random baseline); `alpha_override` maps the post-increment visit count to
    a step size (test hook).
    """

    name = "wiql"

    def __init__(
        self,
        n_arms: int,
        budget: int,
        n_states: int,
        discount: float = 1.0,
        epsilon_override: float | None = None,
        alpha_override=None,
    ):
        super().__init__(n_arms, budget)
        self.n_states = n_states
        self.discount = float(discount)
        self.epsilon_override = epsilon_override
        self.alpha_override = alpha_override
        self.q = np.zeros((n_arms, n_states, 2))
        self.counts = np.zeros((n_arms, n_states, 2), dtype=np.int64)
        self.lambda_est = np.zeros((n_arms, n_states))

    def epsilon(self, t: int) -> float:
        if self.epsilon_override is not None:
            return self.epsilon_override
        return self.n_arms / (self.n_arms + t)

    def select(self, states, t, rng):
        if t < 1:
            raise ValueError(f"step index must be >= 1, got {t}")
        explore = rng.random() < self.epsilon(t)
        if explore:
            return np.sort(rng.choice(self.n_arms, size=self.budget, replace=False))
        priorities = self.lambda_est[np.arange(self.n_arms), states]
        return top_m(priorities, self.budget, rng)

    def _alpha(self, count):
        if self.alpha_override is not None:
            return self.alpha_override(count)
        return 1.0 / (count + 1.0)

    def update(self, arm, state, action, reward, next_state):
        self.counts[arm, state, action] += 1
        alpha = self._alpha(self.counts[arm, state, action])
        target = reward + self.discount * self.q[arm, next_state].max()
        self.q[arm, state, action] = (1.0 - alpha) * self.q[arm, state, action] + alpha * target
        self.lambda_est[arm, state] = self.q[arm, state, 1] - self.q[arm, state, 0]

    def update_batch(self, states, actions, rewards, next_states):
        if self.alpha_override is not None:
            super().update_batch(states, actions, rewards, next_states)
            return
        arms = np.arange(self.n_arms)
        self.counts[arms, states, actions] += 1
        alpha = 1.0 / (self.counts[arms, states, actions] + 1.0)
        targets = rewards + self.discount * self.q[arms, next_states].max(axis=1)
        self.q[arms, states, actions] = (1.0 - alpha) * self.q[arms, states, actions] + alpha * targets
        self.lambda_est[arms, states] = self.q[arms, states, 1] - self.q[arms, states, 0]


class OptIndexPolicy(Policy):
    """Plays the exact Whittle-index priority using the true transition model."""

    name = "opt"

    def __init__(self, n_arms: int, budget: int, index_tables, solver_kwargs: dict | None = None):
        super().__init__(n_arms, budget)
        self.index_tables = [np.asarray(tab, dtype=np.float64) for tab in index_tables]
        self.solver_kwargs = dict(solver_kwargs or {})

    def select(self, states, t, rng):
        priorities = np.array([self.index_tables[i][states[i]] for i in range(self.n_arms)])
        return top_m(priorities, self.budget, rng)

    def on_dynamics(self, arm, mdp):
        self.index_tables[arm] = whittle.index_table(mdp, **self.solver_kwargs)


class RandomPolicy(Policy):
    """Uniform M-subset each step; the epsilon=1 edge of the epsilon-decay scheme."""

    name = "random"

    def select(self, states, t, rng):
        return np.sort(rng.choice(self.n_arms, size=self.budget, replace=False))


class GreedyPolicy(Policy):
    """Ranks arms by observed mean-reward gap between the two actions.

    Unvisited (state, action) cells count as mean 0.
    """

    name = "greedy"

    def __init__(self, n_arms: int, budget: int, n_states: int):
        super().__init__(n_arms, budget)
        self.totals = np.zeros((n_arms, n_states, 2))
        self.counts = np.zeros((n_arms, n_states, 2), dtype=np.int64)

    def select(self, states, t, rng):
        arms = np.arange(self.n_arms)
        counts = self.counts[arms, states]
        totals = self.totals[arms, states]
        means = np.divide(totals, counts, out=np.zeros_like(totals), where=counts > 0)
        return top_m(means[:, 1] - means[:, 0], self.budget, rng)

    def update(self, arm, state, action, reward, next_state):
        self.totals[arm, state, action] += reward
        self.counts[arm, state, action] += 1

    def update_batch(self, states, actions, rewards, next_states):
        arms = np.arange(self.n_arms)
        self.totals[arms, states, actions] += rewards
        self.counts[arms, states, actions] += 1


class AbPolicy(Policy):
    """Two-timescale Q-learning with a per-arm scalar subsidy reference.

    Each arm's Q table learns on the fast timescale from rewards shaped by
    its own reference subsidy (the passive action earns the subsidy as a
    bonus); the reference itself relaxes on a slow timescale toward the
    Q-gap at the visited state. Selection takes the top M references.
    """

    name = "ab"

    def __init__(self, n_arms: int, budget: int, n_states: int, discount: float = 1.0,
                 beta_scale: float = 100.0):
        super().__init__(n_arms, budget)
        self.discount = float(discount)
        self.beta_scale = float(beta_scale)
        self.q = np.zeros((n_arms, n_states, 2))
        self.counts = np.zeros((n_arms, n_states, 2), dtype=np.int64)
        self.lambda_ref = np.zeros(n_arms)
        self._observations = 0

    def _beta(self, t: int) -> float:
        return 1.0 / (1.0 + t * math.log(t + 2.0) / self.beta_scale)

    def select(self, states, t, rng):
        return top_m(self.lambda_ref, self.budget, rng)

    def update(self, arm, state, action, reward, next_state):
        self._observations += 1
        t = (self._observations + self.n_arms - 1) // self.n_arms
        self.counts[arm, state, action] += 1
        alpha = 1.0 / (self.counts[arm, state, action] + 1.0)
        shaped = reward + (1 - action) * self.lambda_ref[arm]
        target = shaped + self.discount * self.q[arm, next_state].max()
        self.q[arm, state, action] = (1.0 - alpha) * self.q[arm, state, action] + alpha * target
        gap = self.q[arm, state, 1] - self.q[arm, state, 0]
        self.lambda_ref[arm] += self._beta(t) * (gap - self.lambda_ref[arm])

    def update_batch(self, states, actions, rewards, next_states):
        self._observations += self.n_arms
        t = self._observations // self.n_arms
        arms = np.arange(self.n_arms)
        self.counts[arms, states, actions] += 1
        alpha = 1.0 / (self.counts[arms, states, actions] + 1.0)
        shaped = rewards + (1 - actions) * self.lambda_ref
        targets = shaped + self.discount * self.q[arms, next_states].max(axis=1)
        self.q[arms, states, actions] = (1.0 - alpha) * self.q[arms, states, actions] + alpha * targets
        gaps = self.q[arms, states, 1] - self.q[arms, states, 0]
        self.lambda_ref += self._beta(t) * (gaps - self.lambda_ref)


class FuPolicy(Policy):
    """Subsidy-grid Q-learning: one Q layer per candidate subsidy.

    Every layer learns from the reward plus its subsidy on passive steps.
    An arm's priority is the grid subsidy whose layer shows the smallest
    absolute Q-gap at the arm's current state.
    """

    name = "fu"

    def __init__(self, n_arms: int, budget: int, n_states: int,
                 lambdas=(-1.0, -0.5, 0.0, 0.5, 1.0), discount: float = 1.0,
                 alpha_override=None):
        super().__init__(n_arms, budget)
        self.lambdas = np.asarray(tuple(lambdas), dtype=np.float64)
        if self.lambdas.size == 0:
            raise ValueError("lambda grid must not be empty")
        self.discount = float(discount)
        self.alpha_override = alpha_override
        self.q = np.zeros((n_arms, self.lambdas.size, n_states, 2))
        self.counts = np.zeros((n_arms, n_states, 2), dtype=np.int64)

    def select(self, states, t, rng):
        arms = np.arange(self.n_arms)
        gaps = np.abs(self.q[arms, :, states, 1] - self.q[arms, :, states, 0])
        priorities = self.lambdas[np.argmin(gaps, axis=1)]
        return top_m(priorities, self.budget, rng)

    def update(self, arm, state, action, reward, next_state):
        self.counts[arm, state, action] += 1
        if self.alpha_override is not None:
            alpha = self.alpha_override(self.counts[arm, state, action])
        else:
            alpha = 1.0 / (self.counts[arm, state, action] + 1.0)
        shaped = reward + self.lambdas * (1 - action)
        targets = shaped + self.discount * self.q[arm, :, next_state].max(axis=1)
        self.q[arm, :, state, action] = (1.0 - alpha) * self.q[arm, :, state, action] + alpha * targets

    def update_batch(self, states, actions, rewards, next_states):
        if self.alpha_override is not None:
            super().update_batch(states, actions, rewards, next_states)
            return
        arms = np.arange(self.n_arms)
        self.counts[arms, states, actions] += 1
        alpha = 1.0 / (self.counts[arms, states, actions] + 1.0)
        shaped = rewards[:, None] + self.lambdas[None, :] * (1 - actions)[:, None]
        targets = shaped + self.discount * self.q[arms, :, next_states].max(axis=2)
        self.q[arms, :, states, actions] = (
            (1.0 - alpha[:, None]) * self.q[arms, :, states, actions] + alpha[:, None] * targets
        )


class MyopicPolicy(Policy):
    """Intervenes on the arms most likely to slide to a worse state unaided.

    Uses the true passive transition probabilities; assumes states are
    ordered worst to best (as in the engagement instances).
    """

    name = "myopic"

    def __init__(self, n_arms: int, budget: int, arms: list[ArmMdp]):
        super().__init__(n_arms, budget)
        self.risk = [self._drop_risk(arm) for arm in arms]

    @staticmethod
    def _drop_risk(arm: ArmMdp) -> np.ndarray:
        return np.array([arm.transitions[0, z, :z].sum() for z in range(arm.n_states)])

    def select(self, states, t, rng):
        priorities = np.array([self.risk[i][states[i]] for i in range(self.n_arms)])
        return top_m(priorities, self.budget, rng)

    def on_dynamics(self, arm, mdp):
        self.risk[arm] = self._drop_risk(mdp)


POLICY_NAMES = ("wiql", "opt", "ab", "fu", "greedy", "random", "myopic")


def build_policy(name: str, instance: RmabInstance, budget: int | None = None, **params) -> Policy:
    """Construct a policy by name for an instance.

    Model-aware policies (opt, myopic) read the instance's true MDPs; `opt`
    accepts solver keyword arguments (mode, gamma, eps, lambda_bound, tol)
    through `params`.
    """
    n = instance.n_arms
    m = instance.budget if budget is None else budget
    n_states = max(arm.n_states for arm in instance.arms)
    if name == "wiql":
        return WiqlPolicy(n, m, n_states, **params)
    if name == "opt":
        tables = _index_tables(instance.arms, params)
        return OptIndexPolicy(n, m, tables, solver_kwargs=params)
    if name == "ab":
        return AbPolicy(n, m, n_states, **params)
    if name == "fu":
        return FuPolicy(n, m, n_states, **params)
    if name == "greedy":
        return GreedyPolicy(n, m, n_states)
    if name == "random":
        return RandomPolicy(n, m)
    if name == "myopic":
        return MyopicPolicy(n, m, list(instance.arms))
    raise KeyError(f"unknown policy {name!r}; available: {', '.join(POLICY_NAMES)}")


def _index_tables(arms, solver_kwargs) -> list[np.ndarray]:
    """One Whittle table per arm, computed once per distinct MDP."""
    cache: dict[bytes, np.ndarray] = {}
    tables = []
    for arm in arms:
        key = arm.transitions.tobytes() + arm.rewards.tobytes()
        if key not in cache:
            cache[key] = whittle.index_table(arm, **solver_kwargs)
        tables.append(cache[key])
    return tables

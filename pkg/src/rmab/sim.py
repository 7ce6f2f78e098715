"""Seeded episode runner, trial batching, aggregation, and CSV output.

Each step: apply scheduled dynamics, select M arms, let every arm act
(selected arms take the active action, the rest are passive), sample every
arm's transition, log the summed reward, and feed all N transitions back to
the policy. Arms are restless, so unselected arms move and learn too.

Random streams: SeedSequence(seed).spawn(N + 1) gives child 0 to the policy
(selection draws) and child i + 1 to arm i (transition draws), so trials and
arms never share a stream and trial batches can run in any order or in
parallel without changing a single draw.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mdp import RmabInstance

THREADS_ENV_VAR = "RMAB_THREADS"

RAW_HEADER = ("instance", "policy", "trial", "t", "total_reward")
AGG_HEADER = ("instance", "policy", "t", "mean", "stderr", "moving_avg")


@dataclass(frozen=True)
class TrialLog:
    """One seeded episode: per-step summed reward and the selected arm sets."""

    per_step_total_reward: np.ndarray  # (T,)
    actions: np.ndarray  # (T, M) sorted arm indices
    seed: int


@dataclass(frozen=True)
class AggregateSeries:
    """Across-trial pointwise mean, standard error, and moving average."""

    mean: np.ndarray
    stderr: np.ndarray
    moving_avg: np.ndarray
    n_trials: int
    window: int


def run_episode(instance: RmabInstance, policy, T: int, seed: int) -> TrialLog:
    """Run one episode of T steps; fully determined by (instance, policy, T, seed)."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    n = instance.n_arms
    m = instance.budget
    arms = list(instance.arms)

    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n + 1)
    policy_rng = np.random.default_rng(children[0])
    arm_rngs = [np.random.default_rng(children[i + 1]) for i in range(n)]

    n_states = max(arm.n_states for arm in arms)
    cum = np.zeros((n, 2, n_states, n_states))
    rew = np.zeros((n, 2, n_states))
    caps = np.zeros(n, dtype=np.int64)

    def _install(i, arm):
        s = arm.n_states
        cum[i, :, :, :] = 1.0  # padding keeps searchsorted inside the real range
        cum[i, :, :s, :s] = arm._cumulative
        rew[i, :, :s] = arm.rewards
        caps[i] = s - 1

    for i, arm in enumerate(arms):
        _install(i, arm)

    schedule = list(instance.dynamics_schedule)
    next_event = 0
    states = np.array(instance.initial_states, dtype=np.int64)
    arange = np.arange(n)
    totals = np.empty(T)
    selected_log = np.empty((T, m), dtype=np.int64)

    for t in range(1, T + 1):
        while next_event < len(schedule) and schedule[next_event].step <= t:
            ev = schedule[next_event]
            arms[ev.arm] = ev.replacement
            _install(ev.arm, ev.replacement)
            policy.on_dynamics(ev.arm, ev.replacement)
            next_event += 1

        selected = np.asarray(policy.select(states, t, policy_rng))
        if selected.size != m or np.unique(selected).size != m or selected.min() < 0 or selected.max() >= n:
            raise RuntimeError(
                f"policy {policy.name!r} returned an invalid selection at t={t}: {selected}"
            )
        actions = np.zeros(n, dtype=np.int64)
        actions[selected] = 1

        rewards = rew[arange, actions, states]
        draws = np.array([g.random() for g in arm_rngs])
        rows = cum[arange, actions, states]
        next_states = np.minimum((rows <= draws[:, None]).sum(axis=1), caps)

        totals[t - 1] = rewards.sum()
        selected_log[t - 1] = np.sort(selected)
        policy.update_batch(states, actions, rewards, next_states)
        states = next_states

    return TrialLog(per_step_total_reward=totals, actions=selected_log, seed=seed)


def _run_one(args):
    instance, policy_factory, T, seed = args
    return run_episode(instance, policy_factory(), T, seed)


def default_workers() -> int:
    """Worker cap from the RMAB_THREADS environment variable (default 1)."""
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_trials(
    instance: RmabInstance,
    policy_factory,
    T: int,
    n_trials: int,
    base_seed: int,
    workers: int | None = None,
) -> list[TrialLog]:
    """Run n_trials independent episodes; trial k uses seed base_seed + k.

    Each trial gets a fresh policy from `policy_factory`. With workers > 1
    trials run in separate processes (factory and instance must pickle);
    results are ordered by trial index either way.
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    workers = default_workers() if workers is None else max(1, workers)
    jobs = [(instance, policy_factory, T, base_seed + k) for k in range(n_trials)]
    if workers == 1 or n_trials == 1:
        return [_run_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, n_trials)) as pool:
        return list(pool.map(_run_one, jobs))


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Left-anchored moving mean; the first window-1 points average the prefix."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    x = np.asarray(x, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(x)])
    out = np.empty_like(x)
    for t in range(x.size):
        lo = max(0, t + 1 - window)
        out[t] = (c[t + 1] - c[lo]) / (t + 1 - lo)
    return out


def aggregate(logs: list[TrialLog], window: int = 1) -> AggregateSeries:
    """Pointwise mean and standard error across equal-length trials."""
    if not logs:
        raise ValueError("aggregate requires at least one trial log")
    lengths = {log.per_step_total_reward.size for log in logs}
    if len(lengths) != 1:
        raise ValueError(f"trial logs have unequal lengths: {sorted(lengths)}")
    rewards = np.vstack([log.per_step_total_reward for log in logs])
    mean = rewards.mean(axis=0)
    n = rewards.shape[0]
    if n > 1:
        stderr = rewards.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        stderr = np.zeros_like(mean)
    return AggregateSeries(
        mean=mean,
        stderr=stderr,
        moving_avg=moving_average(mean, window),
        n_trials=n,
        window=window,
    )


def _open_csv(path):
    return open(path, "w", encoding="utf-8", newline="")


def write_raw_csv(path: str | Path, instance_name: str, policy_name: str, logs: list[TrialLog]) -> None:
    """Raw log rows: instance,policy,trial,t,total_reward (LF endings)."""
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_HEADER)
        for k, log in enumerate(logs):
            for t, value in enumerate(log.per_step_total_reward, start=1):
                w.writerow((instance_name, policy_name, k, t, repr(float(value))))


def write_agg_csv(path: str | Path, instance_name: str, policy_name: str, series: AggregateSeries) -> None:
    """Aggregate rows: instance,policy,t,mean,stderr,moving_avg (LF endings)."""
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGG_HEADER)
        for t in range(series.mean.size):
            w.writerow(
                (
                    instance_name,
                    policy_name,
                    t + 1,
                    repr(float(series.mean[t])),
                    repr(float(series.stderr[t])),
                    repr(float(series.moving_avg[t])),
                )
            )


def read_agg_csv(path: str | Path) -> dict:
    """Read back an aggregate CSV into column arrays keyed by header name."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty aggregate CSV")
    return {
        "instance": rows[0]["instance"],
        "policy": rows[0]["policy"],
        "t": np.array([int(r["t"]) for r in rows]),
        "mean": np.array([float(r["mean"]) for r in rows]),
        "stderr": np.array([float(r["stderr"]) for r in rows]),
        "moving_avg": np.array([float(r["moving_avg"]) for r in rows]),
    }

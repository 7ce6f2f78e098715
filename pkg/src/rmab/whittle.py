"""Exact Whittle indices via subsidized value iteration and binary search.

The subsidized single-arm problem adds a subsidy `lam` to the passive
action's reward. The Whittle index of a state is the subsidy at which the
active and passive actions become equally attractive there. Default
optimality criterion is average reward (relative value iteration with state
0 as reference); a discounted mode is available for robustness checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import ArmMdp

AVERAGE = "average"
DISCOUNTED = "discounted"

DEFAULT_TOL = 1e-9
DEFAULT_EPS = 1e-4
DEFAULT_MAX_ITERS = 100_000
DEFAULT_GAMMA = 0.99


class ConvergenceError(RuntimeError):
    """Value iteration did not converge within max_iters."""

    def __init__(self, residual: float, iters: int):
        super().__init__(f"no convergence after {iters} iterations, residual {residual:.3e}")
        self.residual = residual
        self.iters = iters


class IndexOutsideBoundError(ValueError):
    """The subsidy crossing lies outside the searched bracket."""


class NonIndexableError(ValueError):
    """Passive preference does not switch monotonically in the subsidy."""


@dataclass(frozen=True)
class SubsidySolution:
    """Q-values of the subsidy-`lam` single-arm problem.

    In average mode the Q-values are relative (defined up to a shared
    additive constant); differences and the passive set are unaffected.
    """

    lam: float
    q_passive: np.ndarray
    q_active: np.ndarray

    @property
    def passive_set(self) -> frozenset[int]:
        """States where passive is optimal. Exact ties count as passive."""
        return frozenset(np.flatnonzero(self.q_passive >= self.q_active).tolist())


def solve_subsidized(
    mdp: ArmMdp,
    lam: float,
    mode: str = AVERAGE,
    gamma: float = DEFAULT_GAMMA,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    v_init: np.ndarray | None = None,
) -> SubsidySolution:
    """Value-iterate the single-arm problem where passive earns R(z,0)+lam.

    Average mode runs relative value iteration (values pinned at state 0),
    discounted mode plain value iteration with factor `gamma`. Converged when
    the max value change drops below `tol`; otherwise ConvergenceError.
    """
    if mode not in (AVERAGE, DISCOUNTED):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == DISCOUNTED and not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    if tol <= 0:
        raise ValueError("tol must be positive")

    r = mdp.rewards.copy()
    r[0] += lam
    p = mdp.transitions
    disc = gamma if mode == DISCOUNTED else 1.0

    v = np.zeros(mdp.n_states) if v_init is None else np.asarray(v_init, dtype=np.float64).copy()
    if mode == AVERAGE:
        v -= v[0]

    delta = np.inf
    for _ in range(max_iters):
        q = r + disc * (p @ v)
        v_new = q.max(axis=0)
        if mode == AVERAGE:
            v_new -= v_new[0]
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta < tol:
            q = r + disc * (p @ v)
            return SubsidySolution(lam=float(lam), q_passive=q[0], q_active=q[1])
    raise ConvergenceError(delta, max_iters)


def default_lambda_bound(mdp: ArmMdp) -> float:
    """Search bound 2*max|R| + 1: a subsidy beyond the reward span is never pivotal."""
    return 2.0 * float(np.max(np.abs(mdp.rewards))) + 1.0


def whittle_index(
    mdp: ArmMdp,
    state: int,
    mode: str = AVERAGE,
    gamma: float = DEFAULT_GAMMA,
    lambda_bound: float | None = None,
    eps: float = DEFAULT_EPS,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> float:
    """Binary-search the subsidy where active stops being optimal at `state`.

    Assumes an indexable arm (see check_indexability). Returns the midpoint
    of the final bracket of width < eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    bound = default_lambda_bound(mdp) if lambda_bound is None else float(lambda_bound)

    def benefit(lam: float) -> float:
        sol = solve_subsidized(mdp, lam, mode=mode, gamma=gamma, tol=tol, max_iters=max_iters)
        return float(sol.q_active[state] - sol.q_passive[state])

    lo, hi = -bound, bound
    b_lo, b_hi = benefit(lo), benefit(hi)
    # ties count as passive, so the crossing is where benefit drops to <= 0
    if b_lo <= 0.0 and b_hi > 0.0:
        raise NonIndexableError(f"non-indexable at state {state}: benefit increases in lambda")
    if b_lo <= 0.0 or b_hi > 0.0:
        raise IndexOutsideBoundError(
            f"index outside bound [-{bound}, {bound}] for state {state}"
        )
    while hi - lo >= eps:
        mid = 0.5 * (lo + hi)
        if benefit(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def index_table(
    mdp: ArmMdp,
    mode: str = AVERAGE,
    gamma: float = DEFAULT_GAMMA,
    lambda_bound: float | None = None,
    eps: float = DEFAULT_EPS,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> np.ndarray:
    """Whittle index for every state of the arm; per-state failures name the state."""
    table = np.empty(mdp.n_states)
    for z in range(mdp.n_states):
        try:
            table[z] = whittle_index(
                mdp, z, mode=mode, gamma=gamma, lambda_bound=lambda_bound,
                eps=eps, tol=tol, max_iters=max_iters,
            )
        except (IndexOutsideBoundError, NonIndexableError, ConvergenceError) as exc:
            raise type(exc)(f"state {z}: {exc}") from exc
    return table


@dataclass(frozen=True)
class IndexabilityReport:
    """Result of the passive-set monotonicity sweep."""

    indexable: bool
    message: str
    lambda_low: float | None = None
    lambda_high: float | None = None
    exiting_states: tuple[int, ...] = ()


def check_indexability(
    mdp: ArmMdp,
    lambda_grid: np.ndarray | None = None,
    mode: str = AVERAGE,
    gamma: float = DEFAULT_GAMMA,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> IndexabilityReport:
    """Sweep the subsidy grid and check the passive set grows from empty to all states.

    Reports the first grid pair where a state leaves the passive set, or an
    endpoint failure when the sweep does not start empty / end full.
    """
    if lambda_grid is None:
        bound = default_lambda_bound(mdp)
        lambda_grid = np.arange(-bound, bound + 0.025, 0.05)
    grid = np.asarray(lambda_grid, dtype=np.float64)
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("lambda_grid must be ascending with at least two points")

    sets = [
        solve_subsidized(mdp, lam, mode=mode, gamma=gamma, tol=tol, max_iters=max_iters).passive_set
        for lam in grid
    ]
    for k in range(len(grid) - 1):
        exiting = sets[k] - sets[k + 1]
        if exiting:
            states = tuple(sorted(exiting))
            return IndexabilityReport(
                indexable=False,
                message=(
                    f"state(s) {states} leave the passive set between "
                    f"lambda={grid[k]:g} and lambda={grid[k + 1]:g}"
                ),
                lambda_low=float(grid[k]),
                lambda_high=float(grid[k + 1]),
                exiting_states=states,
            )
    if sets[0]:
        states = tuple(sorted(sets[0]))
        return IndexabilityReport(
            indexable=False,
            message=f"passive set not empty at lambda={grid[0]:g}: {states}",
            lambda_low=float(grid[0]),
            exiting_states=states,
        )
    all_states = frozenset(range(mdp.n_states))
    if sets[-1] != all_states:
        missing = tuple(sorted(all_states - sets[-1]))
        return IndexabilityReport(
            indexable=False,
            message=f"state(s) {missing} still active at lambda={grid[-1]:g}",
            lambda_high=float(grid[-1]),
            exiting_states=missing,
        )
    return IndexabilityReport(indexable=True, message="indexable")

"""MDP semantics for a task: transitions, sparse reward, observation rendering.

Observations are symbolic channel grids over the full level, float64 in
[0, 1]. Channel layout (in order): wall, free, agent, goal, then for each
color a key channel, a lock channel, and a held-key indicator channel (the
indicator is constant across the grid). Mazes carry 4 channels; keylock
levels carry 4 + 3 * color_count.

Dynamics are deterministic. A move into a wall, or into a lock whose key is
not held, is a no-op that still consumes a step. Entering a key cell picks
the key up; entering a matching lock opens it permanently; entering the goal
pays reward 1 and ends the episode. Reaching the horizon ends the episode
without reward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blindfold import BlindfoldSpec, apply as apply_blindfold
from .errors import UsageError
from .worldgen import (FREE, GOAL, KEY0, LOCK0, WALL, TaskSpec, family_deltas,
                       is_key, is_lock, key_color, lock_color)

HORIZONS = {"maze": 500, "keylock": 1000}


def horizon(family: str) -> int:
    return HORIZONS[family]


def action_count(family: str) -> int:
    return 4 if family == "maze" else 8


def observation_channels(family: str, color_count: int = 0) -> int:
    return 4 if family == "maze" else 4 + 3 * color_count


@dataclass(frozen=True)
class EnvState:
    task: TaskSpec
    agent: tuple[int, int]
    keys_held: frozenset[int]
    locks_opened: frozenset[int]
    step: int
    done: bool
    success: bool


@dataclass(frozen=True)
class StepResult:
    obs: np.ndarray
    reward: float
    done: bool
    success: bool


def effective_cells(state: EnvState) -> np.ndarray:
    """Grid with picked-up keys and opened locks cleared to free."""
    cells = state.task.cells.copy()
    for color in state.keys_held:
        cells[cells == KEY0 + color] = FREE
    for color in state.locks_opened:
        cells[cells == LOCK0 + color] = FREE
    return cells


def render(state: EnvState) -> np.ndarray:
    """Full unmasked observation for the current state."""
    task = state.task
    cells = effective_cells(state)
    n = observation_channels(task.family, task.color_count)
    obs = np.zeros((n, task.height, task.width), dtype=np.float64)
    obs[0] = cells == WALL
    obs[1] = cells != WALL
    obs[2][state.agent] = 1.0
    obs[3] = cells == GOAL
    for color in range(task.color_count):
        base = 4 + 3 * color
        obs[base] = cells == KEY0 + color
        obs[base + 1] = cells == LOCK0 + color
        if color in state.keys_held:
            obs[base + 2] = 1.0
    return obs


def reset(task: TaskSpec) -> tuple[EnvState, np.ndarray]:
    state = EnvState(task=task, agent=task.start, keys_held=frozenset(),
                     locks_opened=frozenset(), step=0, done=False, success=False)
    return state, render(state)


def step(state: EnvState, action: int) -> tuple[EnvState, StepResult]:
    if state.done:
        raise UsageError("step called on a finished episode")
    task = state.task
    deltas = family_deltas(task.family)
    if not 0 <= action < len(deltas):
        raise UsageError(f"action {action} out of range for {task.family}")
    dr, dc = deltas[action]
    r, c = state.agent
    nr, nc = r + dr, c + dc
    keys = state.keys_held
    opened = state.locks_opened

    def enterable(rr, cc):
        if not (0 <= rr < task.height and 0 <= cc < task.width):
            return False
        cell = int(task.cells[rr, cc])
        if cell == WALL:
            return False
        if is_lock(cell):
            return lock_color(cell) in keys or lock_color(cell) in opened
        return True

    # A diagonal move must not cut a corner: both orthogonal intermediate
    # cells have to be enterable as well.
    blocked = not enterable(nr, nc) or (
        dr != 0 and dc != 0 and not (enterable(r + dr, c) and enterable(r, c + dc)))
    target = int(task.cells[nr, nc]) if enterable(nr, nc) else WALL
    if blocked:
        nr, nc = r, c
    else:
        if is_key(target):
            keys = keys | {key_color(target)}
        elif is_lock(target) and lock_color(target) not in opened:
            opened = opened | {lock_color(target)}
    success = (nr, nc) == task.goal
    nstep = state.step + 1
    done = success or nstep >= horizon(task.family)
    new_state = EnvState(task=task, agent=(nr, nc), keys_held=keys,
                         locks_opened=opened, step=nstep, done=done,
                         success=success)
    reward = 1.0 if success else 0.0
    return new_state, StepResult(obs=render(new_state), reward=reward,
                                 done=done, success=success)


def render_masked_for_expert(state: EnvState, blindfold: BlindfoldSpec,
                             rng=None) -> np.ndarray:
    """The demonstrator's view: the full observation passed through the
    blindfold. Never persisted to datasets."""
    return apply_blindfold(blindfold, render(state), state.agent, rng)


def replay(task: TaskSpec, actions) -> list[tuple[np.ndarray, int, float, bool]]:
    """Re-run an action sequence; returns (obs_before, action, reward, done) records."""
    state, obs = reset(task)
    records = []
    for action in actions:
        state, result = step(state, action)
        records.append((obs, int(action), result.reward, result.done))
        obs = result.obs
    return records

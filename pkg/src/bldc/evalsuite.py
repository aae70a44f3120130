"""Rollout evaluation and behavioral metrics.

Success rates double as return estimates because rewards are sparse with a
single unit payoff. Step statistics use the population standard deviation.
State-visitation entropy bins the task's reachable cells into 20 contiguous
row-major groups of near-equal size and measures the natural-log entropy of
the episode's per-step bin occupancy.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import env as env_mod
from . import seqpolicy
from .seqpolicy import ArchSpec
from .worldgen import TaskSpec, reachable_cells


@dataclass
class EpisodeRecord:
    task_seed: int
    visited: list[tuple[int, int]]
    actions: list[int]
    steps: int
    success: bool


@dataclass
class EvalReport:
    split: str
    run_id: str
    epoch: int
    success_rate: float          # mean over seeds of per-seed success rates
    success_std: float           # population std over seeds
    mean_steps: float
    rows: list[dict] = field(default_factory=list)

    @property
    def return_estimate(self) -> float:
        return self.success_rate


def rollout(params: np.ndarray, arch: ArchSpec, task: TaskSpec,
            max_steps: int | None = None) -> EpisodeRecord:
    """Argmax rollout from reset with a zeroed hidden state."""
    if max_steps is None:
        max_steps = env_mod.horizon(task.family)
    state, obs = env_mod.reset(task)
    hidden = seqpolicy.zero_hidden(arch)
    visited = [state.agent]
    actions: list[int] = []
    while not state.done and len(actions) < max_steps:
        action, hidden = seqpolicy.act(params, arch, obs, hidden)
        state, result = env_mod.step(state, action)
        obs = result.obs
        visited.append(state.agent)
        actions.append(action)
    return EpisodeRecord(task_seed=task.seed, visited=visited, actions=actions,
                         steps=len(actions), success=state.success)


def rollout_many(params: np.ndarray, arch: ArchSpec, tasks,
                 max_steps: int | None = None) -> list[EpisodeRecord]:
    """Lockstep batched rollouts; per-episode results equal rollout()."""
    if not tasks:
        return []
    if max_steps is None:
        max_steps = env_mod.horizon(tasks[0].family)
    states = []
    observations = []
    for t in tasks:
        s, o = env_mod.reset(t)
        states.append(s)
        observations.append(o)
    hidden = seqpolicy.zero_hidden(arch, len(tasks))
    visited = [[s.agent] for s in states]
    actions: list[list[int]] = [[] for _ in tasks]
    live = list(range(len(tasks)))
    while live:
        obs_batch = np.stack([observations[i] for i in live])
        dist, h_new = seqpolicy.forward_batch(params, arch, obs_batch,
                                              hidden[live])
        chosen = dist.argmax(axis=1)
        hidden[live] = h_new
        still = []
        for row, i in enumerate(live):
            a = int(chosen[row])
            states[i], result = env_mod.step(states[i], a)
            observations[i] = result.obs
            visited[i].append(states[i].agent)
            actions[i].append(a)
            if not states[i].done and len(actions[i]) < max_steps:
                still.append(i)
        live = still
    return [EpisodeRecord(task_seed=t.seed, visited=visited[i], actions=actions[i],
                          steps=len(actions[i]), success=states[i].success)
            for i, t in enumerate(tasks)]


def episode_from_trajectory(trajectory, task: TaskSpec | None = None) -> EpisodeRecord:
    """Reconstruct the visited-cell sequence of a logged demonstration."""
    task = task or trajectory.task()
    state, _ = env_mod.reset(task)
    visited = [state.agent]
    for action in trajectory.actions:
        state, _ = env_mod.step(state, int(action))
        visited.append(state.agent)
    return EpisodeRecord(task_seed=task.seed, visited=visited,
                         actions=[int(a) for a in trajectory.actions],
                         steps=trajectory.steps, success=trajectory.success)


def coverage(episode: EpisodeRecord, task: TaskSpec) -> float:
    """Distinct visited cells over reachable cells."""
    reachable = reachable_cells(task)
    return len(set(episode.visited) & reachable) / len(reachable)


def _cell_bins(task: TaskSpec, bins: int) -> dict[tuple[int, int], int]:
    cells = sorted(reachable_cells(task))
    n = len(cells)
    assignment = {}
    for i, cell in enumerate(cells):
        assignment[cell] = min(bins - 1, i * bins // n)
    return assignment

def state_entropy(episode: EpisodeRecord, task: TaskSpec, bins: int = 20) -> float:
    """Natural-log entropy of the episode's binned state visitation."""
    assignment = _cell_bins(task, bins)
    counts = np.zeros(bins, dtype=np.float64)
    for cell in episode.visited:
        counts[assignment[cell]] += 1.0
    p = counts / counts.sum()
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def step_stats(lengths) -> tuple[float, float]:
    """Mean and population standard deviation of episode lengths."""
    arr = np.asarray(list(lengths), dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def evaluate(policies, arch: ArchSpec, tasks, split: str, run_id: str = "run",
             epoch: int = 0, max_steps: int | None = None) -> EvalReport:
    """Roll every (seed, params) policy over every task.

    ``policies`` is a sequence of (seed, params) pairs; aggregate success is
    the mean and population std over seeds of per-seed success rates.
    """
    rows = []
    per_seed_rates = []
    all_steps = []
    for seed, params in policies:
        episodes = rollout_many(params, arch, tasks, max_steps=max_steps)
        succ = 0
        for task, ep in zip(tasks, episodes):
            succ += ep.success
            all_steps.append(ep.steps)
            rows.append({
                "run_id": run_id, "epoch": epoch, "split": split,
                "task_seed": task.seed, "seed": seed,
                "success": int(ep.success), "steps": ep.steps,
                "coverage": round(coverage(ep, task), 6),
                "entropy": round(state_entropy(ep, task), 6),
            })
        per_seed_rates.append(succ / len(tasks))
    mean, std = step_stats(all_steps)
    rates = np.asarray(per_seed_rates)
    return EvalReport(split=split, run_id=run_id, epoch=epoch,
                      success_rate=float(rates.mean()),
                      success_std=float(rates.std()),
                      mean_steps=mean, rows=rows)


CSV_FIELDS = ["run_id", "epoch", "split", "task_seed", "seed", "success",
              "steps", "coverage", "entropy"]


def write_csv(path, rows, append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode, newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        if not append:
            writer.writeheader()
        writer.writerows(rows)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def sign_test_pvalue(xs, ys) -> float:
    """Exact two-sided sign test p-value for paired samples (ties dropped)."""
    greater = sum(1 for x, y in zip(xs, ys) if x > y)
    less = sum(1 for x, y in zip(xs, ys) if x < y)
    n = greater + less
    if n == 0:
        return 1.0
    k = min(greater, less)
    tail = sum(math.comb(n, i) for i in range(k + 1)) / 2.0 ** n
    return min(1.0, 2.0 * tail)

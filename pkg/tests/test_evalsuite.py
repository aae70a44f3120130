import math

import numpy as np
import pytest

from bldc import evalsuite, worldgen
from bldc.blindfold import BlindfoldSpec
from bldc.evalsuite import (EpisodeRecord, coverage, episode_from_trajectory,
                            evaluate, read_csv, rollout, rollout_many,
                            sign_test_pvalue, state_entropy, step_stats,
                            write_csv)
from bldc.experts import demonstrate
from bldc.seqpolicy import ArchSpec, init_params


def arch_for(task):
    return ArchSpec(obs_channels=4, height=task.height, width=task.width,
                    action_count=4, hidden_size=8, conv_filters=(4, 8),
                    embed_size=16)


def test_zero_policy_times_out(maze_task):
    params = np.zeros(arch_for(maze_task).parameter_count)
    ep = rollout(params, arch_for(maze_task), maze_task, max_steps=50)
    assert not ep.success
    assert ep.steps == 50
    assert all(a == 0 for a in ep.actions)  # uniform argmax ties to action 0


def test_rollout_deterministic(maze_task):
    arch = arch_for(maze_task)
    params = init_params(arch, 1)
    a = rollout(params, arch, maze_task, max_steps=80)
    b = rollout(params, arch, maze_task, max_steps=80)
    assert a.actions == b.actions and a.visited == b.visited


def test_rollout_many_matches_single(maze_task):
    arch = arch_for(maze_task)
    params = init_params(arch, 2)
    tasks = [worldgen.generate_task("maze", 11, 11, seed=s) for s in range(6)]
    batch = rollout_many(params, arch, tasks, max_steps=60)
    for task, ep in zip(tasks, batch):
        single = rollout(params, arch, task, max_steps=60)
        assert ep.actions == single.actions
        assert ep.visited == single.visited
        assert ep.success == single.success


def test_coverage_full_and_partial(maze_task):
    reachable = worldgen.reachable_cells(maze_task)
    full = EpisodeRecord(task_seed=0, visited=sorted(reachable), actions=[],
                         steps=len(reachable), success=True)
    assert coverage(full, maze_task) == 1.0
    two = EpisodeRecord(task_seed=0, visited=[maze_task.start,
                                              (1, 2)], actions=[3], steps=1,
                        success=False)
    assert coverage(two, maze_task) == 2 / len(reachable)


def test_coverage_recount_on_demo(maze_task):
    traj = demonstrate(maze_task, "blindfolded", BlindfoldSpec(kind="fov", radius=1))
    ep = episode_from_trajectory(traj, maze_task)
    reachable = worldgen.reachable_cells(maze_task)
    assert coverage(ep, maze_task) == len(set(ep.visited)) / len(reachable)


def test_state_entropy_single_bin(maze_task):
    ep = EpisodeRecord(task_seed=0, visited=[maze_task.start] * 10, actions=[],
                       steps=10, success=False)
    assert state_entropy(ep, maze_task) == 0.0


def test_state_entropy_uniform_is_log_bins(maze_task):
    reachable = sorted(worldgen.reachable_cells(maze_task))
    n = len(reachable)
    # visit each bin's cells proportionally so every bin has equal mass
    assignment = evalsuite._cell_bins(maze_task, 20)
    by_bin = {}
    for cell, b in assignment.items():
        by_bin.setdefault(b, []).append(cell)
    visited = []
    for b, cells in by_bin.items():
        visited.extend([cells[0]] * 6)  # same count per bin
    ep = EpisodeRecord(task_seed=0, visited=visited, actions=[],
                       steps=len(visited), success=False)
    assert abs(state_entropy(ep, maze_task) - math.log(20)) < 1e-12


def test_entropy_range(maze_task):
    traj = demonstrate(maze_task, "informed")
    ep = episode_from_trajectory(traj, maze_task)
    h = state_entropy(ep, maze_task)
    assert 0.0 <= h <= math.log(20)


def test_step_stats_population_std():
    mean, std = step_stats([10, 20])
    assert mean == 15.0 and std == 5.0
    mean, std = step_stats([7, 7, 7])
    assert mean == 7.0 and std == 0.0


def test_evaluate_row_count_and_determinism(tmp_path):
    tasks = [worldgen.generate_task("maze", 9, 9, seed=s) for s in range(4)]
    arch = ArchSpec(obs_channels=4, height=9, width=9, action_count=4,
                    hidden_size=8, conv_filters=(4, 8), embed_size=16)
    policies = [(s, init_params(arch, s)) for s in range(3)]
    r1 = evaluate(policies, arch, tasks, split="test", run_id="r", epoch=2,
                  max_steps=40)
    r2 = evaluate(policies, arch, tasks, split="test", run_id="r", epoch=2,
                  max_steps=40)
    assert len(r1.rows) == len(tasks) * len(policies)
    assert r1.rows == r2.rows
    assert 0.0 <= r1.success_rate <= 1.0
    assert r1.success_std >= 0.0
    path = tmp_path / "rows.csv"
    write_csv(path, r1.rows)
    back = read_csv(path)
    assert len(back) == len(r1.rows)
    assert back[0]["split"] == "test"


def test_sign_test_values():
    # all 20 pairs strictly greater: p = 2 * 2^-20
    p = sign_test_pvalue(list(range(1, 21)), [0] * 20)
    assert abs(p - 2 * 0.5 ** 20) < 1e-12
    # balanced: p = 1
    assert sign_test_pvalue([1, 0], [0, 1]) == 1.0
    # ties dropped
    assert sign_test_pvalue([1, 1], [1, 1]) == 1.0


def test_sign_test_matches_binomial_oracle():
    """Compare against a direct binomial-tail computation."""
    import itertools

    xs = [5, 3, 8, 1, 9, 2, 7, 7, 4, 6]
    ys = [4, 4, 2, 0, 3, 5, 1, 7, 1, 2]
    greater = sum(x > y for x, y in zip(xs, ys))
    less = sum(x < y for x, y in zip(xs, ys))
    n = greater + less
    k = min(greater, less)
    tail = sum(math.comb(n, i) for i in range(k + 1)) / 2 ** n
    assert sign_test_pvalue(xs, ys) == min(1.0, 2 * tail)

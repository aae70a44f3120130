"""Expert behavior against hand-simulation and exhaustive-search oracles."""

import numpy as np
import pytest

from bldc import env, evalsuite, worldgen
from bldc.blindfold import BlindfoldSpec
from bldc.errors import CapacityError
from bldc.experts import (BayesExactExpert, FrontierExpert, InformedExpert,
                          bayes_exact_act, blindfolded_act, demonstrate,
                          informed_act, new_expert_state)
from bldc.rng import SplitMix64
from bldc.worldgen import DELTAS_4, FREE, GOAL, KEY0, LOCK0, WALL, TaskSpec


def line_maze(length=5):
    """1 x length open corridor with the goal at the far end."""
    cells = np.full((3, length + 2), WALL, dtype=np.uint8)
    cells[1, 1:length + 1] = FREE
    cells[1, length] = GOAL
    return TaskSpec(family="maze", width=length + 2, height=3, seed=0,
                    cells=cells, start=(1, 1), goal=(1, length),
                    color_count=0)


def t_junction_task():
    """Start walks up a stem; goal hides down the lexicographically-later
    branch, so the frontier explorer tries the other branch first."""
    cells = np.full((7, 7), WALL, dtype=np.uint8)
    cells[1, 1:6] = FREE           # top corridor
    cells[2, 3] = FREE             # stem
    cells[3, 3] = FREE
    cells[1, 5] = FREE
    cells[2, 5] = FREE             # right branch going down
    cells[3, 5] = GOAL
    start = (3, 3)
    return TaskSpec(family="maze", width=7, height=7, seed=0, cells=cells,
                    start=start, goal=(3, 5), color_count=0)


def oracle_bfs_distance(task):
    dist = worldgen.grid_distances(task.cells != WALL, task.start,
                                   worldgen.family_deltas(task.family))
    return int(dist[task.goal])


# -- informed expert ---------------------------------------------------------


def test_informed_corridor_exact_actions():
    task = line_maze(4)
    traj = demonstrate(task, "informed")
    assert traj.success
    assert traj.actions.tolist() == [3, 3, 3]  # three moves right


def test_informed_one_step_goal():
    task = line_maze(2)
    traj = demonstrate(task, "informed")
    assert traj.success and traj.steps == 1


def test_informed_matches_bfs_distance_on_sweep():
    for seed in range(50):
        task = worldgen.generate_task("maze", 9, 9, seed=seed)
        traj = demonstrate(task, "informed")
        assert traj.success
        assert traj.steps == oracle_bfs_distance(task)


def test_informed_keylock_visits_key_before_lock(keylock_task):
    traj = demonstrate(keylock_task, "informed")
    assert traj.success
    ep = evalsuite.episode_from_trajectory(traj, keylock_task)
    key_pos = tuple(np.argwhere(keylock_task.cells == KEY0)[0])
    lock_pos = tuple(np.argwhere(keylock_task.cells == LOCK0)[0])
    visited = [tuple(p) for p in ep.visited]
    if lock_pos in visited:  # lock may be off the final path
        assert visited.index(key_pos) < visited.index(lock_pos)
    else:
        assert key_pos in visited


def test_informed_optimal_on_keylock_state_graph():
    """Episode length equals the exhaustive shortest path over
    (position, key set) states."""

    def enterable(task, keys, r, c):
        if not (0 <= r < task.height and 0 <= c < task.width):
            return False
        cell = int(task.cells[r, c])
        if cell == WALL:
            return False
        if LOCK0 <= cell < LOCK0 + 3:
            return (cell - LOCK0) in keys
        return True

    def oracle_shortest(task):
        from collections import deque

        deltas = worldgen.family_deltas(task.family)
        start = (task.start, frozenset())
        q = deque([(start, 0)])
        seen = {start}
        while q:
            ((pos, keys), d) = q.popleft()
            if pos == task.goal:
                return d
            for dr, dc in deltas:
                p = (pos[0] + dr, pos[1] + dc)
                if not enterable(task, keys, *p):
                    continue
                if dr != 0 and dc != 0 and not (
                        enterable(task, keys, pos[0] + dr, pos[1])
                        and enterable(task, keys, pos[0], pos[1] + dc)):
                    continue
                cell = int(task.cells[p])
                nkeys = keys | {cell - KEY0} if KEY0 <= cell < KEY0 + 3 else keys
                s = (p, nkeys)
                if s not in seen:
                    seen.add(s)
                    q.append((s, d + 1))
        return -1

    for seed in range(10):
        task = worldgen.generate_task("keylock", 9, 9, seed=seed, color_count=1)
        traj = demonstrate(task, "informed")
        assert traj.success
        assert traj.steps == oracle_shortest(task)


# -- blindfolded frontier expert ---------------------------------------------


def fov1():
    return BlindfoldSpec(kind="fov", radius=1)


def test_blindfolded_corridor_matches_informed():
    task = line_maze(5)
    bf = demonstrate(task, "blindfolded", fov1())
    informed = demonstrate(task, "informed")
    assert bf.success
    assert bf.steps == informed.steps
    assert bf.actions.tolist() == informed.actions.tolist()


def test_blindfolded_goal_in_initial_window():
    task = line_maze(2)  # goal adjacent to start, inside radius 1
    bf = demonstrate(task, "blindfolded", fov1())
    assert bf.success and bf.steps == 1


def test_blindfolded_explores_earlier_branch_first():
    task = t_junction_task()
    bf = demonstrate(task, "blindfolded", fov1())
    informed = demonstrate(task, "informed")
    assert bf.success
    assert bf.steps > informed.steps  # detour through the other branch


def test_blindfolded_sweep_success_and_dominance():
    strict = 0
    for seed in range(100):
        task = worldgen.generate_task("maze", 11, 11, seed=seed)
        bf = demonstrate(task, "blindfolded", fov1())
        informed = demonstrate(task, "informed")
        assert bf.success, seed
        assert bf.steps >= informed.steps, seed
        free_cells = int((task.cells != WALL).sum())
        assert bf.steps <= 4 * free_cells, seed
        strict += bf.steps > informed.steps
    assert strict >= 10


def test_blindfolded_deterministic(maze_task):
    a = demonstrate(maze_task, "blindfolded", fov1())
    b = demonstrate(maze_task, "blindfolded", fov1())
    assert a.actions.tolist() == b.actions.tolist()


def test_blindfolded_belief_consistency(maze_task):
    """The belief never contradicts the true grid."""
    state, _ = env.reset(maze_task)
    driver = FrontierExpert(maze_task, fov1())
    for _ in range(60):
        if state.done:
            break
        driver.observe(state)
        belief = driver.state.belief
        known = belief != 255
        assert np.array_equal(belief[known], maze_task.cells[known])
        state, _ = env.step(state, driver.act())


def test_blindfolded_keylock_success():
    for seed in range(10):
        task = worldgen.generate_task("keylock", 9, 9, seed=seed, color_count=1)
        bf = demonstrate(task, "blindfolded", BlindfoldSpec(kind="fov", radius=2))
        assert bf.success, seed


# -- noise expert -------------------------------------------------------------


def test_noise_p0_equals_informed():
    for seed in range(20):
        task = worldgen.generate_task("maze", 11, 11, seed=seed)
        noise = demonstrate(task, "noise", BlindfoldSpec(kind="noise", max_level=0.0),
                            rng=SplitMix64(seed))
        informed = demonstrate(task, "informed")
        assert noise.actions.tolist() == informed.actions.tolist()


def test_noise_deterministic_given_seed(maze_task):
    spec = BlindfoldSpec(kind="noise", max_level=0.5)
    a = demonstrate(maze_task, "noise", spec, rng=SplitMix64(9))
    b = demonstrate(maze_task, "noise", spec, rng=SplitMix64(9))
    assert a.actions.tolist() == b.actions.tolist()


def test_noise_takes_more_steps_on_average():
    spec = BlindfoldSpec(kind="noise", max_level=0.39)
    extra = 0
    for seed in range(30):
        task = worldgen.generate_task("maze", 11, 11, seed=seed)
        noisy = demonstrate(task, "noise", spec, rng=SplitMix64(seed + 1))
        informed = demonstrate(task, "informed")
        extra += noisy.steps - informed.steps
    assert extra > 0


# -- demonstrate contract -----------------------------------------------------


def test_demonstrate_failure_on_tiny_budget(maze_task):
    traj = demonstrate(maze_task, "blindfolded", fov1(), max_steps=3)
    assert not traj.success
    assert traj.steps == 3
    assert not traj.dones.any()


def test_demonstrate_logs_unmasked_observations(maze_task):
    traj = demonstrate(maze_task, "blindfolded", fov1())
    state, obs = env.reset(maze_task)
    assert np.array_equal(traj.observations[0], obs)
    assert traj.observations.shape[1] == env.observation_channels("maze")


# -- exact Bayes expert --------------------------------------------------------


def goal_variants(base_cells, start, goals):
    """Tasks sharing one maze layout, differing only in goal position."""
    tasks = []
    for i, g in enumerate(goals):
        cells = base_cells.copy()
        cells[cells == GOAL] = FREE
        cells[g] = GOAL
        tasks.append(TaskSpec(family="maze", width=cells.shape[1],
                              height=cells.shape[0], seed=1000 + i,
                              cells=cells, start=start, goal=g, color_count=0))
    return tasks


def two_corridor_tasks():
    """Mirror corridors: goal left or right of start, at different depths so
    one direction is better in expectation."""
    cells = np.full((3, 9), WALL, dtype=np.uint8)
    cells[1, 1:8] = FREE
    start = (1, 3)  # 2 cells from the left end, 4 from the right
    return goal_variants(cells, start, [(1, 1), (1, 7)])


def test_bayes_point_mass_matches_informed(small_maze):
    expert = BayesExactExpert([small_maze], [1.0], fov1())
    state, _ = env.reset(small_maze)
    informed = InformedExpert(small_maze)
    while not state.done:
        expert.observe(state)
        informed.observe(state)
        assert expert.act() == informed.act()
        state, _ = env.step(state, informed_act(small_maze, state))


def test_bayes_uniform_posterior_prefers_majority_direction():
    tasks = two_corridor_tasks()
    # three copies of the near goal direction vs one far: with goals at
    # distance 2 (left) and 4 (right) under a uniform prior, going left first
    # is optimal in expectation.
    expert = BayesExactExpert(tasks, [0.5, 0.5], fov1(), cap_dim=9)
    state, _ = env.reset(tasks[0])
    expert.observe(state)
    first = expert.act()
    # oracle: depth-limited expectimax over the two candidate worlds
    assert first == _expectimax_oracle_first_action(tasks, [0.5, 0.5])


def _expectimax_oracle_first_action(tasks, prior, depth=14):
    """Brute-force expected-steps minimization with memoization on the joint
    candidate state; independent of the library's solver."""
    memo = {}

    def masked_key(state):
        return env.render_masked_for_expert(state, fov1(), None).tobytes()

    def value(states, weights, d):
        if d == 0:
            return 0.0
        key = (tuple((s.agent, s.task.seed) for s in states), tuple(weights), d)
        if key in memo:
            return memo[key]
        best = float("inf")
        for a in range(4):
            groups: dict = {}
            for (s, w) in zip(states, weights):
                ns, r = env.step(s, a)
                if r.success:
                    continue
                groups.setdefault(masked_key(ns), []).append((ns, w))
            cost = 1.0
            for g in groups.values():
                gw = sum(w for _, w in g)
                cost += gw * value([s for s, _ in g],
                                   [w / gw for _, w in g], d - 1)
            best = min(best, cost)
        memo[key] = best
        return best

    base_states = [env.reset(t)[0] for t in tasks]
    best_action, best_cost = 0, float("inf")
    for a in range(4):
        groups: dict = {}
        for s, w in zip(base_states, prior):
            ns, r = env.step(s, a)
            if r.success:
                continue
            groups.setdefault(masked_key(ns), []).append((ns, w))
        cost = 1.0
        for g in groups.values():
            gw = sum(w for _, w in g)
            cost += gw * value([s for s, _ in g],
                               [w / gw for _, w in g], d=depth)
        if cost < best_cost - 1e-9:
            best_cost, best_action = cost, a
    return best_action


def test_bayes_collapsed_posterior_matches_informed():
    tasks = two_corridor_tasks()
    expert = BayesExactExpert(tasks, [0.5, 0.5], fov1(), cap_dim=9)
    true_task = tasks[0]
    state, _ = env.reset(true_task)
    informed = InformedExpert(true_task)
    # roll until the posterior collapses, then require agreement
    for _ in range(10):
        if state.done:
            break
        expert.observe(state)
        a = expert.act()
        if len(expert._support) == 1:
            informed.observe(state)
            assert a == informed.act()
        state, _ = env.step(state, a)
    assert state.done or len(expert._support) >= 1


def test_bayes_cap_enforced():
    tasks = [worldgen.generate_task("maze", 7, 7, seed=s) for s in range(3)]
    with pytest.raises(CapacityError):
        BayesExactExpert(tasks * 6, [1 / 18] * 18, fov1())
    big = [worldgen.generate_task("maze", 9, 9, seed=0)]
    with pytest.raises(CapacityError):
        BayesExactExpert(big, [1.0], fov1())


def test_bayes_exact_act_wrapper(small_maze):
    action = bayes_exact_act([small_maze], [1.0], fov1(), small_maze, [])
    informed = demonstrate(small_maze, "informed")
    assert action == informed.actions[0]

"""Scripted demonstrators.

Four kinds, all deterministic functions of what they are allowed to see:

  informed      plans the shortest path on the true grid (staged through
                keys and locks when present).
  blindfolded   sees only the masked view; accumulates a belief map and
                explores toward the nearest frontier until the goal is found.
  noise         sees the full grid corrupted by additive noise; commits each
                cell's content once a reading is unambiguous, treats shaky
                readings as unknown, and explores like the frontier expert.
                Heavy noise produces occasional permanent misreads, which is
                the intended failure mode.
  bayes_exact   exact Bayes-optimal policy over a tiny enumerable task set:
                minimizes expected steps-to-goal under the posterior of tasks
                consistent with the masked observation history.

Drivers share a two-phase step protocol: ``observe(env_state)`` merges the
current (possibly masked) view into internal state, ``act()`` returns the
chosen action, and ``representation_key()`` serializes the internal state
canonically for information measurements.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from . import env as env_mod
from .blindfold import BlindfoldSpec
from .errors import CapacityError, ConfigError, ExplorationExhausted, PlanningError
from .rng import SplitMix64
from .worldgen import (FREE, GOAL, KEY0, LOCK0, MAX_COLORS, WALL, TaskSpec,
                       family_deltas, grid_distances, passable_mask)

UNKNOWN = 255
READ_WALL = 254  # noise expert: wall penciled in from a clean reading

INFORMED = "informed"
BLINDFOLDED = "blindfolded"
NOISE = "noise"
BAYES_EXACT = "bayes_exact"
EXPERT_KINDS = (INFORMED, BLINDFOLDED, NOISE, BAYES_EXACT)

# Noise-expert decoding constants: channel readings inside the open band are
# treated as unreliable, readings at or above the commit threshold count as
# "on". The low edge makes the decoder cautious (any visible perturbation
# voids a reading); misreads and phantom goal readings require noise above
# COMMIT, so they only appear at heavy noise levels.
NOISE_BAND_LOW = 0.05
NOISE_COMMIT = 0.7


def _step_toward(passable: np.ndarray, pos, target, deltas) -> int | None:
    """First action of a shortest path from pos to target over passable
    cells, ties broken by fixed action order. None if unreachable."""
    if pos == target:
        return None
    dist = grid_distances(passable, target, deltas)
    d = dist[pos]
    if d < 0:
        return None
    height, width = passable.shape
    for action, (dr, dc) in enumerate(deltas):
        nr, nc = pos[0] + dr, pos[1] + dc
        if 0 <= nr < height and 0 <= nc < width and dist[nr, nc] == d - 1:
            return action
    return None


def _nearest(cands, dist) -> tuple[int, int] | None:
    """Nearest candidate by (distance, row, col); None if all unreachable."""
    best = None
    for r, c in cands:
        d = dist[r, c]
        if d < 0:
            continue
        key = (int(d), r, c)
        if best is None or key < best:
            best = key
    return (best[1], best[2]) if best else None


# ---------------------------------------------------------------------------
# Informed expert


def informed_act(task: TaskSpec, state: env_mod.EnvState) -> int:
    """Shortest-path action toward the current objective: the goal if
    reachable with held keys, otherwise the nearest needed key."""
    cells = env_mod.effective_cells(state)
    deltas = family_deltas(task.family)
    passable = passable_mask(cells, state.keys_held)
    if state.agent == task.goal:
        raise PlanningError("already at goal")
    action = _step_toward(passable, state.agent, task.goal, deltas)
    if action is not None:
        return action
    dist = grid_distances(passable, state.agent, deltas)
    needed = [(int(r), int(c))
              for color in range(task.color_count)
              if color not in state.keys_held
              for r, c in np.argwhere(cells == KEY0 + color)]
    target = _nearest(needed, dist)
    if target is None:
        raise PlanningError("no reachable objective (task unsolvable?)")
    action = _step_toward(passable, state.agent, target, deltas)
    if action is None:
        raise PlanningError("no reachable objective (task unsolvable?)")
    return action


class InformedExpert:
    """Driver for the fully-informed planner. Its internal representation is
    the entire task plus its own position and inventory."""

    kind = INFORMED

    def __init__(self, task: TaskSpec):
        self.task = task
        self._state: env_mod.EnvState | None = None

    def observe(self, state: env_mod.EnvState) -> None:
        self._state = state

    def act(self) -> int:
        return informed_act(self.task, self._state)

    def representation_key(self) -> bytes:
        s = self._state
        return "|".join([
            self.task.to_record(),
            f"{s.agent[0]},{s.agent[1]}",
            ",".join(map(str, sorted(s.keys_held))),
            ",".join(map(str, sorted(s.locks_opened))),
        ]).encode()


# ---------------------------------------------------------------------------
# Belief-based experts (blindfolded frontier explorer and noise variant)


@dataclass
class ExpertState:
    """Belief state of a masked demonstrator.

    ``belief`` holds one cell code per cell with UNKNOWN for unseen content;
    the frontier and the current plan are deterministic functions of it and
    are recomputed every step. ``target`` is the persistent exploration
    objective used by the noise expert (None for the fov explorer, whose
    accumulated belief makes re-planning stable on its own).
    """

    belief: np.ndarray
    pos: tuple[int, int]
    keys_believed_held: frozenset[int]
    step_memory: int
    family: str
    target: tuple[int, int] | None = None
    memory: np.ndarray | None = None   # noise expert: path, bump, wall memory
    last_action: int | None = None
    goal_reads: frozenset = frozenset()  # noise expert: last frame's goal cells

    def frontier(self) -> list[tuple[int, int]]:
        return _frontier_cells(self.belief, self.keys_believed_held, self.family)

    def representation_key(self) -> bytes:
        keys = ",".join(map(str, sorted(self.keys_believed_held)))
        pos = f"{self.pos[0]},{self.pos[1]}"
        tgt = "-" if self.target is None else f"{self.target[0]},{self.target[1]}"
        tail = b"" if self.memory is None else b"|" + self.memory.tobytes()
        return self.belief.tobytes() + f"|{pos}|{keys}|{tgt}".encode() + tail


def new_expert_state(family: str, height: int, width: int) -> ExpertState:
    return ExpertState(belief=np.full((height, width), UNKNOWN, dtype=np.uint8),
                       pos=(-1, -1), keys_believed_held=frozenset(),
                       step_memory=0, family=family)


def _belief_passable(belief: np.ndarray, keys) -> np.ndarray:
    mask = (belief == FREE) | (belief == GOAL)
    for color in range(MAX_COLORS):
        mask |= belief == KEY0 + color
        if color in keys:
            mask |= belief == LOCK0 + color
    return mask


def _frontier_cells(belief, keys, family) -> list[tuple[int, int]]:
    """Believed-passable cells adjacent to unknown content, in (row, col) order."""
    deltas = family_deltas(family)
    passable = _belief_passable(belief, keys)
    height, width = belief.shape
    unknown = belief == UNKNOWN
    out = []
    for r, c in np.argwhere(passable):
        for dr, dc in deltas:
            nr, nc = r + dr, c + dc
            if 0 <= nr < height and 0 <= nc < width and unknown[nr, nc]:
                out.append((int(r), int(c)))
                break
    return out


def _plan_action(belief: np.ndarray, pos, keys, family: str) -> int:
    """Sub-goal selection on the belief map: known reachable goal first, then
    nearest known needed key, then nearest frontier."""
    deltas = family_deltas(family)
    passable = _belief_passable(belief, keys)
    passable[pos] = True  # the agent stands here, so it is passable
    goals = np.argwhere(belief == GOAL)
    if len(goals):
        action = _step_toward(passable, pos, (int(goals[0][0]), int(goals[0][1])), deltas)
        if action is not None:
            return action
    dist = grid_distances(passable, pos, deltas)
    if family == "keylock":
        needed = [(int(r), int(c))
                  for color in range(MAX_COLORS)
                  if color not in keys
                  for r, c in np.argwhere(belief == KEY0 + color)]
        target = _nearest(needed, dist)
        if target is not None:
            action = _step_toward(passable, pos, target, deltas)
            if action is not None:
                return action
    frontier = _frontier_cells(belief, keys, family)
    target = _nearest(frontier, dist)
    if target is None:
        raise ExplorationExhausted("no reachable frontier and goal unknown")
    if target == pos:
        # Standing on the frontier: probe the first unknown neighbor.
        height, width = belief.shape
        for action, (dr, dc) in enumerate(deltas):
            nr, nc = pos[0] + dr, pos[1] + dc
            if 0 <= nr < height and 0 <= nc < width and belief[nr, nc] == UNKNOWN:
                return action
        raise ExplorationExhausted("frontier cell has no unknown neighbor")
    action = _step_toward(passable, pos, target, deltas)
    if action is None:
        raise ExplorationExhausted("frontier unreachable")
    return action


def _agent_pos(content: np.ndarray) -> tuple[int, int]:
    flat = int(np.argmax(content[2]))
    return flat // content.shape[2], flat % content.shape[2]


def _held_keys(content: np.ndarray, pos, color_count: int) -> frozenset[int]:
    return frozenset(c for c in range(color_count)
                     if content[4 + 3 * c + 2][pos] >= 0.5)


def _decode_visible(content: np.ndarray, visible: np.ndarray) -> np.ndarray:
    """Exact cell codes for visible cells of a clean (0/1) masked view."""
    color_count = (content.shape[0] - 4) // 3
    codes = np.full(content.shape[1:], UNKNOWN, dtype=np.uint8)
    codes[visible] = FREE
    codes[visible & (content[0] > 0.5)] = WALL
    codes[visible & (content[3] > 0.5)] = GOAL
    for color in range(color_count):
        codes[visible & (content[4 + 3 * color] > 0.5)] = KEY0 + color
        codes[visible & (content[4 + 3 * color + 1] > 0.5)] = LOCK0 + color
    return codes


def blindfolded_act(state: ExpertState, masked_obs: np.ndarray) -> tuple[int, ExpertState]:
    """Frontier-exploration step: merge the revealed cells, then head for the
    goal if known and believed reachable, else the nearest frontier."""
    content, sentinel = masked_obs[:-1], masked_obs[-1]
    visible = sentinel < 0.5
    codes = _decode_visible(content, visible)
    belief = state.belief.copy()
    belief[visible] = codes[visible]
    pos = _agent_pos(content)
    color_count = (content.shape[0] - 4) // 3
    keys = _held_keys(content, pos, color_count)
    action = _plan_action(belief, pos, keys, state.family)
    new_state = ExpertState(belief=belief, pos=pos, keys_believed_held=keys,
                            step_memory=state.step_memory + 1, family=state.family)
    return action, new_state


class FrontierExpert:
    """Driver for the blindfolded frontier explorer. Consumes only the masked
    view rendered from the environment state; uses the task argument solely
    for its dimensions and family."""

    kind = BLINDFOLDED

    def __init__(self, task: TaskSpec, blindfold: BlindfoldSpec, rng=None):
        if blindfold.kind not in ("fov", "region"):
            raise ConfigError("frontier expert needs a masking blindfold (fov/region)")
        self.blindfold = blindfold
        self.rng = rng
        self.state = new_expert_state(task.family, task.height, task.width)
        self._action: int | None = None

    def observe(self, state: env_mod.EnvState) -> None:
        masked = env_mod.render_masked_for_expert(state, self.blindfold, self.rng)
        self._action, self.state = blindfolded_act(self.state, masked)

    def act(self) -> int:
        return self._action

    def representation_key(self) -> bytes:
        return self.state.representation_key()


def _optimistic_passable(belief: np.ndarray, keys) -> np.ndarray:
    """Traversable for route planning under uncertainty: anything not read as
    a wall or an unopenable lock, unknown cells included."""
    mask = belief != WALL
    for color in range(MAX_COLORS):
        if color not in keys:
            mask &= belief != LOCK0 + color
    return mask


def noise_robust_act(state: ExpertState, noisy_obs: np.ndarray) -> tuple[int, ExpertState]:
    """One step of the noise expert.

    The expert re-reads the whole (noisy) grid every step and trusts only
    unambiguous readings: a cell with any channel value inside the unreliable
    band counts as unknown for this step. It keeps a permanent map of its own
    path (ground truth), of cells a blocked move bumped into (maze family
    only, since a blocked keylock move may be a lock instead), and of clean
    wall readings; under heavy noise the latter occasionally pencil in walls
    that are not there, which can strand it until timeout. The goal is chased
    only when its reading is stable across two consecutive frames; otherwise
    the expert roams to a persistent exploration target, the nearest cell it
    has never stood on, re-picked only when reached or discredited. Routes
    are planned optimistically through unreadable content. With zero noise
    all readings are clean and this reduces exactly to the informed planner.
    """
    content = noisy_obs  # no sentinel channel under the noise blindfold
    color_count = (content.shape[0] - 4) // 3
    kind_channels = [0, 1, 3] + [4 + 3 * c + off for c in range(color_count) for off in (0, 1)]
    kind = content[kind_channels]
    uncertain = np.any((kind > NOISE_BAND_LOW) & (kind < NOISE_COMMIT), axis=0)
    on = kind >= NOISE_COMMIT
    # Priority wall > goal > key > lock > free; conflicting patterns resolve
    # to the highest-priority channel that is on.
    decoded = np.full(content.shape[1:], FREE, dtype=np.uint8)
    for color in reversed(range(color_count)):
        decoded[on[3 + 2 * color + 1]] = LOCK0 + color
        decoded[on[3 + 2 * color]] = KEY0 + color
    decoded[on[2]] = GOAL
    decoded[on[0]] = WALL
    pos = _agent_pos(content)
    memory = (np.full(decoded.shape, UNKNOWN, dtype=np.uint8)
              if state.memory is None else state.memory.copy())
    deltas = family_deltas(state.family)
    if (state.last_action is not None and pos == state.pos
            and state.family == "maze"):
        dr, dc = deltas[state.last_action]
        br, bc = pos[0] + dr, pos[1] + dc
        if 0 <= br < memory.shape[0] and 0 <= bc < memory.shape[1]:
            memory[br, bc] = WALL
    wall_reads = ~uncertain & (decoded == WALL) & (memory == UNKNOWN)
    memory[wall_reads] = READ_WALL
    memory[pos] = FREE
    keys = _held_keys(content, pos, color_count)

    def resolve(mem):
        belief = np.where(mem == READ_WALL, WALL,
                          np.where(mem != UNKNOWN, mem,
                                   np.where(uncertain, UNKNOWN, decoded))).astype(np.uint8)
        passable = _optimistic_passable(belief, keys)
        return belief, passable

    def choose(belief, passable, roam):
        """Objectives in priority order; first reachable one wins. A goal
        reading is chased only when stable across two consecutive frames
        (the first frame counts as stable); the persistent roam target
        covers the stretches in between."""
        dist = grid_distances(passable, pos, deltas)
        objectives: list[tuple[tuple[int, int], bool]] = []  # (cell, is_roam)
        reads = frozenset((int(r), int(c)) for r, c in np.argwhere(belief == GOAL))
        stable = [g for g in reads
                  if state.step_memory == 0 or g in state.goal_reads]
        goal_target = _nearest(stable, dist)
        if goal_target is not None:
            objectives.append((goal_target, False))
        if state.family == "keylock":
            needed = [(int(r), int(c))
                      for color in range(MAX_COLORS) if color not in keys
                      for r, c in np.argwhere(belief == KEY0 + color)]
            key_target = _nearest(needed, dist)
            if key_target is not None:
                objectives.append((key_target, False))
        if roam is not None and roam != pos and passable[roam]:
            objectives.append((roam, True))
        # Fresh roam picks: prefer cells never stood on that read cleanly
        # free this frame; fall back to unreadable ones (possibly walls).
        unvisited_free = [(int(r), int(c))
                          for r, c in np.argwhere((memory == UNKNOWN) & (belief == FREE))]
        fresh = _nearest(unvisited_free, dist)
        if fresh is not None:
            objectives.append((fresh, True))
        unvisited_foggy = [(int(r), int(c))
                           for r, c in np.argwhere((memory == UNKNOWN) & (belief == UNKNOWN))]
        foggy = _nearest(unvisited_foggy, dist)
        if foggy is not None:
            objectives.append((foggy, True))
        for candidate, is_roam in objectives:
            step = _step_toward(passable, pos, candidate, deltas)
            if step is not None:
                return step, (candidate if is_roam else roam), reads
        return None, roam, reads

    belief, passable = resolve(memory)
    action, new_roam, goal_reads = choose(belief, passable, state.target)
    if action is None and (memory == READ_WALL).any():
        # Stranded: every believed route is cut off by penciled-in walls.
        # Distrust those readings (own path and bumps are kept) and retry.
        memory[memory == READ_WALL] = UNKNOWN
        belief, passable = resolve(memory)
        action, new_roam, goal_reads = choose(belief, passable, state.target)
    if action is None:
        action = 0  # nothing readable and nothing reachable: stall to timeout
    if new_roam is not None and (new_roam == pos or not passable[new_roam]):
        new_roam = None  # reached or discredited
    new_state = ExpertState(belief=belief, pos=pos, keys_believed_held=keys,
                            step_memory=state.step_memory + 1, family=state.family,
                            target=new_roam, memory=memory, last_action=action,
                            goal_reads=goal_reads)
    return action, new_state


class NoiseRobustExpert:
    """Driver for the noise-blindfolded expert."""

    kind = NOISE

    def __init__(self, task: TaskSpec, blindfold: BlindfoldSpec, rng: SplitMix64):
        if blindfold.kind != "noise":
            raise ConfigError("noise expert requires a noise blindfold")
        self.blindfold = blindfold
        self.rng = rng
        self.state = new_expert_state(task.family, task.height, task.width)
        self._action: int | None = None

    def observe(self, state: env_mod.EnvState) -> None:
        noisy = env_mod.render_masked_for_expert(state, self.blindfold, self.rng)
        self._action, self.state = noise_robust_act(self.state, noisy)

    def act(self) -> int:
        return self._action

    def representation_key(self) -> bytes:
        return self.state.representation_key()


# ---------------------------------------------------------------------------
# Exact Bayes-optimal expert for tiny task sets


class BayesExactExpert:
    """Bayes-optimal policy over an enumerable task set.

    Simulates all candidate tasks in lockstep, keeps the subset consistent
    with the masked observation history, and picks actions that minimize the
    expected number of remaining steps until the (task-dependent) goal. The
    value function is computed exactly: task subsets only ever shrink, so
    values are resolved bottom-up with a Dijkstra pass per subset stratum.
    """

    kind = BAYES_EXACT

    def __init__(self, tasks, prior, blindfold: BlindfoldSpec,
                 cap_tasks: int = 16, cap_dim: int = 7, cap_h: int = 30):
        if len(tasks) > cap_tasks:
            raise CapacityError(f"task set of {len(tasks)} exceeds cap {cap_tasks}")
        for t in tasks:
            if t.width > cap_dim or t.height > cap_dim:
                raise CapacityError(f"grid {t.width}x{t.height} exceeds cap {cap_dim}")
        if blindfold.kind == "noise":
            raise ConfigError("bayes expert supports deterministic blindfolds only")
        families = {t.family for t in tasks}
        shapes = {(t.height, t.width) for t in tasks}
        starts = {t.start for t in tasks}
        if len(families) != 1 or len(shapes) != 1 or len(starts) != 1:
            raise ConfigError("bayes expert needs a homogeneous task set")
        self.tasks = list(tasks)
        self.prior = [float(w) for w in prior]
        self.blindfold = blindfold
        self.family = self.tasks[0].family
        self.cap_h = cap_h
        self._deltas = family_deltas(self.family)
        self._value_cache: dict = {}
        self._steps = 0
        # live per-candidate environment states plus consistency support
        self._states = [env_mod.reset(t)[0] for t in self.tasks]
        self._support = list(range(len(self.tasks)))

    # -- consistency filtering ------------------------------------------------

    def _masked_bytes(self, state: env_mod.EnvState) -> bytes:
        obs = env_mod.render_masked_for_expert(state, self.blindfold, None)
        return obs.tobytes()

    def observe(self, state: env_mod.EnvState) -> None:
        seen = self._masked_bytes(state)
        self._support = [i for i in self._support
                        if self._masked_bytes(self._states[i]) == seen]
        if not self._support:
            raise PlanningError("no candidate task consistent with history")
        self._steps += 1
        if self._steps > self.cap_h:
            raise CapacityError(f"bayes expert stepped beyond horizon cap {self.cap_h}")

    def act(self) -> int:
        action, _ = self._best_action(tuple(self._support))
        for i in list(self._support):
            self._states[i], _ = env_mod.step(self._states[i], action)
        return action

    def representation_key(self) -> bytes:
        i = self._support[0]
        s = self._states[i]
        sup = ",".join(map(str, self._support))
        return f"{sup}|{s.agent[0]},{s.agent[1]}|{sorted(s.keys_held)}".encode()

    # -- exact value computation ----------------------------------------------

    def _node_key(self, support: tuple[int, ...]):
        s = self._states[support[0]]
        return (support, s.agent, s.keys_held, s.locks_opened)

    def _best_action(self, support: tuple[int, ...]) -> tuple[int, float]:
        states = {i: self._states[i] for i in support}
        return self._solve(support, states)

    def _solve(self, support, states) -> tuple[int, float]:
        """Optimal (action, expected remaining steps) for the live node."""
        node = self._frozen_node(support, states)
        value = self._stratum_values(support, node, states)
        cost, action = value[node]
        if cost == float("inf"):
            raise PlanningError("no informative action sequence reaches a goal")
        return action, cost

    @staticmethod
    def _frozen_node(support, states):
        s = states[support[0]]
        return (s.agent, s.keys_held, s.locks_opened)

    def _expand(self, support, states, action):
        """Apply one action to every candidate; returns (weight_done, groups)
        where groups map successor observation signatures to (support, states)."""
        done_weight = 0.0
        total = sum(self.prior[i] for i in support)
        groups: dict = {}
        for i in support:
            nstate, result = env_mod.step(states[i], action)
            if result.success:
                done_weight += self.prior[i] / total
                continue
            sig = self._masked_bytes(nstate)
            groups.setdefault(sig, ([], {}))
            groups[sig][0].append(i)
            groups[sig][1][i] = nstate
        return done_weight, groups

    def _stratum_values(self, support, entry_node, states):
        """Exact values for every node reachable inside this support stratum.

        Within a fixed support all candidates share position and inventory,
        and transitions that keep the support intact are deterministic, so
        the stratum is a deterministic shortest-path problem whose exits
        (support splits or goal hits) have recursively-computed values.
        """
        cache_key = (support, entry_node)
        if cache_key in self._value_cache:
            return self._value_cache[cache_key]

        # Explore the deterministic within-stratum graph from the entry node.
        nodes: set = set()
        edges: dict = {}
        rev: dict = {}
        stack = [(entry_node, states)]
        while stack:
            node, st = stack.pop()
            if node in nodes:
                continue
            nodes.add(node)
            edges[node] = []
            for action in range(len(self._deltas)):
                done_w, groups = self._expand(support, st, action)
                if len(groups) == 1 and done_w == 0.0:
                    (sub, sub_states), = groups.values()
                    if tuple(sub) == support:
                        nxt = self._frozen_node(support, sub_states)
                        edges[node].append((action, nxt, None))
                        rev.setdefault(nxt, []).append(node)
                        stack.append((nxt, sub_states))
                        continue
                # exit edge: some candidates finish or the support splits
                exit_cost = 0.0
                for sub, sub_states in groups.values():
                    sub = tuple(sub)
                    w = sum(self.prior[i] for i in sub) / sum(self.prior[i] for i in support)
                    sub_entry = self._frozen_node(sub, sub_states)
                    sub_vals = self._stratum_values(sub, sub_entry, sub_states)
                    exit_cost += w * sub_vals[sub_entry][0]
                edges[node].append((action, None, exit_cost))

        # Dijkstra over stratum nodes; exits seed the frontier.
        cost = {n: float("inf") for n in nodes}
        heap = []
        for n in nodes:
            best = min((1.0 + ec for _, nxt, ec in edges[n] if nxt is None),
                       default=float("inf"))
            if best < float("inf"):
                cost[n] = best
                heapq.heappush(heap, (best, n))
        while heap:
            v, n = heapq.heappop(heap)
            if v > cost[n]:
                continue
            for p in rev.get(n, []):
                if 1.0 + v < cost[p]:
                    cost[p] = 1.0 + v
                    heapq.heappush(heap, (1.0 + v, p))

        # Best action per node: lowest expected cost, ties to the lowest id.
        values = {}
        for n in nodes:
            best = (float("inf"), -1)
            for action, nxt, ec in edges[n]:
                c = 1.0 + (ec if nxt is None else cost[nxt])
                if c < best[0] - 1e-12:
                    best = (c, action)
            values[n] = best
        self._value_cache[cache_key] = values
        return values


def bayes_exact_act(tasks, prior, blindfold: BlindfoldSpec, true_task: TaskSpec,
                    actions_so_far) -> int:
    """Replay a masked history in the true task and return the Bayes-optimal
    next action. Convenience wrapper over BayesExactExpert."""
    expert = BayesExactExpert(tasks, prior, blindfold)
    state, _ = env_mod.reset(true_task)
    for a in actions_so_far:
        expert.observe(state)
        expert.act()
        state, _ = env_mod.step(state, a)
    expert.observe(state)
    return expert.act()


# ---------------------------------------------------------------------------
# Demonstration rollout


def make_driver(kind: str, task: TaskSpec, blindfold: BlindfoldSpec | None,
                rng=None, tasks=None, prior=None):
    if kind == INFORMED:
        return InformedExpert(task)
    if kind == BLINDFOLDED:
        return FrontierExpert(task, blindfold, rng)
    if kind == NOISE:
        return NoiseRobustExpert(task, blindfold, rng)
    if kind == BAYES_EXACT:
        return BayesExactExpert(tasks, prior, blindfold)
    raise ConfigError(f"unknown expert kind {kind!r}")


def demonstrate(task: TaskSpec, kind: str, blindfold: BlindfoldSpec | None = None,
                max_steps: int | None = None, rng=None, tasks=None, prior=None):
    """Roll the chosen expert on the task, logging unmasked observations.

    Returns a Trajectory whose ``success`` flag is False on timeout; callers
    keep only successes when building training datasets.
    """
    from .datapipe import Trajectory

    if blindfold is None:
        blindfold = BlindfoldSpec(kind="none")
    if max_steps is None:
        max_steps = env_mod.horizon(task.family)
    driver = make_driver(kind, task, blindfold, rng=rng, tasks=tasks, prior=prior)
    state, obs = env_mod.reset(task)
    observations, actions, rewards, dones = [], [], [], []
    while not state.done and len(actions) < max_steps:
        driver.observe(state)
        action = driver.act()
        state, result = env_mod.step(state, action)
        observations.append(obs)
        actions.append(action)
        rewards.append(result.reward)
        dones.append(result.done)
        obs = result.obs
    return Trajectory(
        family=task.family,
        task_seed=task.seed,
        width=task.width,
        height=task.height,
        color_count=task.color_count,
        expert_kind=kind,
        blindfold=blindfold,
        observations=np.stack(observations) if observations else
        np.zeros((0,) + obs.shape, dtype=np.float64),
        actions=np.array(actions, dtype=np.int64),
        rewards=np.array(rewards, dtype=np.float64),
        dones=np.array(dones, dtype=bool),
        success=state.success,
    )

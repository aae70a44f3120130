"""Procedural task generation: mazes and keys-and-locks levels.

A task is a small grid MDP. Mazes are carved with a recursive backtracker on
the odd lattice, which produces corridor trees (every pair of cells joined by
a unique simple path). Keylock levels overlay color-coded key/lock pairs on a
maze so that the goal is gated behind the locks; placements are rejection
sampled from the task's own seed stream until a feasible pickup order exists.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FormatError, GenerationError
from .rng import SplitMix64

# Cell codes. Keys and locks are per color: KEY0 + c, LOCK0 + c.
WALL = 0
FREE = 1
GOAL = 2
KEY0 = 3
LOCK0 = 6
MAX_COLORS = 3

FAMILIES = ("maze", "keylock")

# Movement deltas in fixed action order: up, down, left, right, then
# diagonals up-left, up-right, down-left, down-right.
DELTAS_4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
DELTAS_8 = DELTAS_4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))

_CELL_CHARS = {WALL: "#", FREE: ".", GOAL: "G"}
_CELL_CHARS.update({KEY0 + c: chr(ord("a") + c) for c in range(MAX_COLORS)})
_CELL_CHARS.update({LOCK0 + c: chr(ord("A") + c) for c in range(MAX_COLORS)})
_CHAR_CELLS = {v: k for k, v in _CELL_CHARS.items()}

TASKSPEC_TAG = "taskspec-v1"
TASKSPLIT_TAG = "tasksplit-v1"


def is_key(code: int) -> bool:
    return KEY0 <= code < KEY0 + MAX_COLORS


def is_lock(code: int) -> bool:
    return LOCK0 <= code < LOCK0 + MAX_COLORS


def key_color(code: int) -> int:
    return code - KEY0


def lock_color(code: int) -> int:
    return code - LOCK0


def family_deltas(family: str):
    return DELTAS_4 if family == "maze" else DELTAS_8


@dataclass(frozen=True)
class TaskSpec:
    """One task: a grid layout plus start and goal."""

    family: str
    width: int
    height: int
    seed: int
    cells: np.ndarray  # uint8 (height, width), read-only
    start: tuple[int, int]
    goal: tuple[int, int]
    color_count: int = 0

    def __post_init__(self):
        self.cells.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, TaskSpec):
            return NotImplemented
        return (
            self.family == other.family
            and self.width == other.width
            and self.height == other.height
            and self.seed == other.seed
            and self.start == other.start
            and self.goal == other.goal
            and self.color_count == other.color_count
            and np.array_equal(self.cells, other.cells)
        )

    def __hash__(self):
        return hash((self.family, self.width, self.height, self.seed,
                     self.start, self.goal, self.color_count,
                     self.cells.tobytes()))

    def to_record(self) -> str:
        """Single-line serialization, version-tagged."""
        chars = "".join(_CELL_CHARS[int(v)] for v in self.cells.reshape(-1))
        return "|".join(
            [
                TASKSPEC_TAG,
                self.family,
                str(self.width),
                str(self.height),
                str(self.seed),
                str(self.color_count),
                f"{self.start[0]},{self.start[1]}",
                f"{self.goal[0]},{self.goal[1]}",
                chars,
            ]
        )

    @classmethod
    def from_record(cls, line: str) -> "TaskSpec":
        parts = line.strip().split("|")
        if len(parts) != 9 or parts[0] != TASKSPEC_TAG:
            raise FormatError(f"not a {TASKSPEC_TAG} record")
        family, width, height, seed, colors, start, goal, chars = parts[1:]
        width, height = int(width), int(height)
        if len(chars) != width * height:
            raise FormatError("grid length does not match dimensions")
        try:
            codes = [_CHAR_CELLS[ch] for ch in chars]
        except KeyError as e:
            raise FormatError(f"unknown cell code {e}") from None
        cells = np.array(codes, dtype=np.uint8).reshape(height, width)
        sr, sc = start.split(",")
        gr, gc = goal.split(",")
        return cls(
            family=family,
            width=width,
            height=height,
            seed=int(seed),
            cells=cells,
            start=(int(sr), int(sc)),
            goal=(int(gr), int(gc)),
            color_count=int(colors),
        )


@dataclass(frozen=True)
class TaskSplit:
    """Disjoint train/test task lists with a uniform prior over train."""

    train: tuple[TaskSpec, ...]
    test: tuple[TaskSpec, ...]
    split_seed: int
    prior: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not self.prior:
            m = len(self.train)
            object.__setattr__(self, "prior", tuple([1.0 / m] * m))

    @property
    def m(self) -> int:
        return len(self.train)

    def save(self, path) -> None:
        lines = [f"{TASKSPLIT_TAG}|{self.split_seed}|{len(self.train)}|{len(self.test)}"]
        lines += [f"train|{t.to_record()}" for t in self.train]
        lines += [f"test|{t.to_record()}" for t in self.test]
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "TaskSplit":
        with open(path) as f:
            lines = [ln for ln in f.read().splitlines() if ln]
        head = lines[0].split("|")
        if head[0] != TASKSPLIT_TAG:
            raise FormatError(f"not a {TASKSPLIT_TAG} file")
        split_seed, n_train, n_test = int(head[1]), int(head[2]), int(head[3])
        train, test = [], []
        for ln in lines[1:]:
            side, record = ln.split("|", 1)
            (train if side == "train" else test).append(TaskSpec.from_record(record))
        if len(train) != n_train or len(test) != n_test:
            raise FormatError("split counts do not match header")
        return cls(train=tuple(train), test=tuple(test), split_seed=split_seed)


def _check_dims(width: int, height: int) -> None:
    if width < 5 or height < 5 or width % 2 == 0 or height % 2 == 0:
        raise DimensionError(f"dimensions must be odd and >= 5, got {width}x{height}")


def _carve_maze(width: int, height: int, rng: SplitMix64) -> np.ndarray:
    """Recursive backtracker over odd-lattice nodes; returns a wall/free grid."""
    cells = np.full((height, width), WALL, dtype=np.uint8)
    start = (1, 1)
    cells[start] = FREE
    stack = [start]
    while stack:
        r, c = stack[-1]
        candidates = []
        for dr, dc in ((-2, 0), (2, 0), (0, -2), (0, 2)):
            nr, nc = r + dr, c + dc
            if 1 <= nr < height - 1 and 1 <= nc < width - 1 and cells[nr, nc] == WALL:
                candidates.append((nr, nc))
        if not candidates:
            stack.pop()
            continue
        nr, nc = candidates[rng.randrange(len(candidates))]
        cells[(r + nr) // 2, (c + nc) // 2] = FREE
        cells[nr, nc] = FREE
        stack.append((nr, nc))
    return cells


def _free_positions(cells: np.ndarray) -> list[tuple[int, int]]:
    rows, cols = np.nonzero(cells != WALL)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def _bfs_path(cells: np.ndarray, src: tuple[int, int], dst: tuple[int, int],
              deltas) -> list[tuple[int, int]] | None:
    """Shortest path over non-wall cells, ignoring lock semantics."""
    height, width = cells.shape
    prev = {src: None}
    q = deque([src])
    while q:
        pos = q.popleft()
        if pos == dst:
            path = []
            while pos is not None:
                path.append(pos)
                pos = prev[pos]
            return path[::-1]
        r, c = pos
        for dr, dc in deltas:
            nxt = (r + dr, c + dc)
            if nxt in prev:
                continue
            if 0 <= nxt[0] < height and 0 <= nxt[1] < width and cells[nxt] != WALL:
                prev[nxt] = pos
                q.append(nxt)
    return None


def generate_task(family: str, width: int, height: int, seed: int,
                  color_count: int = 1) -> TaskSpec:
    """Generate one solvable task, deterministically from its seed."""
    _check_dims(width, height)
    if family not in FAMILIES:
        raise DimensionError(f"unknown family {family!r}")
    rng = SplitMix64(seed).split()

    if family == "maze":
        cells = _carve_maze(width, height, rng)
        start = (1, 1)
        nodes = [p for p in _free_positions(cells) if p != start]
        goal = nodes[rng.randrange(len(nodes))]
        cells[goal] = GOAL
        return TaskSpec(family="maze", width=width, height=height, seed=seed,
                        cells=cells, start=start, goal=goal, color_count=0)

    if not 1 <= color_count <= MAX_COLORS:
        raise DimensionError(f"keylock requires 1..{MAX_COLORS} colors")
    base = _carve_maze(width, height, rng)
    start = (1, 1)
    nodes = [p for p in _free_positions(base) if p != start]
    # The carved maze is a tree, so any lock on the start-goal path gates the
    # goal; goal choice, lock placement, and key scatter are all re-rolled
    # from the same seed stream until a feasible pickup order exists.
    for _ in range(1000):
        goal = nodes[rng.randrange(len(nodes))]
        cells = base.copy()
        cells[goal] = GOAL
        path = _bfs_path(cells, start, goal, DELTAS_4)
        interior = [p for p in path[1:-1]]
        free = [p for p in _free_positions(cells) if p != start and p != goal]
        if len(interior) < color_count or len(free) < 2 * color_count:
            continue
        used: set[tuple[int, int]] = set()
        for color in range(color_count):
            lock_choices = [p for p in interior if p not in used]
            lock = lock_choices[rng.randrange(len(lock_choices))]
            used.add(lock)
            key_choices = [p for p in free if p not in used]
            key = key_choices[rng.randrange(len(key_choices))]
            used.add(key)
            cells[lock] = LOCK0 + color
            cells[key] = KEY0 + color
        task = TaskSpec(family="keylock", width=width, height=height, seed=seed,
                        cells=cells, start=start, goal=goal,
                        color_count=color_count)
        # Feasible pickup order must exist, and the locks must actually gate
        # the goal: with no keys the goal has to be unreachable.
        no_keys = grid_distances(passable_mask(cells, frozenset()), start,
                                 family_deltas("keylock"))
        if solvable(task) and no_keys[goal] < 0:
            return task
    raise GenerationError(
        f"no feasible keylock placement in 1000 attempts (seed {seed})")


def generate_split(family: str, width: int, height: int, m_train: int,
                   m_test: int, split_seed: int, color_count: int = 1) -> TaskSplit:
    """Disjoint train/test tasks with deterministic seed assignment."""
    if m_train < 1 or m_test < 1:
        raise DimensionError("m_train and m_test must be >= 1")
    rng = SplitMix64(split_seed)
    seeds: list[int] = []
    seen: set[int] = set()
    while len(seeds) < m_train + m_test:
        s = rng.next_u64()
        if s not in seen:
            seen.add(s)
            seeds.append(s)
    tasks = [generate_task(family, width, height, s, color_count) for s in seeds]
    return TaskSplit(train=tuple(tasks[:m_train]), test=tuple(tasks[m_train:]),
                     split_seed=split_seed)


def move_allowed(passable: np.ndarray, r: int, c: int, dr: int, dc: int) -> bool:
    """Movement rule shared by the environment and all planners: the target
    must be passable, and a diagonal move must not cut a corner (both
    orthogonal intermediate cells must be passable too)."""
    height, width = passable.shape
    nr, nc = r + dr, c + dc
    if not (0 <= nr < height and 0 <= nc < width and passable[nr, nc]):
        return False
    if dr != 0 and dc != 0:
        return bool(passable[r + dr, c] and passable[r, c + dc])
    return True


def grid_distances(passable: np.ndarray, source: tuple[int, int], deltas) -> np.ndarray:
    """BFS distance field over a boolean passability mask; -1 = unreachable."""
    height, width = passable.shape
    dist = np.full((height, width), -1, dtype=np.int32)
    if not passable[source]:
        return dist
    dist[source] = 0
    q = deque([source])
    while q:
        r, c = q.popleft()
        d = dist[r, c] + 1
        for dr, dc in deltas:
            if move_allowed(passable, r, c, dr, dc) and dist[r + dr, c + dc] < 0:
                dist[r + dr, c + dc] = d
                q.append((r + dr, c + dc))
    return dist


def passable_mask(cells: np.ndarray, keys_held) -> np.ndarray:
    """Cells the agent may enter given the keys it holds."""
    mask = cells != WALL
    for color in range(MAX_COLORS):
        if color not in keys_held:
            mask &= cells != LOCK0 + color
    return mask


def _key_fixpoint(task: TaskSpec) -> tuple[set[int], np.ndarray]:
    """Grow the key set by staged flooding until stable; returns keys and mask."""
    deltas = family_deltas(task.family)
    keys: set[int] = set()
    while True:
        mask = passable_mask(task.cells, keys)
        dist = grid_distances(mask, task.start, deltas)
        reach = dist >= 0
        found = set(keys)
        for color in range(task.color_count):
            rs, cs = np.nonzero(task.cells == KEY0 + color)
            if len(rs) and reach[rs[0], cs[0]]:
                found.add(color)
        if found == keys:
            return keys, reach
        keys = found


def solvable(task: TaskSpec) -> bool:
    """Goal reachable under key/lock semantics (staged flooding)."""
    _, reach = _key_fixpoint(task)
    return bool(reach[task.goal])


def reachable_cells(task: TaskSpec) -> set[tuple[int, int]]:
    """All positions reachable from start with optimal key collection."""
    _, reach = _key_fixpoint(task)
    rows, cols = np.nonzero(reach)
    return {(int(r), int(c)) for r, c in zip(rows, cols)}

"""Trajectory recording and the persistent dataset container.

File layout (all integers little-endian):

    magic "BLDC" | version u16 | manifest_len u32 | manifest JSON (sorted keys)
    then per trajectory: record_len u32 | record bytes | crc32 u32

Record bytes: header struct (family u8, task_seed u64, width u16, height u16,
color_count u8, expert_kind u8, success u8, steps u32, channels u8,
blindfold_len u16) + blindfold JSON + observations as uint8 (observations are
always unmasked 0/1 grids, stored compactly and decoded back to float64) +
actions u8 + rewards u8 + dones u8.

Encoding is canonical, so save(load(path)) reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import env as env_mod
from .blindfold import BlindfoldSpec
from .errors import (CapacityError, ChecksumError, FormatError,
                     TruncationError, VersionMismatchError)
from .rng import SplitMix64
from .worldgen import FAMILIES, TaskSpec, generate_task

MAGIC = b"BLDC"
VERSION = 1

_EXPERT_CODES = {"informed": 0, "blindfolded": 1, "noise": 2, "bayes_exact": 3,
                 "human": 4, "policy": 5}
_EXPERT_NAMES = {v: k for k, v in _EXPERT_CODES.items()}

_HEADER = struct.Struct("<BQHHBBBIBH")


@dataclass
class Trajectory:
    """One logged episode. Observations are always unmasked."""

    family: str
    task_seed: int
    width: int
    height: int
    color_count: int
    expert_kind: str
    blindfold: BlindfoldSpec
    observations: np.ndarray  # (T, C, h, w) float64, values 0/1
    actions: np.ndarray       # (T,) int64
    rewards: np.ndarray       # (T,) float64
    dones: np.ndarray         # (T,) bool
    success: bool

    def __post_init__(self):
        t = len(self.actions)
        if not (len(self.observations) == len(self.rewards) == len(self.dones) == t):
            raise FormatError("trajectory field lengths disagree")
        if t and self.dones[:-1].any():
            raise FormatError("done may only be set on the last record")
        if round(float(self.rewards.sum()), 9) not in (0.0, 1.0):
            raise FormatError("episode reward total must be 0 or 1")

    @property
    def steps(self) -> int:
        return len(self.actions)

    def task(self) -> TaskSpec:
        return generate_task(self.family, self.width, self.height,
                             self.task_seed, max(1, self.color_count))


@dataclass
class Dataset:
    trajectories: list[Trajectory]
    split_id: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def total_steps(self) -> int:
        return sum(t.steps for t in self.trajectories)

    def manifest(self) -> dict:
        by_task: dict[int, int] = {}
        for t in self.trajectories:
            by_task[t.task_seed] = by_task.get(t.task_seed, 0) + 1
        return {
            "version": VERSION,
            "split_id": self.split_id,
            "n_trajectories": len(self.trajectories),
            "n_tasks": len(by_task),
            "total_steps": self.total_steps,
            "n_successful": sum(1 for t in self.trajectories if t.success),
            "extra": self.extra,
        }

    def by_task(self) -> dict[int, list[Trajectory]]:
        groups: dict[int, list[Trajectory]] = {}
        for t in self.trajectories:
            groups.setdefault(t.task_seed, []).append(t)
        return groups


def _encode_trajectory(t: Trajectory) -> bytes:
    obs = t.observations
    if obs.size and not np.array_equal(obs, obs.astype(np.uint8)):
        raise FormatError("unmasked observations must be integral 0/1 grids")
    channels = obs.shape[1] if obs.ndim == 4 else env_mod.observation_channels(
        t.family, t.color_count)
    blindfold = json.dumps(t.blindfold.to_json(), sort_keys=True).encode()
    head = _HEADER.pack(
        FAMILIES.index(t.family), t.task_seed, t.width, t.height,
        t.color_count, _EXPERT_CODES[t.expert_kind], int(t.success),
        t.steps, channels, len(blindfold))
    body = b"".join([
        head,
        blindfold,
        obs.astype(np.uint8).tobytes(),
        t.actions.astype(np.uint8).tobytes(),
        t.rewards.astype(np.uint8).tobytes(),
        t.dones.astype(np.uint8).tobytes(),
    ])
    return body


def _decode_trajectory(body: bytes) -> Trajectory:
    (family_code, task_seed, width, height, color_count, expert_code,
     success, steps, channels, blindfold_len) = _HEADER.unpack_from(body, 0)
    off = _HEADER.size
    blindfold = BlindfoldSpec.from_json(json.loads(body[off:off + blindfold_len]))
    off += blindfold_len
    obs_n = steps * channels * height * width
    obs = np.frombuffer(body, dtype=np.uint8, count=obs_n, offset=off)
    obs = obs.reshape(steps, channels, height, width).astype(np.float64)
    off += obs_n
    actions = np.frombuffer(body, dtype=np.uint8, count=steps, offset=off).astype(np.int64)
    off += steps
    rewards = np.frombuffer(body, dtype=np.uint8, count=steps, offset=off).astype(np.float64)
    off += steps
    dones = np.frombuffer(body, dtype=np.uint8, count=steps, offset=off).astype(bool)
    return Trajectory(
        family=FAMILIES[family_code], task_seed=task_seed, width=width,
        height=height, color_count=color_count,
        expert_kind=_EXPERT_NAMES[expert_code], blindfold=blindfold,
        observations=obs, actions=actions, rewards=rewards, dones=dones,
        success=bool(success))


def save(dataset: Dataset, path) -> None:
    manifest = json.dumps(dataset.manifest(), sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        f.write(struct.pack("<I", len(manifest)))
        f.write(manifest)
        for t in dataset.trajectories:
            body = _encode_trajectory(t)
            f.write(struct.pack("<I", len(body)))
            f.write(body)
            f.write(struct.pack("<I", zlib.crc32(body)))


def load(path) -> Dataset:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise FormatError("not a dataset file (bad magic)")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise VersionMismatchError(f"dataset version {version}, expected {VERSION}")
    (mlen,) = struct.unpack_from("<I", data, 6)
    off = 10
    if off + mlen > len(data):
        raise TruncationError("manifest truncated")
    manifest = json.loads(data[off:off + mlen])
    off += mlen
    trajectories = []
    index = 0
    while off < len(data):
        if off + 4 > len(data):
            raise TruncationError(f"record {index} length field truncated")
        (rlen,) = struct.unpack_from("<I", data, off)
        off += 4
        if off + rlen + 4 > len(data):
            raise TruncationError(f"record {index} truncated")
        body = data[off:off + rlen]
        off += rlen
        (crc,) = struct.unpack_from("<I", data, off)
        off += 4
        if zlib.crc32(body) != crc:
            raise ChecksumError(index)
        trajectories.append(_decode_trajectory(body))
        index += 1
    ds = Dataset(trajectories=trajectories, split_id=manifest.get("split_id", ""),
                 extra=manifest.get("extra", {}))
    if manifest.get("n_trajectories") != len(trajectories):
        raise FormatError("manifest trajectory count disagrees with records")
    return ds


def filter_successful(dataset: Dataset) -> Dataset:
    kept = [t for t in dataset.trajectories if t.success]
    return Dataset(trajectories=kept, split_id=dataset.split_id,
                   extra=dict(dataset.extra))


def matched_steps_subset(informed_dataset: Dataset, target_total_steps: int,
                         extra_task_pool, seed: int) -> Dataset:
    """Extend an informed-expert dataset with demonstrations on fresh tasks
    until its total step count reaches the target (the matched-steps
    control). Pool order is shuffled deterministically from the seed."""
    from .experts import INFORMED, demonstrate

    out = list(informed_dataset.trajectories)
    total = sum(t.steps for t in out)
    pool = list(extra_task_pool)
    SplitMix64(seed).shuffle(pool)
    i = 0
    while total < target_total_steps:
        if i >= len(pool):
            raise CapacityError(
                f"task pool exhausted at {total}/{target_total_steps} steps")
        traj = demonstrate(pool[i], INFORMED)
        i += 1
        if not traj.success:
            continue
        out.append(traj)
        total += traj.steps
    return Dataset(trajectories=out, split_id=informed_dataset.split_id,
                   extra={**informed_dataset.extra, "matched_steps": target_total_steps})


def replay_matches(trajectory: Trajectory, task: TaskSpec | None = None) -> bool:
    """True iff the stored records replay bit-exactly through the environment."""
    task = task or trajectory.task()
    records = env_mod.replay(task, trajectory.actions)
    if len(records) != trajectory.steps:
        return False
    for i, (obs, action, reward, done) in enumerate(records):
        if not np.array_equal(obs, trajectory.observations[i]):
            return False
        if action != trajectory.actions[i] or reward != trajectory.rewards[i]:
            return False
        if done != bool(trajectory.dones[i]):
            return False
    return True

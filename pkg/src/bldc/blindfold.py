"""Observation masking operators applied to the demonstrator's view only.

Kinds:
  none    identity.
  fov     cells beyond a Chebyshev radius of the agent are blanked and a
          mask-sentinel channel (appended as the last channel) is set there.
  noise   per-cell-per-channel additive noise, uniform on [0, p] with p drawn
          once per observation uniform on [0, max_level], clamped to [0, 1].
  region  fixed rectangles are blanked and flagged in the sentinel channel.

The sentinel is an extra channel rather than a magic value so that masked
observations stay in [0, 1] and scripted experts can detect unknown cells
unambiguously. For fov/region, ``apply`` appends the sentinel when given a
raw observation; passing ``content_channels`` marks the input as already
masked (content plus sentinel), in which case the operator is idempotent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

KINDS = ("none", "fov", "noise", "region")


@dataclass(frozen=True)
class BlindfoldSpec:
    kind: str = "none"
    radius: int = 0
    max_level: float = 0.0
    regions: tuple[tuple[int, int, int, int], ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown blindfold kind {self.kind!r}")
        if self.kind == "fov" and self.radius < 1:
            raise ConfigError("fov blindfold requires radius >= 1")
        if self.kind == "noise" and not 0.0 <= self.max_level <= 1.0:
            raise ConfigError("noise max_level must be in [0, 1]")
        if self.kind == "region":
            for rect in self.regions:
                r0, c0, r1, c1 = rect
                if r1 <= r0 or c1 <= c0:
                    raise ConfigError(f"empty region rectangle {rect}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "radius": self.radius,
                "max_level": self.max_level,
                "regions": [list(r) for r in self.regions]}

    @classmethod
    def from_json(cls, data: dict) -> "BlindfoldSpec":
        return cls(kind=data.get("kind", "none"),
                   radius=int(data.get("radius", 0)),
                   max_level=float(data.get("max_level", 0.0)),
                   regions=tuple(tuple(r) for r in data.get("regions", ())))


def default_radius(family: str, width: int) -> int:
    """Visible-window radius: an eighth of the width for mazes, a sixth for
    keylock levels, at least one cell."""
    frac = 8 if family == "maze" else 6
    return max(1, math.ceil(width / frac))


def _split_content(spec: BlindfoldSpec, obs: np.ndarray,
                   content_channels: int | None):
    n = obs.shape[0]
    if content_channels is None or content_channels == n:
        return obs, None  # raw input, sentinel to be appended
    if content_channels == n - 1:
        return obs[:-1], obs[-1]
    raise ConfigError(f"observation has {n} channels, expected "
                      f"{content_channels} or {content_channels + 1}")


def apply(spec: BlindfoldSpec, obs: np.ndarray, agent_pos: tuple[int, int],
          rng=None, content_channels: int | None = None) -> np.ndarray:
    """Mask one observation. Pure given (spec, obs, agent_pos, rng state)."""
    if spec.kind == "none":
        return obs.copy()

    if spec.kind == "noise":
        if rng is None:
            raise ConfigError("noise blindfold requires an rng")
        content, _ = _split_content(spec, obs, content_channels)
        p = rng.uniform(0.0, spec.max_level)
        noise = rng.fill_uniform(content.size).reshape(content.shape) * p
        return np.clip(content + noise, 0.0, 1.0)

    content, _ = _split_content(spec, obs, content_channels)
    _, height, width = content.shape
    if spec.kind == "fov":
        rows = np.abs(np.arange(height) - agent_pos[0])
        cols = np.abs(np.arange(width) - agent_pos[1])
        hidden = np.maximum(rows[:, None], cols[None, :]) > spec.radius
    else:  # region
        hidden = np.zeros((height, width), dtype=bool)
        for r0, c0, r1, c1 in spec.regions:
            hidden[r0:r1, c0:c1] = True
    out = np.empty((content.shape[0] + 1, height, width), dtype=np.float64)
    out[:-1] = np.where(hidden, 0.0, content)
    out[-1] = hidden.astype(np.float64)
    return out

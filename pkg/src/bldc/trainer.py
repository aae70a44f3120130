"""Behavioral-cloning optimization loop.

Adam on the per-step mean negative log likelihood over minibatches of whole
trajectories. Training is deterministic end to end for a fixed seed: epoch
shuffles come from the run's own generator, batches keep a fixed order, and
gradient reduction order never changes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import seqpolicy
from .datapipe import Dataset
from .errors import ConfigError, UsageError
from .rng import SplitMix64
from .seqpolicy import ArchSpec


@dataclass(frozen=True)
class Hyper:
    learning_rate: float = 1e-3
    lr_schedule: tuple[tuple[int, float], ...] = ()  # (epoch, multiplier)
    batch_size: int = 32
    epochs: int = 60
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 0.0  # 0 disables clipping
    seed: int = 0
    bucket_factor: int = 4  # length-bucket batches within shuffled chunks
    checkpoint_epochs: tuple[int, ...] = ()
    opt_error_every: int = 0  # 0: only at the end

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("learning_rate, batch_size, epochs must be positive")
        steps = [s for s, _ in self.lr_schedule]
        if steps != sorted(steps):
            raise ConfigError("lr_schedule epochs must be increasing")


# Reference presets: "paper-b" mirrors the large-scale gridworld experiments,
# "paper-c" the manipulation ones. Desk-scale defaults differ deliberately.
PRESETS = {
    "desk": Hyper(),
    "paper-b": Hyper(learning_rate=1e-5, batch_size=256, epochs=60),
    "paper-c": Hyper(learning_rate=3e-4, batch_size=1024, epochs=60,
                     lr_schedule=((10, 0.5), (100, 0.5), (150, 0.5), (200, 0.5))),
}


@dataclass
class OptError:
    """Argmax mismatch rate on the training demonstrations, under both
    normalizations: realized trajectory lengths and the nominal horizon."""

    mismatches: int
    realized_steps: int
    nominal_steps: int

    @property
    def rate(self) -> float:
        return self.mismatches / max(1, self.realized_steps)

    @property
    def rate_nominal(self) -> float:
        return self.mismatches / max(1, self.nominal_steps)


@dataclass
class TrainReport:
    loss_curve: list[float] = field(default_factory=list)       # per-step mean
    opt_error_curve: list[tuple[int, float]] = field(default_factory=list)
    checkpoints: list[tuple[int, np.ndarray]] = field(default_factory=list)
    saturated_steps: int = 0
    wall_clock: float = 0.0
    final_opt_error: OptError | None = None


def opt_error(params: np.ndarray, arch: ArchSpec, dataset: Dataset,
              nominal_horizon: int | None = None) -> OptError:
    """Exact empirical argmax-mismatch rate of the policy on the dataset."""
    from .env import horizon

    trajs = dataset.trajectories
    if not trajs:
        return OptError(0, 0, 0)
    mismatches = 0
    for i in range(0, len(trajs), 64):
        mismatches += seqpolicy.argmax_mismatches(params, arch, trajs[i:i + 64])
    realized = sum(t.steps for t in trajs)
    h = nominal_horizon or horizon(trajs[0].family)
    return OptError(mismatches=mismatches, realized_steps=realized,
                    nominal_steps=len(trajs) * h)


def _batches(order: list[int], lengths: list[int], batch_size: int,
             bucket_factor: int):
    """Fixed-size batches over a shuffled order; within chunks of
    batch_size*bucket_factor, indices are sorted by length to limit padding."""
    chunk = batch_size * max(1, bucket_factor)
    out = []
    for c0 in range(0, len(order), chunk):
        part = order[c0:c0 + chunk]
        if bucket_factor > 1:
            part = sorted(part, key=lambda i: (lengths[i], i))
        for b0 in range(0, len(part), batch_size):
            out.append(part[b0:b0 + batch_size])
    return out


def train(dataset: Dataset, arch: ArchSpec, hyper: Hyper):
    """Clone the dataset into a policy; returns (params, TrainReport)."""
    trajs = [t for t in dataset.trajectories if t.steps > 0]
    if not trajs:
        raise UsageError("cannot train on an empty dataset")
    t0 = time.monotonic()
    params = seqpolicy.init_params(arch, hyper.seed)
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    rng = SplitMix64(hyper.seed).split()
    report = TrainReport()
    lengths = [t.steps for t in trajs]
    lr = hyper.learning_rate
    schedule = dict(hyper.lr_schedule)
    adam_t = 0
    for epoch in range(1, hyper.epochs + 1):
        if epoch in schedule:
            lr *= schedule[epoch]
        order = rng.permutation(len(trajs))
        epoch_loss = 0.0
        epoch_steps = 0
        for batch_idx in _batches(order, lengths, hyper.batch_size, hyper.bucket_factor):
            batch = [trajs[i] for i in batch_idx]
            grad, loss = seqpolicy.grad_nll(params, arch, batch)
            if not np.isfinite(loss.total):
                raise UsageError(
                    f"non-finite loss at epoch {epoch}; lower the learning rate")
            grad /= max(1, loss.steps)  # per-step mean objective
            if hyper.clip_norm > 0:
                norm = float(np.linalg.norm(grad))
                if norm > hyper.clip_norm:
                    grad *= hyper.clip_norm / norm
            adam_t += 1
            m = hyper.beta1 * m + (1 - hyper.beta1) * grad
            v = hyper.beta2 * v + (1 - hyper.beta2) * grad * grad
            m_hat = m / (1 - hyper.beta1 ** adam_t)
            v_hat = v / (1 - hyper.beta2 ** adam_t)
            params = params - lr * m_hat / (np.sqrt(v_hat) + hyper.adam_eps)
            epoch_loss += loss.total
            epoch_steps += loss.steps
            report.saturated_steps += loss.saturated_steps
        report.loss_curve.append(epoch_loss / max(1, epoch_steps))
        if hyper.opt_error_every and epoch % hyper.opt_error_every == 0:
            err = opt_error(params, arch, Dataset(trajectories=trajs))
            report.opt_error_curve.append((epoch, err.rate))
        if epoch in hyper.checkpoint_epochs:
            report.checkpoints.append((epoch, params.copy()))
    report.final_opt_error = opt_error(params, arch, Dataset(trajectories=trajs))
    report.opt_error_curve.append((hyper.epochs, report.final_opt_error.rate))
    report.checkpoints.append((hyper.epochs, params.copy()))
    report.wall_clock = time.monotonic() - t0
    return params, report

"""Exact desk-scale computation of the generalization-bound quantities.

On enumerable task sets with deterministic dynamics and experts, every term
of the bound can be computed exactly: the generalization error of a policy
along per-task optimal trajectories, the mutual information between task
identity and the demonstrator's internal representation (which reduces to the
representation's entropy when the demonstrator is deterministic), squared
Hellinger distances between trajectory distributions, and the indicator
versus 4 x Hellinger comparison used to relate cloning loss to action
disagreement. ``assemble_bound`` puts the pieces together with all hidden
constants set to one, except the explicit 8 in the within-task term.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from . import env as env_mod
from . import evalsuite, seqpolicy, trainer
from .blindfold import BlindfoldSpec
from .datapipe import Dataset
from .errors import CapacityError, ConfigError
from .experts import BLINDFOLDED, INFORMED, InformedExpert
from .rng import SplitMix64
from .seqpolicy import ArchSpec
from .worldgen import TaskSpec

CAP_TASKS = 16
CAP_DIM = 9
CAP_ENUM = 1 << 20


class PolicyDriver:
    """Adapter exposing a trained policy through the expert-driver protocol."""

    kind = "policy"

    def __init__(self, params: np.ndarray, arch: ArchSpec):
        self.params = params
        self.arch = arch
        self.hidden = seqpolicy.zero_hidden(arch)
        self._dist: np.ndarray | None = None

    def observe(self, state: env_mod.EnvState) -> None:
        obs = env_mod.render(state)
        self._dist, self.hidden = seqpolicy.forward(self.params, self.arch,
                                                    obs, self.hidden)

    def act(self) -> int:
        return int(np.argmax(self._dist))

    def action_distribution(self) -> np.ndarray:
        return self._dist

    def representation_key(self) -> bytes:
        return self.hidden.tobytes()

    def clone(self) -> "PolicyDriver":
        other = PolicyDriver(self.params, self.arch)
        other.hidden = self.hidden.copy()
        other._dist = None if self._dist is None else self._dist.copy()
        return other


def _check_caps(tasks, cap_tasks: int = CAP_TASKS, cap_dim: int = CAP_DIM) -> None:
    if len(tasks) > cap_tasks:
        raise CapacityError(f"{len(tasks)} tasks exceed cap {cap_tasks}")
    for t in tasks:
        if t.width > cap_dim or t.height > cap_dim:
            raise CapacityError(f"grid {t.width}x{t.height} exceeds cap {cap_dim}")


def _normalize_prior(prior, n: int) -> list[float]:
    if prior is None:
        return [1.0 / n] * n
    total = float(sum(prior))
    return [float(w) / total for w in prior]


def gen_error(policy_factory, tasks, prior=None) -> float:
    """Expected argmax disagreement with the per-task optimal policy, along
    that optimal policy's own trajectories.

    ``policy_factory(task)`` must return a fresh driver (scripted expert or
    PolicyDriver); per task the disagreement indicator is averaged over the
    optimal trajectory's steps, then averaged over tasks under the prior.
    """
    _check_caps(tasks)
    weights = _normalize_prior(prior, len(tasks))
    total = 0.0
    for task, w in zip(tasks, weights):
        optimal = InformedExpert(task)
        evaluated = policy_factory(task)
        state, _ = env_mod.reset(task)
        mismatches = 0
        steps = 0
        while not state.done:
            optimal.observe(state)
            a_star = optimal.act()
            evaluated.observe(state)
            if evaluated.act() != a_star:
                mismatches += 1
            steps += 1
            state, _ = env_mod.step(state, a_star)
        total += w * (mismatches / max(1, steps))
    return total


@dataclass
class MutualInfoProfile:
    """Per-step task/representation mutual information, in nats."""

    per_step: list[float]
    estimate: bool = False  # True when averaged over a seed grid

    @property
    def time_average(self) -> float:
        return float(np.mean(self.per_step))

    @property
    def final_step(self) -> float:
        return self.per_step[-1]

    def value(self, aggregation: str):
        if aggregation == "per_step_list":
            return list(self.per_step)
        if aggregation == "time_average":
            return self.time_average
        if aggregation == "final_step":
            return self.final_step
        raise ConfigError(f"unknown aggregation {aggregation!r}")


def _entropy(weights: dict) -> float:
    total = sum(weights.values())
    h = 0.0
    for w in weights.values():
        p = w / total
        if p > 0:
            h -= p * math.log(p)
    return h


def _rollout_keys(driver_factory, task: TaskSpec, cap: int, rng=None) -> list[bytes]:
    """Representation keys along the driver's own rollout, unpadded."""
    driver = driver_factory(task) if rng is None else driver_factory(task, rng)
    state, _ = env_mod.reset(task)
    keys: list[bytes] = []
    while not state.done and len(keys) < cap:
        driver.observe(state)
        keys.append(driver.representation_key())
        state, _ = env_mod.step(state, driver.act())
    return keys


def _pad_trace(keys: list[bytes], horizon: int) -> list[bytes]:
    """Freeze the final representation once the episode has ended."""
    out = list(keys[:horizon])
    while len(out) < horizon:
        out.append(out[-1] if out else b"")
    return out


def mutual_information_profile(driver_factory, tasks, prior=None,
                               horizon: int | None = None,
                               noise_seeds=None) -> MutualInfoProfile:
    """I(task; representation) per step, by exact counting.

    For deterministic experts the representation is a function of the task,
    so the mutual information equals the representation's entropy under the
    task prior. A stochastic (noise-blindfolded) expert is handled by
    enumerating ``noise_seeds`` and computing H(Z) - H(Z|T) over the grid;
    the result is flagged as an estimate. The default horizon is the longest
    realized episode; shorter episodes absorb at their final representation.
    """
    _check_caps(tasks)
    weights = _normalize_prior(prior, len(tasks))
    cap = max(env_mod.horizon(t.family) for t in tasks)
    if noise_seeds is None:
        raw = [_rollout_keys(driver_factory, t, cap) for t in tasks]
        horizon = horizon or max(len(r) for r in raw)
        traces = [_pad_trace(r, horizon) for r in raw]
        per_step = []
        for h in range(horizon):
            by_key: dict[bytes, float] = {}
            for trace, w in zip(traces, weights):
                by_key[trace[h]] = by_key.get(trace[h], 0.0) + w
            per_step.append(_entropy(by_key))
        return MutualInfoProfile(per_step=per_step)
    # stochastic expert: joint over tasks x enumerated seeds
    raw = {}
    for i, task in enumerate(tasks):
        for s in noise_seeds:
            raw[(i, s)] = _rollout_keys(driver_factory, task, cap,
                                        rng=SplitMix64(s))
    horizon = horizon or max(len(r) for r in raw.values())
    traces = {k: _pad_trace(r, horizon) for k, r in raw.items()}
    seed_w = 1.0 / len(noise_seeds)
    per_step = []
    for h in range(horizon):
        marginal: dict[bytes, float] = {}
        cond = 0.0
        for i, w in enumerate(weights):
            per_task: dict[bytes, float] = {}
            for s in noise_seeds:
                k = traces[(i, s)][h]
                marginal[k] = marginal.get(k, 0.0) + w * seed_w
                per_task[k] = per_task.get(k, 0.0) + seed_w
            cond += w * _entropy(per_task)
        per_step.append(max(0.0, _entropy(marginal) - cond))
    return MutualInfoProfile(per_step=per_step, estimate=True)


def mutual_information(driver_factory, tasks, prior=None,
                       aggregation: str = "time_average",
                       horizon: int | None = None, noise_seeds=None):
    """Scalar (or per-step list) task/representation mutual information."""
    profile = mutual_information_profile(driver_factory, tasks, prior,
                                         horizon=horizon, noise_seeds=noise_seeds)
    return profile.value(aggregation)


def hellinger_sq(p: dict, q: dict) -> float:
    """Squared Hellinger distance between two discrete distributions given as
    outcome -> probability mappings."""
    for name, dist in (("p", p), ("q", q)):
        total = sum(dist.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"distribution {name} sums to {total}, not 1")
    support = set(p) | set(q)
    return float(sum((math.sqrt(p.get(k, 0.0)) - math.sqrt(q.get(k, 0.0))) ** 2
                     for k in support))


def enumerate_trajectory_dist(driver_factory, task: TaskSpec, horizon: int) -> dict:
    """Distribution over action sequences (tuples) induced by a possibly
    stochastic driver on the deterministic environment, stopping at episode
    end or at the horizon."""
    actions = env_mod.action_count(task.family)
    probe = driver_factory(task)
    if hasattr(probe, "action_distribution") and actions ** horizon > CAP_ENUM:
        raise CapacityError(
            f"{actions}^{horizon} trajectories exceed cap {CAP_ENUM}")
    out: dict[tuple, float] = {}
    expanded = [0]

    def clone(driver):
        return driver.clone() if hasattr(driver, "clone") else copy.deepcopy(driver)

    def walk(driver, state, prefix: tuple, prob: float):
        if state.done or len(prefix) >= horizon:
            out[prefix] = out.get(prefix, 0.0) + prob
            return
        expanded[0] += 1
        if expanded[0] > CAP_ENUM:
            raise CapacityError(
                f"trajectory enumeration exceeded {CAP_ENUM} nodes")
        driver.observe(state)
        if hasattr(driver, "action_distribution"):
            dist = np.asarray(driver.action_distribution(), dtype=np.float64)
        else:
            dist = np.zeros(actions)
            dist[driver.act()] = 1.0
        support = [a for a in range(actions) if dist[a] > 0.0]
        for a in support:
            branch = clone(driver) if len(support) > 1 else driver
            nstate, _ = env_mod.step(state, a)
            walk(branch, nstate, prefix + (a,), prob * float(dist[a]))

    state, _ = env_mod.reset(task)
    walk(probe, state, (), 1.0)
    return out


def indicator_hellinger_check(cloned_factory, expert_factory, task: TaskSpec,
                              horizon: int | None = None):
    """Both sides of: expected argmax disagreement along the expert's own
    trajectory <= 4 x squared Hellinger distance between the cloned and
    expert trajectory distributions. Returns (lhs, rhs, holds)."""
    expert = expert_factory(task)
    state, _ = env_mod.reset(task)
    expert_actions: list[int] = []
    cloned = cloned_factory(task)
    mismatches = 0
    cap = horizon or env_mod.horizon(task.family)
    while not state.done and len(expert_actions) < cap:
        expert.observe(state)
        a_e = expert.act()
        cloned.observe(state)
        if cloned.act() != a_e:
            mismatches += 1
        expert_actions.append(a_e)
        state, _ = env_mod.step(state, a_e)
    length = len(expert_actions)
    lhs = mismatches / max(1, length)
    p_expert = {tuple(expert_actions): 1.0}
    p_cloned = enumerate_trajectory_dist(cloned_factory, task, horizon=length)
    rhs = 4.0 * hellinger_sq(p_cloned, p_expert)
    return lhs, rhs, lhs <= rhs + 1e-12


def policy_log_size_proxy(arch: ArchSpec) -> float:
    """log-cardinality proxy for the policy class: 64 bits per weight. A
    labeled stand-in, not a rigorous covering number."""
    return arch.parameter_count * 64.0 * math.log(2.0)


@dataclass
class BoundReport:
    """Every term of the generalization bound plus its assembled value.

    ``rhs_order`` carries all hidden constants set to 1 (the explicit 8 in
    the within-task term is kept); it is an order-of-magnitude instrument,
    not a certified bound, and ``policy_log_size`` is a labeled proxy.
    """

    reward_bound: float
    horizon: int
    m: int
    n: int
    action_count: int
    delta: float
    gen_error: float
    opt_error: float
    task_info: float
    task_info_aggregation: str
    policy_log_size: float
    f_max_train_loss: float
    g_sup_loss: float
    info_term: float
    within_task_term: float
    rhs_order: float
    notes: tuple[str, ...] = ()

    def breakdown(self) -> dict:
        return {
            "gen_error": self.gen_error,
            "opt_error": self.opt_error,
            "info_term": self.info_term,
            "within_task_term": self.within_task_term,
            "scale": self.reward_bound * self.horizon,
            "rhs_order": self.rhs_order,
        }

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "reward_bound", "horizon", "m", "n", "action_count", "delta",
            "gen_error", "opt_error", "task_info", "task_info_aggregation",
            "policy_log_size", "f_max_train_loss", "g_sup_loss", "info_term",
            "within_task_term", "rhs_order")}
        out["notes"] = list(self.notes)
        out["breakdown"] = self.breakdown()
        return out


def assemble_bound(*, gen_error: float, opt_error: float, task_info: float,
                   m: int, n: int, action_count: int, delta: float,
                   horizon: int, policy_log_size: float,
                   reward_bound: float = 1.0,
                   task_info_aggregation: str = "time_average") -> BoundReport:
    """Assemble the bound's right-hand side from measured terms."""
    if not 0 < delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    info_term = math.sqrt(task_info * action_count * math.log(action_count / delta) / m)
    within = 8.0 * (policy_log_size + math.log(m / delta)) / n
    rhs = reward_bound * horizon * (gen_error + opt_error + info_term + within)
    return BoundReport(
        reward_bound=reward_bound, horizon=horizon, m=m, n=n,
        action_count=action_count, delta=delta, gen_error=gen_error,
        opt_error=opt_error, task_info=task_info,
        task_info_aggregation=task_info_aggregation,
        policy_log_size=policy_log_size, f_max_train_loss=opt_error,
        g_sup_loss=1.0, info_term=info_term, within_task_term=within,
        rhs_order=rhs,
        notes=("hidden multiplicative constants set to 1; explicit 8 kept in "
               "the within-task term",
               "policy_log_size is a 64-bits-per-weight proxy, not a covering "
               "number"))


# ---------------------------------------------------------------------------
# Empirical train/test gap as a function of the number of demonstrated tasks


@dataclass
class SweepConfig:
    split: "object"                 # worldgen.TaskSplit
    m_values: tuple[int, ...]
    n_per_task: int
    arch: ArchSpec
    hyper: trainer.Hyper
    seeds: tuple[int, ...]
    blindfold: BlindfoldSpec
    expert_kinds: tuple[str, ...] = (INFORMED, BLINDFOLDED)
    max_steps: int | None = None


def spearman(xs, ys) -> float:
    """Spearman rank correlation with average ranks for ties."""

    def ranks(vals):
        order = sorted(range(len(vals)), key=lambda i: vals[i])
        r = [0.0] * len(vals)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and vals[order[j + 1]] == vals[order[i]]:
                j += 1
            avg = (i + j) / 2.0 + 1.0
            for k in range(i, j + 1):
                r[order[k]] = avg
            i = j + 1
        return r

    rx, ry = np.asarray(ranks(list(xs))), np.asarray(ranks(list(ys)))
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx ** 2).sum() * (ry ** 2).sum()))
    if denom == 0:
        return 0.0
    return float((rx * ry).sum() / denom)


def gap_vs_m_sweep(cfg: SweepConfig, demo_cache: dict | None = None,
                   policy_cache: dict | None = None) -> list[dict]:
    """Train/test success gap per (expert kind, m). Demonstrations for the
    largest m are reused for the smaller ones (tasks are nested prefixes)."""
    from .experts import demonstrate

    rows = []
    train_tasks = list(cfg.split.train)
    test_tasks = list(cfg.split.test)
    demo_cache = demo_cache if demo_cache is not None else {}
    policy_cache = policy_cache if policy_cache is not None else {}
    for kind in cfg.expert_kinds:
        if kind not in demo_cache:
            trajs = []
            for i, task in enumerate(train_tasks[:max(cfg.m_values)]):
                for j in range(cfg.n_per_task):
                    rng = SplitMix64((task.seed << 8) ^ j)
                    blindfold = cfg.blindfold if kind != INFORMED else None
                    t = demonstrate(task, kind, blindfold,
                                    max_steps=cfg.max_steps, rng=rng)
                    if t.success:
                        trajs.append(t)
            demo_cache[kind] = trajs
        for m in cfg.m_values:
            allowed = {t.seed for t in train_tasks[:m]}
            trajs = [t for t in demo_cache[kind] if t.task_seed in allowed]
            train_rates, test_rates = [], []
            for seed in cfg.seeds:
                key = (kind, m, seed)
                if key not in policy_cache:
                    hyper = trainer.Hyper(**{**cfg.hyper.__dict__, "seed": seed})
                    params, _ = trainer.train(Dataset(trajectories=trajs),
                                              cfg.arch, hyper)
                    policy_cache[key] = params
                params = policy_cache[key]
                train_eval = evalsuite.evaluate([(seed, params)], cfg.arch,
                                                train_tasks[:m], "train",
                                                max_steps=cfg.max_steps)
                test_eval = evalsuite.evaluate([(seed, params)], cfg.arch,
                                               test_tasks, "test",
                                               max_steps=cfg.max_steps)
                train_rates.append(train_eval.success_rate)
                test_rates.append(test_eval.success_rate)
            rows.append({
                "expert": kind, "m": m,
                "train_success": float(np.mean(train_rates)),
                "test_success": float(np.mean(test_rates)),
                "gap": float(np.mean(train_rates) - np.mean(test_rates)),
            })
    return rows

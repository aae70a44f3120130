"""Experiment orchestration command line.

Subcommands: gen, demo, serve, train, eval, theory, sweep, report. Every
subcommand reads a JSON experiment config (--config) whose fields can be
overridden by flags; outputs land in the config's directory layout:

    <out_dir>/split.split            task split
    <out_dir>/demos_<expert>.bldc    demonstration datasets
    <out_dir>/ckpt_<expert>_s<k>.bin policy checkpoints
    <out_dir>/eval.csv               evaluation rows
    <out_dir>/bound.json             assembled bound report
    <out_dir>/sweep.csv              gap-versus-m table
    <out_dir>/report/*.svg           rendered curves and tables

Exit codes: 0 ok, 1 user error (bad config, bad input), 2 internal failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datapipe, evalsuite, service, theory, trainer, worldgen
from .blindfold import BlindfoldSpec
from .errors import BldcError, ConfigError
from .experts import BLINDFOLDED, INFORMED, NOISE, demonstrate
from .rng import SplitMix64
from .seqpolicy import ArchSpec, load_checkpoint, save_checkpoint
from .trainer import Hyper


@dataclass
class ExperimentConfig:
    run_id: str
    family: str
    width: int
    height: int
    color_count: int
    m_train: int
    m_test: int
    split_seed: int
    demos_per_task: int
    max_steps: int | None
    blindfold: BlindfoldSpec
    arch: ArchSpec
    hyper: Hyper
    seeds: tuple[int, ...]
    eval_cadence: int
    out_dir: Path
    noise_levels: tuple[float, ...] = ()
    sweep_m: tuple[int, ...] = (10, 25, 50, 100)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config: invalid JSON ({e})")
        return cls.from_json(raw, base_dir=Path(path).resolve().parent)

    @classmethod
    def from_json(cls, raw: dict, base_dir: Path = Path(".")) -> "ExperimentConfig":
        def need(path_, typ):
            node = raw
            for part in path_.split("."):
                if not isinstance(node, dict) or part not in node:
                    raise ConfigError(f"config: missing field {path_}")
                node = node[part]
            if typ is float:
                if not isinstance(node, (int, float)):
                    raise ConfigError(f"config: {path_} must be a number")
                return float(node)
            if not isinstance(node, typ):
                raise ConfigError(f"config: {path_} must be {typ.__name__}")
            return node

        run_id = need("run_id", str)
        family = need("family", str)
        if family not in worldgen.FAMILIES:
            raise ConfigError(f"config: family must be one of {worldgen.FAMILIES}")
        width = need("width", int)
        height = need("height", int)
        color_count = int(raw.get("color_count", 1 if family == "keylock" else 0))
        seeds = raw.get("seeds", [0])
        if not isinstance(seeds, list) or not seeds:
            raise ConfigError("config: seeds must be a non-empty list")
        try:
            blindfold = BlindfoldSpec.from_json(raw.get("blindfold", {"kind": "fov", "radius": 1}))
        except ConfigError as e:
            raise ConfigError(f"config: blindfold: {e}")
        from . import env as env_mod

        arch_raw = dict(raw.get("arch", {}))
        arch = ArchSpec(
            obs_channels=env_mod.observation_channels(family, color_count),
            height=height, width=width,
            action_count=env_mod.action_count(family),
            hidden_size=int(arch_raw.get("hidden_size", 64)),
            encoder=str(arch_raw.get("encoder", "conv")),
            conv_filters=tuple(arch_raw.get("conv_filters", (8, 16))),
            embed_size=int(arch_raw.get("embed_size", 64)))
        hyper_raw = dict(raw.get("hyper", {}))
        preset = hyper_raw.pop("preset", None)
        base = trainer.PRESETS.get(preset, trainer.PRESETS["desk"]).__dict__
        base = dict(base)
        for k, v in hyper_raw.items():
            if k not in base:
                raise ConfigError(f"config: hyper.{k} is not a hyperparameter")
            base[k] = tuple(tuple(x) for x in v) if k == "lr_schedule" else v
        base["lr_schedule"] = tuple(tuple(x) for x in base.get("lr_schedule", ()))
        base["checkpoint_epochs"] = tuple(base.get("checkpoint_epochs", ()))
        try:
            hyper = Hyper(**base)
        except ConfigError as e:
            raise ConfigError(f"config: hyper: {e}")
        split = raw.get("split", {})
        out_dir = Path(raw.get("out_dir", "runs/" + run_id))
        if not out_dir.is_absolute():
            out_dir = base_dir / out_dir
        return cls(
            run_id=run_id, family=family, width=width,
            height=height, color_count=color_count,
            m_train=int(split.get("m_train", 100)),
            m_test=int(split.get("m_test", 100)),
            split_seed=int(split.get("split_seed", 1)),
            demos_per_task=int(raw.get("demos_per_task", 5)),
            max_steps=raw.get("max_steps"),
            blindfold=blindfold, arch=arch, hyper=hyper,
            seeds=tuple(int(s) for s in seeds),
            eval_cadence=int(raw.get("eval_cadence", 0)),
            out_dir=out_dir,
            noise_levels=tuple(raw.get("noise_levels", ())),
            sweep_m=tuple(raw.get("sweep_m", (10, 25, 50, 100))))


def _split_path(cfg: ExperimentConfig) -> Path:
    return cfg.out_dir / "split.split"


def _load_or_make_split(cfg: ExperimentConfig) -> worldgen.TaskSplit:
    path = _split_path(cfg)
    if path.exists():
        return worldgen.TaskSplit.load(path)
    split = worldgen.generate_split(cfg.family, cfg.width, cfg.height,
                                    cfg.m_train, cfg.m_test, cfg.split_seed,
                                    max(1, cfg.color_count))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    split.save(path)
    return split


def cmd_gen(cfg: ExperimentConfig, args) -> int:
    split = _load_or_make_split(cfg)
    print(f"split: {split.m} train / {len(split.test)} test tasks "
          f"-> {_split_path(cfg)}")
    return 0


def cmd_demo(cfg: ExperimentConfig, args) -> int:
    split = _load_or_make_split(cfg)
    kind = args.expert
    blindfold = None
    if kind == BLINDFOLDED:
        blindfold = cfg.blindfold
    elif kind == NOISE:
        level = args.noise_level if args.noise_level is not None else cfg.blindfold.max_level
        blindfold = BlindfoldSpec(kind="noise", max_level=level)
    trajs = []
    for task in split.train:
        for j in range(cfg.demos_per_task):
            rng = SplitMix64((task.seed << 8) ^ j)
            trajs.append(demonstrate(task, kind, blindfold,
                                     max_steps=cfg.max_steps, rng=rng))
    dataset = datapipe.Dataset(trajectories=trajs, split_id=str(_split_path(cfg)),
                               extra={"expert": kind,
                                      "blindfold": (blindfold or BlindfoldSpec()).to_json()})
    kept = datapipe.filter_successful(dataset)
    name = f"demos_{kind}" + (f"_p{args.noise_level}" if kind == NOISE and args.noise_level is not None else "")
    out = cfg.out_dir / f"{name}.bldc"
    if args.match_steps:
        reference = datapipe.load(Path(args.match_steps))
        pool = [worldgen.generate_task(cfg.family, cfg.width, cfg.height, s,
                                       max(1, cfg.color_count))
                for s in _fresh_pool_seeds(cfg, reference.total_steps)]
        kept = datapipe.matched_steps_subset(kept, reference.total_steps, pool,
                                             seed=cfg.split_seed)
        out = cfg.out_dir / f"{name}_ext.bldc"
    datapipe.save(kept, out)
    print(f"{kind}: kept {len(kept.trajectories)}/{len(trajs)} trajectories, "
          f"{kept.total_steps} steps -> {out}")
    return 0


def _fresh_pool_seeds(cfg: ExperimentConfig, target_steps: int) -> list[int]:
    # enough fresh tasks to cover the target with one demo per task
    rng = SplitMix64(cfg.split_seed ^ 0xBEEF)
    used = set()
    split = _load_or_make_split(cfg)
    for t in split.train + split.test:
        used.add(t.seed)
    pool = []
    while len(pool) < max(200, 4 * target_steps // max(5, cfg.width)):
        s = rng.next_u64()
        if s not in used:
            used.add(s)
            pool.append(s)
    return pool


def cmd_serve(cfg, args) -> int:
    data_dir = args.data_dir or service_default_dir(cfg)
    service.serve(args.bind, args.port, data_dir,
                  splits_dir=cfg.out_dir if cfg else None)
    return 0


def service_default_dir(cfg):
    import os

    if os.environ.get(service.DATA_DIR_ENV):
        return Path(os.environ[service.DATA_DIR_ENV])
    return (cfg.out_dir / "sessions") if cfg else Path("sessions")


def cmd_train(cfg: ExperimentConfig, args) -> int:
    dataset = datapipe.load(Path(args.dataset)) if args.dataset else \
        datapipe.load(cfg.out_dir / f"demos_{args.expert}.bldc")
    label = args.label or args.expert
    rows = []
    for seed in cfg.seeds:
        hyper = Hyper(**{**cfg.hyper.__dict__, "seed": seed})
        params, report = trainer.train(dataset, cfg.arch, hyper)
        ckpt = cfg.out_dir / f"ckpt_{label}_s{seed}.bin"
        save_checkpoint(ckpt, cfg.arch, params)
        rows.append((seed, report.loss_curve[-1], report.final_opt_error.rate))
        print(f"{label} seed {seed}: loss {report.loss_curve[-1]:.5f} "
              f"opt_err {report.final_opt_error.rate:.5f} -> {ckpt}")
    return 0


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    split = _load_or_make_split(cfg)
    label = args.label or args.expert
    policies = []
    for seed in cfg.seeds:
        ckpt = cfg.out_dir / f"ckpt_{label}_s{seed}.bin"
        if not ckpt.exists():
            print(f"missing checkpoint {ckpt}", file=sys.stderr)
            return 1
        arch, params = load_checkpoint(ckpt)
        policies.append((seed, params))
    rows = []
    for split_name, tasks in (("train", split.train), ("test", split.test)):
        report = evalsuite.evaluate(policies, cfg.arch, list(tasks), split_name,
                                    run_id=f"{cfg.run_id}/{label}",
                                    max_steps=cfg.max_steps)
        rows.extend(report.rows)
        print(f"{label} {split_name}: success {report.success_rate:.3f} "
              f"± {report.success_std:.3f} (mean steps {report.mean_steps:.1f})")
    out = cfg.out_dir / "eval.csv"
    evalsuite.write_csv(out, rows, append=out.exists())
    print(f"rows -> {out}")
    return 0


def cmd_theory(cfg: ExperimentConfig, args) -> int:
    from .experts import FrontierExpert, InformedExpert

    tasks = [worldgen.generate_task(cfg.family, 7, 7, seed=s,
                                    color_count=max(1, cfg.color_count))
             for s in range(args.theory_tasks)]
    informed = lambda t: InformedExpert(t)
    frontier = lambda t: FrontierExpert(t, BlindfoldSpec(kind="fov", radius=1))
    report = {}
    for name, factory in (("informed", informed), ("blindfolded", frontier)):
        profile = theory.mutual_information_profile(factory, tasks)
        bound = theory.assemble_bound(
            gen_error=theory.gen_error(factory, tasks),
            opt_error=0.0,
            task_info=profile.time_average,
            m=len(tasks), n=cfg.demos_per_task,
            action_count=cfg.arch.action_count, delta=0.1,
            horizon=cfg.max_steps or 500,
            policy_log_size=theory.policy_log_size_proxy(cfg.arch))
        report[name] = bound.to_json()
        print(f"{name}: task_info {profile.time_average:.4f} nats, "
              f"gen_error {bound.gen_error:.4f}, rhs_order {bound.rhs_order:.2f}")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.out_dir / "bound.json"
    out.write_text(json.dumps(report, indent=2, sort_keys=True))
    print(f"bound report -> {out}")
    return 0


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    split = _load_or_make_split(cfg)
    sweep_cfg = theory.SweepConfig(
        split=split, m_values=cfg.sweep_m, n_per_task=cfg.demos_per_task,
        arch=cfg.arch, hyper=cfg.hyper, seeds=cfg.seeds,
        blindfold=cfg.blindfold, max_steps=cfg.max_steps)
    rows = theory.gap_vs_m_sweep(sweep_cfg)
    out = cfg.out_dir / "sweep.csv"
    with open(out, "w") as f:
        f.write("expert,m,train_success,test_success,gap\n")
        for r in rows:
            f.write(f"{r['expert']},{r['m']},{r['train_success']:.4f},"
                    f"{r['test_success']:.4f},{r['gap']:.4f}\n")
        print(f"{out}")
    for r in rows:
        print(r)
    return 0


# ---------------------------------------------------------------------------
# report: CSV -> SVG curves and text tables


def _svg_line_plot(series: dict, title: str, width=640, height=400) -> str:
    """Minimal multi-series line plot; series maps label -> [(x, y)]."""
    pad = 50
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    if not xs:
        raise ConfigError("no data to plot")
    x0, x1 = min(xs), max(xs) or 1
    y0, y1 = 0.0, max(1.0, max(ys))
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]

    def sx(x):
        return pad + (x - x0) / max(1e-9, x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / max(1e-9, y1 - y0) * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width/2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
             f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" y2="{height-pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height-pad}" stroke="black"/>']
    for i, (label, pts) in enumerate(sorted(series.items())):
        color = colors[i % len(colors)]
        path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in sorted(pts))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{path}"/>')
        parts.append(f'<text x="{width-pad+4}" y="{pad + 16*i}" font-size="12" fill="{color}">{label}</text>')
    for frac in (0.0, 0.5, 1.0):
        y = y0 + frac * (y1 - y0)
        parts.append(f'<text x="{pad-6}" y="{sy(y)+4}" text-anchor="end" font-size="10">{y:.1f}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_report(cfg, args) -> int:
    csv_path = Path(args.csv) if args.csv else cfg.out_dir / "eval.csv"
    if not csv_path.exists():
        print(f"no data: {csv_path} does not exist", file=sys.stderr)
        return 1
    rows = evalsuite.read_csv(csv_path)
    if not rows:
        print("no data: CSV is empty", file=sys.stderr)
        return 1
    out_dir = Path(args.out) if args.out else csv_path.parent / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    # success-vs-epoch curves per (run_id, split)
    series: dict = {}
    table: dict = {}
    for row in rows:
        key = (row["run_id"], row["split"], int(row["epoch"]))
        table.setdefault(key, []).append(row)
    for (run_id, split_name, epoch), group in table.items():
        rate = float(np.mean([int(r["success"]) for r in group]))
        series.setdefault(f"{run_id}/{split_name}", []).append((epoch, rate))
    for split_name in ("train", "test"):
        subset = {k: v for k, v in series.items() if k.endswith("/" + split_name)}
        if not subset:
            continue
        svg = _svg_line_plot(subset, f"success rate vs epoch ({split_name})")
        (out_dir / f"success_{split_name}.svg").write_text(svg)
    # behavioral-statistics table
    lines = ["run_id | split | success | mean steps | mean coverage | mean entropy",
             "------ | ----- | ------- | ---------- | ------------- | ------------"]
    agg: dict = {}
    for row in rows:
        agg.setdefault((row["run_id"], row["split"]), []).append(row)
    for (run_id, split_name), group in sorted(agg.items()):
        succ = np.mean([int(r["success"]) for r in group])
        steps = np.mean([int(r["steps"]) for r in group])
        cov = np.mean([float(r["coverage"]) for r in group])
        ent = np.mean([float(r["entropy"]) for r in group])
        lines.append(f"{run_id} | {split_name} | {succ:.3f} | {steps:.1f} | "
                     f"{cov:.3f} | {ent:.3f}")
    (out_dir / "summary.md").write_text("\n".join(lines) + "\n")
    print(f"report -> {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bldc",
                                     description="blindfolded-demonstrator cloning laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="experiment config JSON")
    common.add_argument("--out", type=str, help="override output directory")
    common.add_argument("--seed", type=int, help="override seeds with a single seed")

    sub.add_parser("gen", parents=[common], help="generate and save the task split")

    demo = sub.add_parser("demo", parents=[common], help="run scripted demonstrations")
    demo.add_argument("--expert", choices=[INFORMED, BLINDFOLDED, NOISE],
                      default=INFORMED)
    demo.add_argument("--noise-level", type=float, default=None)
    demo.add_argument("--match-steps", type=str, default=None,
                      help="dataset whose total steps to match with fresh tasks")

    serve_p = sub.add_parser("serve", parents=[common], help="run the session service")
    serve_p.add_argument("--bind", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8420)
    serve_p.add_argument("--data-dir", type=str, default=None)

    train_p = sub.add_parser("train", parents=[common], help="clone a dataset")
    train_p.add_argument("--expert", default=INFORMED)
    train_p.add_argument("--dataset", type=str, default=None)
    train_p.add_argument("--label", type=str, default=None)

    eval_p = sub.add_parser("eval", parents=[common], help="evaluate checkpoints")
    eval_p.add_argument("--expert", default=INFORMED)
    eval_p.add_argument("--label", type=str, default=None)

    theory_p = sub.add_parser("theory", parents=[common], help="bound report on tiny tasks")
    theory_p.add_argument("--theory-tasks", type=int, default=4)

    sub.add_parser("sweep", parents=[common], help="train/test gap versus task count")

    report_p = sub.add_parser("report", parents=[common], help="render CSV to SVG/tables")
    report_p.add_argument("--csv", type=str, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = None
        if args.config:
            cfg = ExperimentConfig.load(args.config)
            if args.out:
                cfg.out_dir = Path(args.out)
            if args.seed is not None:
                cfg.seeds = (args.seed,)
            cfg.out_dir.mkdir(parents=True, exist_ok=True)
        elif args.command not in ("serve", "report"):
            print("--config is required for this command", file=sys.stderr)
            return 1
        handler = {
            "gen": cmd_gen, "demo": cmd_demo, "serve": cmd_serve,
            "train": cmd_train, "eval": cmd_eval, "theory": cmd_theory,
            "sweep": cmd_sweep, "report": cmd_report,
        }[args.command]
        return handler(cfg, args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except BldcError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Architecture/radius sweep for the core generalization contrast."""

import sys
import time

import numpy as np

from bldc import evalsuite, trainer, worldgen
from bldc.blindfold import BlindfoldSpec
from bldc.datapipe import Dataset, filter_successful
from bldc.experts import demonstrate
from bldc.seqpolicy import ArchSpec
from bldc.trainer import Hyper

split = worldgen.generate_split("maze", 11, 11, m_train=100, m_test=100, split_seed=1)

VARIANTS = {
    "B-r2-h64-c816-e64": (2, 64, (8, 16), 64, "conv"),
    "C-r1-h128-c816-e64": (1, 128, (8, 16), 64, "conv"),
    "D-r1-h128-c48-e32": (1, 128, (4, 8), 32, "conv"),
    "E-r1-h64-flat": (1, 64, (8, 16), 64, "flat"),
    "F-r2-h128-c48-e32": (2, 128, (4, 8), 32, "conv"),
    "G-r1-h192-c816-e64": (1, 192, (8, 16), 64, "conv"),
    "H-r1-h128-c1632-e128": (1, 128, (16, 32), 128, "conv"),
}

which = sys.argv[1:] or list(VARIANTS)

demo_cache = {}

def demos(kind, radius):
    key = (kind, radius)
    if key not in demo_cache:
        trajs = []
        spec = BlindfoldSpec(kind="fov", radius=radius) if kind == "blindfolded" else None
        for task in split.train:
            for j in range(5):
                trajs.append(demonstrate(task, kind, spec))
        demo_cache[key] = filter_successful(Dataset(trajectories=trajs))
    return demo_cache[key]

for name in which:
    radius, hidden, filters, embed, encoder = VARIANTS[name]
    arch = ArchSpec(obs_channels=4, height=11, width=11, action_count=4,
                    hidden_size=hidden, conv_filters=filters, embed_size=embed,
                    encoder=encoder)
    out = {}
    for kind in ("informed", "blindfolded"):
        t0 = time.time()
        ds = demos(kind, radius)
        hyper = Hyper(learning_rate=2e-3, epochs=150, batch_size=16, seed=0)
        params, report = trainer.train(ds, arch, hyper)
        tr = evalsuite.evaluate([(0, params)], arch, split.train, "train")
        te = evalsuite.evaluate([(0, params)], arch, split.test, "test")
        out[kind] = (tr.success_rate, te.success_rate)
        print(f"{name} {kind}: opt {report.final_opt_error.rate:.4f} "
              f"train {tr.success_rate:.2f} test {te.success_rate:.2f} "
              f"[{time.time()-t0:.0f}s]", flush=True)
    diff = out["blindfolded"][1] - out["informed"][1]
    print(f"== {name}: BF-test - informed-test = {diff:+.3f}", flush=True)

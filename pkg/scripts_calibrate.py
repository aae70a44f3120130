"""Pilot run for the core generalization experiment (not part of the package)."""

import sys
import time

import numpy as np

from bldc import evalsuite, trainer, worldgen
from bldc.blindfold import BlindfoldSpec
from bldc.datapipe import Dataset, filter_successful
from bldc.experts import demonstrate
from bldc.seqpolicy import ArchSpec
from bldc.trainer import Hyper

m = int(sys.argv[1]) if len(sys.argv) > 1 else 30
n = int(sys.argv[2]) if len(sys.argv) > 2 else 2
epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 60
seeds = list(range(int(sys.argv[4]) if len(sys.argv) > 4 else 2))
radius = int(sys.argv[5]) if len(sys.argv) > 5 else 1
hidden = int(sys.argv[6]) if len(sys.argv) > 6 else 64

t0 = time.time()
split = worldgen.generate_split("maze", 11, 11, m_train=m, m_test=100, split_seed=1)
arch = ArchSpec(obs_channels=4, height=11, width=11, action_count=4,
                hidden_size=hidden, conv_filters=(8, 16), embed_size=64)
bf = BlindfoldSpec(kind="fov", radius=radius)

datasets = {}
for kind, spec in (("informed", None), ("blindfolded", bf)):
    trajs = []
    for task in split.train:
        for j in range(n):
            trajs.append(demonstrate(task, kind, spec))
    ds = filter_successful(Dataset(trajectories=trajs))
    datasets[kind] = ds
    print(f"{kind}: {len(ds.trajectories)} trajs, {ds.total_steps} steps", flush=True)

print(f"demos done in {time.time()-t0:.1f}s", flush=True)

for kind in ("informed", "blindfolded"):
    train_rates, test_rates = [], []
    for seed in seeds:
        t1 = time.time()
        hyper = Hyper(learning_rate=2e-3, epochs=epochs, batch_size=16, seed=seed)
        params, report = trainer.train(datasets[kind], arch, hyper)
        tr = evalsuite.evaluate([(seed, params)], arch, split.train, "train")
        te = evalsuite.evaluate([(seed, params)], arch, split.test, "test")
        train_rates.append(tr.success_rate)
        test_rates.append(te.success_rate)
        print(f"{kind} seed {seed}: loss {report.loss_curve[-1]:.4f} "
              f"opt_err {report.final_opt_error.rate:.4f} "
              f"train {tr.success_rate:.2f} test {te.success_rate:.2f} "
              f"({time.time()-t1:.0f}s train+eval)", flush=True)
    print(f"== {kind}: train {np.mean(train_rates):.3f} test {np.mean(test_rates):.3f} "
          f"gap {np.mean(train_rates)-np.mean(test_rates):.3f}", flush=True)
print(f"total {time.time()-t0:.0f}s", flush=True)

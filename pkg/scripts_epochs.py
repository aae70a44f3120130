"""Test-success trajectory over training epochs for both experts."""

import sys
import time

import numpy as np

from bldc import evalsuite, trainer, worldgen
from bldc.blindfold import BlindfoldSpec
from bldc.datapipe import Dataset, filter_successful
from bldc.experts import demonstrate
from bldc.seqpolicy import ArchSpec
from bldc.trainer import Hyper

hidden = int(sys.argv[1]) if len(sys.argv) > 1 else 128
filters = (int(sys.argv[2]), int(sys.argv[3])) if len(sys.argv) > 3 else (8, 16)
embed = int(sys.argv[4]) if len(sys.argv) > 4 else 64
epochs = int(sys.argv[5]) if len(sys.argv) > 5 else 400
seed = int(sys.argv[6]) if len(sys.argv) > 6 else 0

split = worldgen.generate_split("maze", 11, 11, m_train=100, m_test=100, split_seed=1)
arch = ArchSpec(obs_channels=4, height=11, width=11, action_count=4,
                hidden_size=hidden, conv_filters=filters, embed_size=embed)
marks = tuple(range(50, epochs + 1, 50))

for kind in ("informed", "blindfolded"):
    spec = BlindfoldSpec(kind="fov", radius=1) if kind == "blindfolded" else None
    trajs = []
    for task in split.train:
        for j in range(5):
            trajs.append(demonstrate(task, kind, spec))
    ds = filter_successful(Dataset(trajectories=trajs))
    hyper = Hyper(learning_rate=2e-3, epochs=epochs, batch_size=16, seed=seed,
                  checkpoint_epochs=marks)
    t0 = time.time()
    params, report = trainer.train(ds, arch, hyper)
    print(f"{kind}: trained {time.time()-t0:.0f}s", flush=True)
    for epoch, ckpt in report.checkpoints:
        tr = evalsuite.evaluate([(seed, ckpt)], arch, split.train, "train")
        te = evalsuite.evaluate([(seed, ckpt)], arch, split.test, "test")
        print(f"{kind} epoch {epoch}: train {tr.success_rate:.3f} "
              f"test {te.success_rate:.3f}", flush=True)

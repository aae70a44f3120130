"""Hyperparameter probe for memorization speed (not part of the package)."""

import time

import numpy as np

from bldc import evalsuite, trainer, worldgen
from bldc.blindfold import BlindfoldSpec
from bldc.datapipe import Dataset, filter_successful
from bldc.experts import demonstrate
from bldc.seqpolicy import ArchSpec
from bldc.trainer import Hyper

split = worldgen.generate_split("maze", 11, 11, m_train=30, m_test=50, split_seed=1)
arch = ArchSpec(obs_channels=4, height=11, width=11, action_count=4,
                hidden_size=64, conv_filters=(8, 16), embed_size=64)
trajs = []
for task in split.train:
    for j in range(2):
        trajs.append(demonstrate(task, "informed"))
ds = filter_successful(Dataset(trajectories=trajs))

for lr, bs, ep in ((1e-3, 16, 150), (2e-3, 16, 150), (1e-3, 8, 150),
                   (2e-3, 32, 300), (1e-3, 16, 300)):
    t0 = time.time()
    params, report = trainer.train(ds, arch, Hyper(learning_rate=lr, epochs=ep,
                                                   batch_size=bs, seed=0))
    tr = evalsuite.evaluate([(0, params)], arch, split.train, "train")
    te = evalsuite.evaluate([(0, params)], arch, split.test, "test")
    print(f"lr {lr} bs {bs} ep {ep}: loss {report.loss_curve[-1]:.4f} "
          f"opt {report.final_opt_error.rate:.4f} train {tr.success_rate:.2f} "
          f"test {te.success_rate:.2f} [{time.time()-t0:.0f}s]", flush=True)

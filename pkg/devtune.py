"""Dev-only experiment: full acceptance-scale run with timing. Not part
of the deliverable test suite."""
import json
import shutil
import sys
import time
import warnings

import numpy as np

from dialectid import corpus, evaluation, models, pipeline
from dialectid.pipeline import FeatureProvider, TrainConfig

warnings.simplefilter("ignore")

ROOT = "/tmp/devtune"
shutil.rmtree(ROOT, ignore_errors=True)
seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

t_start = time.perf_counter()
spec = corpus.SynthSpec(n_dialects=4, vocab_size=12, train_per_dialect=50,
                        test_per_dialect=20, duration_range=(1.0, 4.0), seed=0)
train_man, test_man = corpus.synth_corpus(spec, ROOT)
features = FeatureProvider(ROOT)
for r in list(train_man) + list(test_man):
    features.get(r)
print(f"[{time.perf_counter()-t_start:6.1f}s] corpus + features ready", flush=True)

mc = models.ModelConfig(scale="micro", vocab_size=12, n_dialects=4)

am_cfg = TrainConfig.for_stage("am", lr=5e-3, batch_size=2, max_epochs=18,
                               patience=3, seed=seed)
lid_cfg = TrainConfig.for_stage("lid", lr=1e-3, batch_size=4, max_epochs=15,
                                patience=3, seed=seed)
base_cfg = TrainConfig.for_stage("baseline", lr=1e-3, batch_size=4,
                                 max_epochs=15, patience=3, seed=seed)
fce_cfg = TrainConfig.for_stage("frame_ce", lr=3e-3, batch_size=4,
                                max_epochs=12, patience=3, seed=seed)

t0 = time.perf_counter()
two = pipeline.run_two_stage(ROOT, train_man, mc,
                             {"am": am_cfg, "lid": lid_cfg},
                             f"{ROOT}/sys_two", features=features)
print(f"[{time.perf_counter()-t_start:6.1f}s] two-stage trained "
      f"({time.perf_counter()-t0:.0f}s), convergence {two.convergence.stages}",
      flush=True)

t0 = time.perf_counter()
base = pipeline.run_baseline(ROOT, train_man, mc, base_cfg,
                             f"{ROOT}/sys_base", features=features)
print(f"[{time.perf_counter()-t_start:6.1f}s] baseline trained "
      f"({time.perf_counter()-t0:.0f}s), convergence {base.convergence.stages}",
      flush=True)

t0 = time.perf_counter()
three = pipeline.run_three_stage(ROOT, train_man, mc,
                                 {"am": am_cfg, "frame_ce": fce_cfg, "lid": lid_cfg},
                                 f"{ROOT}/sys_three", features=features,
                                 am_checkpoint=two.checkpoints["am"])
print(f"[{time.perf_counter()-t_start:6.1f}s] three-stage trained "
      f"({time.perf_counter()-t0:.0f}s), convergence {three.convergence.stages}",
      flush=True)

for name in ("sys_two", "sys_base", "sys_three"):
    system = evaluation.load_system(f"{ROOT}/{name}")
    m = evaluation.evaluate(system, test_man, features=features)
    print(f"{name}: all={m.acc_all:.1f} short={m.acc_short:.1f} "
          f"long={m.acc_long:.1f}", flush=True)

for line in open(f"{ROOT}/sys_two/train_log.jsonl"):
    obj = json.loads(line)
    print(" ", obj["stage"], obj["epoch"],
          round(obj["train_loss"], 3) if obj["train_loss"] else None,
          round(obj["val_metric"], 3), obj.get("val_phone_error_rate", ""))
print(f"total: {time.perf_counter()-t_start:.0f}s")

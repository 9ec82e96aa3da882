"""Reporting: build a confusion matrix from (truth, prediction, duration)
triples, render the CSV + heatmap artifacts, and tabulate two systems."""
import tempfile

import numpy as np

from dialectid.evaluation import compare_systems, metrics_from_pairs, render_confusion

rng = np.random.default_rng(3)
truths = rng.integers(0, 4, size=120)
# a predictor that is right 85% of the time, confusing classes 2 and 3
preds = []
for t in truths:
    roll = rng.uniform()
    if roll < 0.85:
        preds.append(int(t))
    elif t in (2, 3):
        preds.append(5 - int(t))
    else:
        preds.append(int(rng.integers(0, 4)))
durations = rng.uniform(1.0, 5.0, size=120)

metrics = metrics_from_pairs(list(zip(truths, preds, durations)), 4)
print(f"all={metrics.acc_all:.1f}% <=3s={metrics.acc_short:.1f}% "
      f">3s={metrics.acc_long:.1f}%")
print("confusion (rows = truth):")
print(metrics.confusion)
print("per-class accuracy:", np.round(metrics.per_class, 1))

out = tempfile.mkdtemp(prefix="dialectid_report_")
files = render_confusion(metrics, out)
print("wrote:", *files, sep="\n  ")

stronger = metrics_from_pairs(
    [(t, t if rng.uniform() < 0.95 else int(rng.integers(0, 4)), d)
     for t, d in zip(truths, durations)], 4)
text, csv_text = compare_systems([("demo", metrics), ("stronger", stronger)])
print("\n" + text)

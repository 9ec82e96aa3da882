"""End-to-end miniature run: synthesize a corpus, train the two-stage
system (CTC acoustic model, then a classifier on its frozen intermediate
features) and the one-stage baseline, and score both.

Uses a deliberately small corpus so it finishes in about a minute;
accuracies here are illustrative, not the tuned acceptance numbers.
"""
import tempfile
import warnings

from dialectid import corpus, evaluation, pipeline
from dialectid.models import ModelConfig
from dialectid.pipeline import FeatureProvider, TrainConfig

warnings.simplefilter("ignore")

root = tempfile.mkdtemp(prefix="dialectid_demo_")
spec = corpus.SynthSpec(n_dialects=4, vocab_size=12, train_per_dialect=8,
                        test_per_dialect=4, duration_range=(1.0, 3.5), seed=42)
train_man, test_man = corpus.synth_corpus(spec, root)
print(f"corpus at {root}: {len(train_man)} train / {len(test_man)} test")

features = FeatureProvider(root)
mc = ModelConfig(scale="micro", vocab_size=12, n_dialects=4)

two = pipeline.run_two_stage(
    root, train_man, mc,
    {"am": TrainConfig.for_stage("am", lr=5e-3, batch_size=2, max_epochs=6,
                                 patience=6, seed=0),
     "lid": TrainConfig.for_stage("lid", lr=1e-3, batch_size=4, max_epochs=6,
                                  patience=6, seed=0)},
    f"{root}/sys_two", features=features)
print("two-stage epochs to converge:", two.convergence.stages)

base = pipeline.run_baseline(
    root, train_man, mc,
    TrainConfig.for_stage("baseline", lr=1e-3, batch_size=4, max_epochs=6,
                          patience=6, seed=0),
    f"{root}/sys_base", features=features)

named = []
for name, out in [("two-stage", two.out_dir), ("baseline", base.out_dir)]:
    system = evaluation.load_system(out)
    metrics = evaluation.evaluate(system, test_man, features=features)
    named.append((name, metrics))
    print(f"{name}: all={metrics.acc_all:.1f}% short={metrics.acc_short:.1f}% "
          f"long={metrics.acc_long:.1f}%")

text, _ = evaluation.compare_systems(named)
print("\n" + text)

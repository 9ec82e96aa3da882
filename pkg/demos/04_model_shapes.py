"""Shape trace of the acoustic model at full scale: the trunk halves time
twice (T -> T/4), squeezes 40 mel bands down to one, and hands 512-dim
frame vectors to the BLSTM."""
import numpy as np

from dialectid.models import AmModel, ModelConfig

cfg = ModelConfig(scale="full", vocab_size=66, n_dialects=10)
am = AmModel(cfg, seed=0)
print(f"trunk parameters: {am.trunk_param_count():,}")

feats = np.random.default_rng(0).normal(size=(400, 40))
trace = []
lattice, intermediate = am.forward(feats, trace=trace)
print(f"{'layer':<12} output shape")
for name, shape in trace:
    print(f"{name:<12} {shape}")
print(f"lattice: {lattice.data.shape} (frames x vocab+blank)")
print(f"intermediate tap for the classifier: {intermediate.data.shape}")

micro = AmModel(ModelConfig(scale="micro", vocab_size=12, n_dialects=4), seed=0)
print(f"\nmicro trunk parameters: {micro.trunk_param_count():,}")
lattice, intermediate = micro.forward(np.zeros((100, 40)))
print(f"micro T=100 -> lattice {lattice.data.shape}, "
      f"intermediate {intermediate.data.shape}")

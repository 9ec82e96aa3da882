"""CTC in miniature: loss vs brute-force path enumeration, greedy
decoding, and forced alignment on a peaked lattice."""
import numpy as np

from dialectid import ctc

# a 4-frame lattice over {blank, a, b} (log-probabilities per row)
rng = np.random.default_rng(1)
logits = rng.normal(size=(4, 3))
lattice = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))

labels = [1, 2]  # "a b"
loss, grad = ctc.ctc_loss_grad(lattice, labels)
oracle = ctc.ctc_brute_force(lattice, labels)
print(f"forward-backward loss: {loss:.10f}")
print(f"brute-force oracle:    {oracle:.10f}")
print("gradient row sums (=-1 per frame, a posterior):", grad.sum(axis=1))

# greedy decoding collapses repeats then removes blanks
peaky = np.log(np.array([
    [0.05, 0.90, 0.05],   # a
    [0.05, 0.90, 0.05],   # a (repeat, merges)
    [0.90, 0.05, 0.05],   # blank
    [0.05, 0.05, 0.90],   # b
]))
print("greedy decode:", ctc.ctc_greedy_decode(peaky))

# forced alignment pins each label to its most probable frames
alignment = ctc.ctc_forced_align(peaky, [1, 2])
print("forced alignment:", alignment, "->", ctc.collapse(alignment))

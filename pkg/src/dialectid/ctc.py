"""CTC loss, gradient, decoding and forced alignment.

The lattice is a T x (V+1) matrix of per-frame log-probabilities with
blank at class 0. All recursions run in log space over the extended
label (blanks interleaved: length 2L+1). A path collapses to a label
sequence by merging repeats and then dropping blanks; the loss is
-ln of the total probability of all paths collapsing to the target.
An exponential brute-force enumerator serves as the test oracle.
"""

from itertools import product

import numpy as np

from .errors import InfeasibleLabel, InvalidShape, OracleTooLarge

BLANK = 0
NEG_INF = -np.inf


def collapse(path):
    """Merge repeats, then drop blanks."""
    out = []
    prev = None
    for c in path:
        if c != prev and c != BLANK:
            out.append(int(c))
        prev = c
    return out


def min_frames(labels):
    """Fewest lattice frames that can emit `labels`."""
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _check_feasible(n_frames, labels):
    labels = list(labels)
    for c in labels:
        if c == BLANK:
            raise InvalidShape("label sequences must not contain the blank id")
    if n_frames < min_frames(labels):
        raise InfeasibleLabel(
            f"{len(labels)} labels need >= {min_frames(labels)} frames, have {n_frames}")
    return labels


def _extended(labels):
    ext = [BLANK]
    for c in labels:
        ext.append(c)
        ext.append(BLANK)
    return np.asarray(ext, dtype=np.int64)


def _skip_allowed(ext):
    # a jump of 2 is legal onto a non-blank that differs from the previous label
    s = np.zeros(len(ext), dtype=bool)
    s[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    return s


def ctc_loss_grad(lattice, labels):
    """Exact loss -ln P(labels | lattice) and its gradient w.r.t. the
    log-probability entries (forward-backward over the extended trellis)."""
    lattice = np.asarray(lattice, dtype=np.float64)
    n_frames = lattice.shape[0]
    labels = _check_feasible(n_frames, labels)
    ext = _extended(labels)
    skip = _skip_allowed(ext)
    s_len = len(ext)
    emit = lattice[:, ext]  # T x S

    alpha = np.full((n_frames, s_len), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if s_len > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, n_frames):
        prev = alpha[t - 1]
        best = prev.copy()
        np.logaddexp(best[1:], prev[:-1], out=best[1:])
        stepped = np.logaddexp(best[2:], prev[:-2])
        best[2:] = np.where(skip[2:], stepped, best[2:])
        alpha[t] = best + emit[t]

    log_p = np.logaddexp(alpha[-1, -1], alpha[-1, -2]) if s_len > 1 else alpha[-1, -1]
    if not np.isfinite(log_p):
        return np.inf, np.zeros_like(lattice)

    # beta includes the emission at its own frame
    beta = np.full((n_frames, s_len), NEG_INF)
    beta[-1, -1] = emit[-1, -1]
    if s_len > 1:
        beta[-1, -2] = emit[-1, -2]
    for t in range(n_frames - 2, -1, -1):
        nxt = beta[t + 1]
        best = nxt.copy()
        np.logaddexp(best[:-1], nxt[1:], out=best[:-1])
        stepped = np.logaddexp(best[:-2], nxt[2:])
        best[:-2] = np.where(skip[2:], stepped, best[:-2])
        beta[t] = best + emit[t]

    # posterior of passing through state s at frame t; emit counted twice
    gamma = alpha + beta - emit - log_p
    grad = np.zeros_like(lattice)
    post = np.exp(gamma)
    for s in range(s_len):
        grad[:, ext[s]] -= post[:, s]
    return float(-log_p), grad


def ctc_brute_force(lattice, labels, max_paths=10 ** 7):
    """Oracle: enumerate every class path, sum the probability of those
    collapsing to `labels`, return -ln of the sum.

    The enumeration is exhaustive; a path matches when the first entry of
    each run, blanks excluded, spells the target.
    """
    lattice = np.asarray(lattice, dtype=np.float64)
    n_frames, n_classes = lattice.shape
    if n_classes ** n_frames > max_paths:
        raise OracleTooLarge(f"{n_classes}^{n_frames} paths exceed {max_paths}")
    target = np.asarray(list(labels), dtype=np.int64)

    paths = np.array(list(product(range(n_classes), repeat=n_frames)), dtype=np.int64)
    log_probs = lattice[np.arange(n_frames), paths].sum(axis=1)
    run_start = np.ones_like(paths, dtype=bool)
    run_start[:, 1:] = paths[:, 1:] != paths[:, :-1]
    emitted = run_start & (paths != BLANK)
    candidates = emitted.sum(axis=1) == len(target)
    if len(target) == 0:
        matches = candidates
    else:
        rows = paths[candidates]
        seq = rows[emitted[candidates]].reshape(-1, len(target))
        matches = np.zeros(len(paths), dtype=bool)
        matches[np.flatnonzero(candidates)] = (seq == target).all(axis=1)
    if not matches.any():
        return np.inf
    top = log_probs[matches].max()
    return float(-(top + np.log(np.exp(log_probs[matches] - top).sum())))


def ctc_greedy_decode(lattice):
    """Best-path decoding: per-frame argmax, then collapse."""
    return collapse(np.asarray(lattice).argmax(axis=1))


def ctc_forced_align(lattice, labels):
    """Most probable path collapsing to `labels` (Viterbi with backpointers).

    Ties prefer staying in the current trellis state, so the alignment is
    deterministic. Returns one class id (0..V) per lattice frame.
    """
    lattice = np.asarray(lattice, dtype=np.float64)
    n_frames = lattice.shape[0]
    labels = _check_feasible(n_frames, labels)
    ext = _extended(labels)
    skip = _skip_allowed(ext)
    s_len = len(ext)
    emit = lattice[:, ext]

    delta = np.full((n_frames, s_len), NEG_INF)
    back = np.zeros((n_frames, s_len), dtype=np.int64)
    delta[0, 0] = emit[0, 0]
    back[0, 0] = 0
    if s_len > 1:
        delta[0, 1] = emit[0, 1]
        back[0, 1] = 1
    for t in range(1, n_frames):
        prev = delta[t - 1]
        # stay wins ties, then a 1-step advance, then a 2-step skip
        best = prev.copy()
        src = np.arange(s_len)
        adv = prev[:-1] > best[1:]
        best[1:] = np.where(adv, prev[:-1], best[1:])
        src[1:] = np.where(adv, np.arange(s_len - 1), src[1:])
        skp = skip[2:] & (prev[:-2] > best[2:])
        best[2:] = np.where(skp, prev[:-2], best[2:])
        src[2:] = np.where(skp, np.arange(s_len - 2), src[2:])
        delta[t] = best + emit[t]
        back[t] = src

    if s_len > 1 and delta[-1, -2] > delta[-1, -1]:
        state = s_len - 2
    else:
        state = s_len - 1
    if not np.isfinite(delta[-1, state]):
        raise InfeasibleLabel("no feasible path has positive probability")

    states = np.empty(n_frames, dtype=np.int64)
    for t in range(n_frames - 1, -1, -1):
        states[t] = state
        state = back[t, state]
    return [int(ext[s]) for s in states]


def alignment_log_prob(lattice, alignment):
    lattice = np.asarray(lattice, dtype=np.float64)
    return float(sum(lattice[t, c] for t, c in enumerate(alignment)))


def write_alignments(path, rows):
    """Dump `utt_id<TAB>space-separated class ids` lines."""
    with open(path, "w", encoding="utf-8") as f:
        for utt_id, alignment in rows:
            f.write(f"{utt_id}\t{' '.join(str(c) for c in alignment)}\n")


def read_alignments(path):
    rows = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            utt_id, ids = line.split("\t")
            rows[utt_id] = [int(c) for c in ids.split()] if ids.strip() else []
    return rows

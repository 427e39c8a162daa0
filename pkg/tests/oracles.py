"""Independent reference computations shared by unit and acceptance tests."""
import itertools
import math
from functools import lru_cache

import numpy as np

from nastaliq_lines import ctc, net


@lru_cache(maxsize=None)
def _paths(K, T):
    paths = np.array(list(itertools.product(range(K), repeat=T)), dtype=np.int64)
    groups = {}
    for i, p in enumerate(paths):
        labels, prev = [], None
        for k in p:
            if k != prev and k != 0:
                labels.append(int(k))
            prev = k
        groups.setdefault(tuple(labels), []).append(i)
    return paths, {k: np.array(v) for k, v in groups.items()}


def enumerate_ctc_prob(y, target):
    """Sum of path probabilities over every length-T path collapsing to ``target``."""
    T, K = y.shape
    paths, groups = _paths(K, T)
    idx = groups.get(tuple(target))
    if idx is None:
        return 0.0
    probs = y[np.arange(T), paths[idx]].prod(axis=1)
    return float(probs.sum())


def random_posteriors(rng, T, K):
    z = rng.normal(size=(T, K)) * 1.5
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def ctc_objective(model, frames, target):
    return ctc.ctc_loss(net.blstm_forward(model, frames)[0], target).neg_log_prob


def gradient_check(model, frames, target, eps=1e-5, floor=1e-6):
    """Largest relative gap between analytic and central-difference gradients.

    Relative error is |a - n| / max(|a|, |n|, floor).
    """
    y, cache = net.blstm_forward(model, frames)
    loss = ctc.ctc_loss(y, target)
    analytic = net.blstm_backward(model, cache, loss.logit_gradient).arrays()
    worst = 0.0
    for p, g in zip(model.arrays(), analytic):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = ctc_objective(model, frames, target)
            flat[i] = keep - eps
            down = ctc_objective(model, frames, target)
            flat[i] = keep
            numeric = (up - down) / (2 * eps)
            err = abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), floor)
            worst = max(worst, err)
    return worst


def random_tiny_case(rng, input_size=None):
    H = int(rng.integers(1, 5))
    T = int(rng.integers(1, 7))
    K = int(rng.integers(2, 5))
    I = input_size or int(rng.integers(1, 5))
    model = net.init_model(I, H, K, seed=int(rng.integers(2**31)))
    # spread the parameters so every gate path carries signal
    for a in model.arrays():
        a[...] = rng.uniform(-0.8, 0.8, a.shape)
    while True:
        L = int(rng.integers(1, T + 1))
        target = [int(k) for k in rng.integers(1, K, L)]
        if ctc.min_frames(target) <= T:
            break
    frames = rng.random((T, I))
    return model, frames, target


def single_cell_step(x, w, r, b, h0=0.0, c0=0.0):
    """Scalar LSTM cell (input, forget, candidate, output gates) evaluated by hand."""
    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))
    a = [w[k] * x + r[k] * h0 + b[k] for k in range(4)]
    i, f, z, o = sig(a[0]), sig(a[1]), math.tanh(a[2]), sig(a[3])
    c = f * c0 + i * z
    return o * math.tanh(c), c


def transcribed_segmentation(hp):
    """Line-by-line port of the projection-profile pseudocode.

    One-based j, pt = j - 1 as the zero-based top row. Two repairs the
    pseudocode needs to run at all: lw is reset per line (otherwise each
    band inherits the previous heights) and the inner loop stops at the end
    of the profile.
    """
    bands = []
    j = 1
    n = len(hp)
    while j <= n:
        if hp[j - 1] > 0:
            pt = j - 1
            lw = 0
            while j <= n and hp[j - 1] > 0:
                lw = lw + 1
                j = j + 1
            bands.append((pt, lw))
        j = j + 1
    return bands

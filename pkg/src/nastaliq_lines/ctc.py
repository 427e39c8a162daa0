"""CTC loss by log-space forward-backward, greedy decoding and label error rate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

BLANK = 0


class InfeasibleTargetError(ValueError):
    pass


@dataclass
class CtcLoss:
    neg_log_prob: float
    logit_gradient: np.ndarray

    @property
    def prob(self) -> float:
        return float(np.exp(-self.neg_log_prob))


@dataclass
class DecodeResult:
    labels: list[int]
    trace: np.ndarray


def min_frames(target) -> int:
    """Fewest frames that can emit ``target`` (repeats need a blank between)."""
    target = list(target)
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def extend_target(target) -> np.ndarray:
    ext = np.zeros(2 * len(target) + 1, dtype=np.int64)
    ext[1::2] = target
    return ext


@njit(cache=True, nogil=True)
def _logadd(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@njit(cache=True, nogil=True)
def _forward_backward(logy, ext):
    T = logy.shape[0]
    S = ext.shape[0]
    alpha = np.full((T, S), -np.inf)
    beta = np.full((T, S), -np.inf)
    alpha[0, 0] = logy[0, ext[0]]
    if S > 1:
        alpha[0, 1] = logy[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            v = alpha[t - 1, s]
            if s >= 1:
                v = _logadd(v, alpha[t - 1, s - 1])
            if s >= 2 and ext[s] != 0 and ext[s] != ext[s - 2]:
                v = _logadd(v, alpha[t - 1, s - 2])
            if v != -np.inf:
                alpha[t, s] = v + logy[t, ext[s]]
    # beta[t, s]: probability of finishing from state s at t, excluding frame t
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        for s in range(S):
            v = beta[t + 1, s] + logy[t + 1, ext[s]]
            if s + 1 < S:
                v = _logadd(v, beta[t + 1, s + 1] + logy[t + 1, ext[s + 1]])
            if s + 2 < S and ext[s + 2] != 0 and ext[s + 2] != ext[s]:
                v = _logadd(v, beta[t + 1, s + 2] + logy[t + 1, ext[s + 2]])
            beta[t, s] = v
    return alpha, beta


@njit(cache=True, nogil=True)
def _occupancy(alpha, beta, ext, K):
    T, S = alpha.shape
    occ = np.full((T, K), -np.inf)
    for t in range(T):
        for s in range(S):
            occ[t, ext[s]] = _logadd(occ[t, ext[s]], alpha[t, s] + beta[t, s])
    return occ


def forward_backward(posteriors, target):
    """Log-space alpha/beta tables and log p(target | input)."""
    y = np.asarray(posteriors, dtype=np.float64)
    target = [int(k) for k in target]
    T = y.shape[0]
    if T < max(1, min_frames(target)):
        raise InfeasibleTargetError(
            f"target of length {len(target)} needs at least {min_frames(target)} frames, got {T}")
    if any(k <= BLANK or k >= y.shape[1] for k in target):
        raise ValueError("target labels must lie in [1, K-1]")
    with np.errstate(divide="ignore"):
        logy = np.log(y)
    ext = extend_target(target)
    alpha, beta = _forward_backward(np.ascontiguousarray(logy), ext)
    log_p = np.logaddexp(alpha[-1, -1], alpha[-1, -2]) if len(ext) > 1 else alpha[-1, -1]
    return alpha, beta, float(log_p), ext


def ctc_loss(posteriors, target) -> CtcLoss:
    """Negative log-likelihood of ``target`` and its gradient w.r.t. the pre-softmax logits."""
    y = np.asarray(posteriors, dtype=np.float64)
    alpha, beta, log_p, ext = forward_backward(y, target)
    occ = _occupancy(alpha, beta, ext, y.shape[1])
    grad = y - np.exp(occ - log_p)
    return CtcLoss(-log_p, grad)


def best_path_decode(posteriors) -> DecodeResult:
    """Per-frame argmax (lowest index wins ties), collapse repeats, drop blanks."""
    trace = np.argmax(np.asarray(posteriors), axis=1)
    return DecodeResult(collapse(trace), trace)


def collapse(trace) -> list[int]:
    out = []
    prev = None
    for k in trace:
        k = int(k)
        if k != prev and k != BLANK:
            out.append(k)
        prev = k
    return out


def edit_distance(a, b) -> int:
    """Levenshtein distance with unit costs."""
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def label_error_rate(pairs) -> float:
    """Total edit distance over total target length."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty target set")
    errors = total = 0
    for decoded, target in pairs:
        if len(target) == 0:
            raise ValueError("targets must be non-empty")
        errors += edit_distance(decoded, target)
        total += len(target)
    return errors / total

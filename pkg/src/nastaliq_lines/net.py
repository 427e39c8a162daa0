"""A single-layer bidirectional LSTM with a shared softmax output layer.

Gate blocks are stacked in the order input, forget, candidate, output, so
each layer holds ``W`` (4H x I), ``R`` (4H x H) and ``b`` (4H). No peepholes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

MAGIC = b"BLSTM1"
VERSION = 1
INPUT_SIZE = 30
INIT_RANGE = 0.1
FORGET_BIAS = 1.0


class CheckpointError(ValueError):
    pass


@dataclass
class LstmParams:
    W: np.ndarray
    R: np.ndarray
    b: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.R.shape[1]

    @property
    def input_size(self) -> int:
        return self.W.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [self.W, self.R, self.b]


@dataclass
class BlstmModel:
    fwd: LstmParams
    bwd: LstmParams
    V: np.ndarray  # K x 2H output weights over [h_fwd, h_bwd]
    c: np.ndarray  # K output bias
    fingerprint: int = 0

    @property
    def hidden_size(self) -> int:
        return self.fwd.hidden_size

    @property
    def input_size(self) -> int:
        return self.fwd.input_size

    @property
    def num_classes(self) -> int:
        return self.V.shape[0]

    def arrays(self) -> list[np.ndarray]:
        """All parameter tensors in checkpoint order."""
        return self.fwd.arrays() + self.bwd.arrays() + [self.V, self.c]

    def copy(self) -> BlstmModel:
        return BlstmModel(*_clone_layers(self), self.V.copy(), self.c.copy(), self.fingerprint)

    def zeros_like(self) -> BlstmModel:
        z = [np.zeros_like(a) for a in self.arrays()]
        return BlstmModel(LstmParams(*z[0:3]), LstmParams(*z[3:6]), z[6], z[7], self.fingerprint)


def _clone_layers(m: BlstmModel):
    return (LstmParams(*(a.copy() for a in m.fwd.arrays())),
            LstmParams(*(a.copy() for a in m.bwd.arrays())))


def init_model(input_size: int = INPUT_SIZE, hidden_size: int = 100, alphabet_size: int = 2,
               seed: int = 0, fingerprint: int = 0) -> BlstmModel:
    if input_size < 1 or hidden_size < 1:
        raise ValueError("input and hidden sizes must be >= 1")
    if alphabet_size < 2:
        raise ValueError("alphabet needs the blank plus at least one class")
    rng = np.random.default_rng(seed)
    H, I, K = hidden_size, input_size, alphabet_size

    def layer():
        W = rng.uniform(-INIT_RANGE, INIT_RANGE, (4 * H, I))
        R = rng.uniform(-INIT_RANGE, INIT_RANGE, (4 * H, H))
        b = np.zeros(4 * H)
        b[H:2 * H] = FORGET_BIAS
        return LstmParams(W, R, b)

    fwd = layer()
    bwd = layer()
    V = rng.uniform(-INIT_RANGE, INIT_RANGE, (K, 2 * H))
    return BlstmModel(fwd, bwd, V, np.zeros(K), fingerprint)


# ---------------------------------------------------------------------------
# LSTM recurrence
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _lstm_scan(Ax, R, gates, cells, hs):
    T, H = hs.shape
    h = np.zeros(H)
    c = np.zeros(H)
    for t in range(T):
        a = Ax[t] + np.dot(R, h)
        for j in range(H):
            ig = 1.0 / (1.0 + np.exp(-a[j]))
            fg = 1.0 / (1.0 + np.exp(-a[H + j]))
            zg = np.tanh(a[2 * H + j])
            og = 1.0 / (1.0 + np.exp(-a[3 * H + j]))
            c[j] = fg * c[j] + ig * zg
            h[j] = og * np.tanh(c[j])
            gates[t, j] = ig
            gates[t, H + j] = fg
            gates[t, 2 * H + j] = zg
            gates[t, 3 * H + j] = og
            cells[t, j] = c[j]
            hs[t, j] = h[j]


@njit(cache=True, nogil=True)
def _lstm_scan_back(RT, gates, cells, dH, dA):
    T, H = dH.shape
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        for j in range(H):
            ig = gates[t, j]
            fg = gates[t, H + j]
            zg = gates[t, 2 * H + j]
            og = gates[t, 3 * H + j]
            c_prev = cells[t - 1, j] if t > 0 else 0.0
            tc = np.tanh(cells[t, j])
            dh = dH[t, j] + dh_next[j]
            dc = dh * og * (1.0 - tc * tc) + dc_next[j]
            dA[t, j] = dc * zg * ig * (1.0 - ig)
            dA[t, H + j] = dc * c_prev * fg * (1.0 - fg)
            dA[t, 2 * H + j] = dc * ig * (1.0 - zg * zg)
            dA[t, 3 * H + j] = dh * tc * og * (1.0 - og)
            dc_next[j] = dc * fg
        dh_next = np.dot(RT, dA[t])


@dataclass
class LstmCache:
    X: np.ndarray
    gates: np.ndarray
    cells: np.ndarray
    hs: np.ndarray


def lstm_forward(p: LstmParams, frames) -> tuple[np.ndarray, LstmCache]:
    """Hidden states (T x H) from zero initial state, plus what backprop needs."""
    X = np.ascontiguousarray(frames, dtype=np.float64)
    if X.size == 0:
        X = X.reshape(0, p.input_size)
    if X.ndim != 2 or X.shape[1] != p.input_size:
        raise ValueError(f"frames must have width {p.input_size}, got shape {X.shape}")
    T, H = X.shape[0], p.hidden_size
    gates = np.empty((T, 4 * H))
    cells = np.empty((T, H))
    hs = np.empty((T, H))
    if T:
        Ax = X @ p.W.T + p.b
        _lstm_scan(np.ascontiguousarray(Ax), np.ascontiguousarray(p.R), gates, cells, hs)
    return hs, LstmCache(X, gates, cells, hs)


def lstm_backward(p: LstmParams, cache: LstmCache, dH: np.ndarray) -> LstmParams:
    """Gradients of a loss w.r.t. the layer parameters given dLoss/dh_t."""
    T, H = cache.hs.shape
    if dH.shape != (T, H):
        raise ValueError("hidden-state gradient does not match the cached forward pass")
    dA = np.zeros((T, 4 * H))
    if T:
        _lstm_scan_back(np.ascontiguousarray(p.R.T), cache.gates, cache.cells,
                        np.ascontiguousarray(dH), dA)
    dW = dA.T @ cache.X
    dR = dA[1:].T @ cache.hs[:-1] if T > 1 else np.zeros_like(p.R)
    return LstmParams(dW, dR, dA.sum(axis=0))


# ---------------------------------------------------------------------------
# Bidirectional network
# ---------------------------------------------------------------------------

@dataclass
class BlstmCache:
    fwd: LstmCache
    bwd: LstmCache
    hcat: np.ndarray
    posteriors: np.ndarray = field(repr=False)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def blstm_forward(m: BlstmModel, frames) -> tuple[np.ndarray, BlstmCache]:
    """Posterior matrix (T x K); row t is the softmax over labels at frame t."""
    X = np.ascontiguousarray(frames, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.input_size:
        raise ValueError(f"frames must have width {m.input_size}, got shape {X.shape}")
    hf, cf = lstm_forward(m.fwd, X)
    hb_rev, cb = lstm_forward(m.bwd, X[::-1])
    hcat = np.concatenate([hf, hb_rev[::-1]], axis=1)
    y = softmax(hcat @ m.V.T + m.c)
    return y, BlstmCache(cf, cb, hcat, y)


def blstm_backward(m: BlstmModel, cache: BlstmCache, output_gradient: np.ndarray) -> BlstmModel:
    """Parameter gradients given dLoss/dlogits (T x K)."""
    G = np.asarray(output_gradient, dtype=np.float64)
    T, H = cache.hcat.shape[0], m.hidden_size
    if G.shape != (T, m.num_classes):
        raise ValueError("output gradient does not match the cached forward pass")
    dV = G.T @ cache.hcat
    dc = G.sum(axis=0)
    dh = G @ m.V
    gf = lstm_backward(m.fwd, cache.fwd, dh[:, :H])
    gb = lstm_backward(m.bwd, cache.bwd, dh[::-1, H:])
    return BlstmModel(gf, gb, dV, dc, m.fingerprint)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<6sIIIIQ")


def save_model(m: BlstmModel, path) -> None:
    """Write ``BLSTM1``, version, (input, hidden, K), fingerprint, then float64 LE tensors.

    Tensor order: fwd W, R, b; bwd W, R, b; output V, c; each row-major.
    """
    header = _HEADER.pack(MAGIC, VERSION, m.input_size, m.hidden_size, m.num_classes,
                          m.fingerprint)
    with open(path, "wb") as fh:
        fh.write(header)
        for a in m.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _shapes(I: int, H: int, K: int):
    layer = [(4 * H, I), (4 * H, H), (4 * H,)]
    return layer + layer + [(K, 2 * H), (K,)]


def load_model(path, expected_fingerprint: int | None = None) -> BlstmModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"corrupt checkpoint {path}: truncated header")
    magic, version, I, H, K, fp = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"corrupt checkpoint {path}: bad magic")
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} not supported (expected {VERSION})")
    if expected_fingerprint is not None and fp != expected_fingerprint:
        raise CheckpointError(f"alphabet fingerprint mismatch: checkpoint {fp:016x}, "
                              f"alphabet {expected_fingerprint:016x}")
    shapes = _shapes(I, H, K)
    need = sum(int(np.prod(s)) for s in shapes)
    body = data[_HEADER.size:]
    if len(body) != need * 8:
        raise CheckpointError(f"corrupt checkpoint {path}: expected {need * 8} parameter bytes, "
                              f"found {len(body)}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    arrays, pos = [], 0
    for s in shapes:
        n = int(np.prod(s))
        arrays.append(flat[pos:pos + n].reshape(s).copy())
        pos += n
    return BlstmModel(LstmParams(*arrays[0:3]), LstmParams(*arrays[3:6]), arrays[6], arrays[7], fp)

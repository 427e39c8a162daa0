"""Online momentum-SGD training with CTC, early stopping and hidden-size sweeps."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import corpus, ctc, net, raster, segment

log = logging.getLogger(__name__)

METRICS_HEADER = "epoch,train_ctc_loss,train_label_error,val_label_error,wall_seconds"
# Relative drop in validation CTC loss that counts as progress at equal label error.
LOSS_MIN_DELTA = 1e-3
SWEEP_HEADER = "hidden_size,best_val_label_error,test_label_error,train_seconds"


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    hidden_size: int = 100
    learning_rate: float = 1e-4
    momentum: float = 0.9
    max_epochs: int = 100
    patience: int = 20
    gradient_clip: float = 1.0
    seed: int = 0
    reproducible: bool = False
    batch_size: int = 1
    threads: int = 1
    direction: str = segment.RIGHT_TO_LEFT

    def __post_init__(self):
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.patience < 1 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("patience, max_epochs and batch_size must be >= 1")
        if not self.gradient_clip > 0:
            raise ValueError("gradient_clip must be > 0")


@dataclass
class Sample:
    sample_id: corpus.SampleId
    frames: np.ndarray
    target: list[int]


@dataclass
class EpochMetrics:
    epoch: int
    train_ctc_loss: float
    train_label_error: float
    val_label_error: float
    wall_seconds: float
    processed: int = 0
    skipped: int = 0
    val_ctc_loss: float = math.inf

    def csv_row(self, zero_time: bool = False) -> str:
        secs = 0.0 if zero_time else self.wall_seconds
        return (f"{self.epoch},{self.train_ctc_loss!r},{self.train_label_error!r},"
                f"{self.val_label_error!r},{secs!r}")


@dataclass
class TrainResult:
    model: net.BlstmModel
    history: list[EpochMetrics]
    best_epoch: int
    stopped_early: bool
    skipped: list[corpus.SampleId] = field(default_factory=list)

    @property
    def train_seconds(self) -> float:
        return sum(m.wall_seconds for m in self.history)


def load_samples(records, alphabet: corpus.Alphabet,
                 direction: str = segment.RIGHT_TO_LEFT) -> list[Sample]:
    out = []
    for r in records:
        frames = segment.line_frames(raster.load_image(r.image), direction)
        target = alphabet.encode(corpus.read_ground_truth(r.gt))
        out.append(Sample(r.sample_id, frames, target))
    return out


def sample_gradient(model: net.BlstmModel, sample: Sample):
    """Loss, best-path decode and parameter gradients for one line."""
    y, cache = net.blstm_forward(model, sample.frames)
    loss = ctc.ctc_loss(y, sample.target)
    grads = net.blstm_backward(model, cache, loss.logit_gradient)
    return loss.neg_log_prob, ctc.best_path_decode(y).labels, grads


def _map(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


class MomentumSGD:
    """``v <- momentum * v - lr * clip(g)``; ``p <- p + v``."""

    def __init__(self, model: net.BlstmModel, lr: float, momentum: float, clip: float):
        self.params = model.arrays()
        self.velocity = [np.zeros_like(p) for p in self.params]
        self.lr, self.momentum, self.clip = lr, momentum, clip

    def step(self, grads) -> None:
        for p, v, g in zip(self.params, self.velocity, grads):
            np.clip(g, -self.clip, self.clip, out=g)
            v *= self.momentum
            v -= self.lr * g
            p += v


def decode_split(model: net.BlstmModel, samples, threads: int = 1):
    def one(s):
        return ctc.best_path_decode(net.blstm_forward(model, s.frames)[0]).labels
    return _map(one, samples, threads)


def evaluate(model: net.BlstmModel, samples, alphabet: corpus.Alphabet | None = None,
             threads: int = 1):
    """Label error rate of best-path decodes plus per-sample ``(id, decoded, target)``."""
    if alphabet is not None and model.fingerprint != alphabet.fingerprint():
        raise TrainingError("alphabet fingerprint mismatch between model and alphabet")
    samples = list(samples)
    if not samples:
        raise TrainingError("empty split")
    decoded = decode_split(model, samples, threads)
    rows = [(s.sample_id, d, s.target) for s, d in zip(samples, decoded)]
    return ctc.label_error_rate((d, t) for _, d, t in rows), rows


def _val_scores(model: net.BlstmModel, samples, threads: int = 1):
    """Validation label error and mean CTC loss per target token.

    Lines too short for their targets add nothing to the loss.
    """
    def one(s):
        y = net.blstm_forward(model, s.frames)[0]
        nll = ctc.ctc_loss(y, s.target).neg_log_prob if \
            len(s.frames) >= max(1, ctc.min_frames(s.target)) else None
        return ctc.best_path_decode(y).labels, nll
    results = _map(one, samples, threads)
    err = ctc.label_error_rate((d, s.target) for (d, _), s in zip(results, samples))
    scored = [(nll, len(s.target)) for (_, nll), s in zip(results, samples) if nll is not None]
    tokens = sum(n for _, n in scored)
    loss = sum(nll for nll, _ in scored) / tokens if tokens else math.inf
    return err, loss


def write_decodes(path, rows, alphabet: corpus.Alphabet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sample_id\tedits\tdecoded\ttarget\n")
        for sid, d, t in rows:
            fh.write(f"{sid}\t{ctc.edit_distance(d, t)}\t{alphabet.decode(d)}\t"
                     f"{alphabet.decode(t)}\n")


def train(train_samples, val_samples, alphabet: corpus.Alphabet, cfg: TrainConfig,
          metrics_path=None) -> TrainResult:
    """Fit a BLSTM with per-sample (or mini-batch) momentum SGD.

    Each epoch shuffles the training lines with the seeded generator, updates
    after every ``batch_size`` lines, then scores the validation split. The
    model with the lowest validation label error is kept. An epoch counts as
    progress when that error drops, or when it ties and the validation CTC
    loss drops by more than ``LOSS_MIN_DELTA`` (relative): while the net
    still emits only blanks the error is stuck at 1.0 but the loss is not. Training stops at ``max_epochs`` or after
    ``patience`` epochs without progress. When
    ``metrics_path`` is given, one CSV row is appended per finished epoch.
    """
    train_samples, val_samples = list(train_samples), list(val_samples)
    if not train_samples or not val_samples:
        raise TrainingError("empty split: training needs train and val samples")
    rng = np.random.default_rng(cfg.seed)
    model = net.init_model(segment.X_HEIGHT, cfg.hidden_size, len(alphabet), cfg.seed,
                           alphabet.fingerprint())
    opt = MomentumSGD(model, cfg.learning_rate, cfg.momentum, cfg.gradient_clip)

    feasible, skipped = [], []
    for s in train_samples:
        if len(s.frames) >= max(1, ctc.min_frames(s.target)):
            feasible.append(s)
        else:
            log.warning("skipping %s: %d frames cannot emit %d labels", s.sample_id,
                        len(s.frames), len(s.target))
            skipped.append(s.sample_id)
    if not feasible:
        raise TrainingError("no feasible training samples")

    if metrics_path is not None:
        with open(metrics_path, "w", encoding="utf-8") as fh:
            fh.write(METRICS_HEADER + "\n")

    history: list[EpochMetrics] = []
    best_err, best_loss, best_model, best_epoch, wait = math.inf, math.inf, model.copy(), 0, 0
    stopped_early = False
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(feasible))
        total_loss = 0.0
        total_tokens = 0
        pairs = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [feasible[i] for i in order[start:start + cfg.batch_size]]
            results = _map(lambda s: sample_gradient(model, s), batch, cfg.threads)
            grads = None
            for s, (loss, decoded, g) in zip(batch, results):
                total_loss += loss
                total_tokens += len(s.target)
                pairs.append((decoded, s.target))
                arrays = g.arrays()
                if grads is None:
                    grads = arrays
                else:
                    for acc, a in zip(grads, arrays):
                        acc += a
            opt.step(grads)
        val_err, val_loss = _val_scores(model, val_samples, cfg.threads)
        metrics = EpochMetrics(epoch, total_loss / total_tokens, ctc.label_error_rate(pairs),
                               val_err, time.perf_counter() - t0, len(feasible), len(skipped),
                               val_loss)
        history.append(metrics)
        if metrics_path is not None:
            with open(metrics_path, "a", encoding="utf-8") as fh:
                fh.write(metrics.csv_row(zero_time=cfg.reproducible) + "\n")
        log.info("epoch %d loss %.4f train %.4f val %.4f (%.1fs)", epoch,
                 metrics.train_ctc_loss, metrics.train_label_error, val_err,
                 metrics.wall_seconds)
        if val_err < best_err or (val_err == best_err
                                  and val_loss < best_loss * (1.0 - LOSS_MIN_DELTA)):
            best_err, best_loss, best_model, best_epoch, wait = (val_err, val_loss, model.copy(),
                                                                 epoch, 0)
        else:
            wait += 1
            if wait >= cfg.patience:
                stopped_early = epoch < cfg.max_epochs
                break
    return TrainResult(best_model, history, best_epoch, stopped_early, skipped)


def write_metrics(path, history, zero_time: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(METRICS_HEADER + "\n")
        for m in history:
            fh.write(m.csv_row(zero_time) + "\n")


@dataclass
class SweepRow:
    hidden_size: int
    best_val_label_error: float
    test_label_error: float
    train_seconds: float
    epochs: int

    @property
    def seconds_per_epoch(self) -> float:
        return self.train_seconds / self.epochs

    def csv_row(self) -> str:
        return (f"{self.hidden_size},{self.best_val_label_error!r},"
                f"{self.test_label_error!r},{self.train_seconds!r}")


def _warm_up(num_classes: int) -> None:
    # load the compiled kernels before any timed run so the first size is not charged for it
    model = net.init_model(segment.X_HEIGHT, 1, num_classes)
    sample_gradient(model, Sample(corpus.SampleId(0, 0, 0), np.ones((3, segment.X_HEIGHT)), [1]))


def sweep_hidden_sizes(train_samples, val_samples, test_samples, alphabet: corpus.Alphabet,
                       sizes, base_cfg: TrainConfig, csv_path=None) -> list[SweepRow]:
    sizes = list(sizes)
    if not sizes:
        raise ValueError("sweep needs at least one hidden size")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("hidden sizes must be strictly increasing")
    _warm_up(len(alphabet))
    rows = []
    for h in sizes:
        cfg = TrainConfig(**{**base_cfg.__dict__, "hidden_size": h})
        result = train(train_samples, val_samples, alphabet, cfg)
        test_err, _ = evaluate(result.model, test_samples, alphabet, cfg.threads)
        rows.append(SweepRow(h, min(m.val_label_error for m in result.history), test_err,
                             result.train_seconds, len(result.history)))
        log.info("hidden %d: val %.4f test %.4f %.1fs", h, rows[-1].best_val_label_error,
                 test_err, result.train_seconds)
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(SWEEP_HEADER + "\n")
            for r in rows:
                fh.write(r.csv_row() + "\n")
    return rows

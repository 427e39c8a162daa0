import numpy as np
import pytest

from nastaliq_lines import corpus, net, train
from nastaliq_lines.train import TrainConfig


def quick(**kw):
    base = dict(hidden_size=8, learning_rate=1e-3, max_epochs=3, patience=5, seed=1)
    return TrainConfig(**{**base, **kw})


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.hidden_size, cfg.learning_rate, cfg.momentum) == (100, 1e-4, 0.9)
        assert (cfg.max_epochs, cfg.patience, cfg.gradient_clip) == (100, 20, 1.0)

    @pytest.mark.parametrize("kw", [{"learning_rate": 0}, {"momentum": 1.0}, {"patience": 0},
                                    {"gradient_clip": 0}, {"momentum": -0.1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


class TestOptimizer:
    def test_zero_learning_rate_is_identity(self):
        m = net.init_model(30, 4, 3, seed=0)
        before = [a.copy() for a in m.arrays()]
        opt = train.MomentumSGD(m, 0.0, 0.9, 1.0)
        rng = np.random.default_rng(0)
        for _ in range(5):
            opt.step([rng.normal(size=a.shape) for a in m.arrays()])
        for a, b in zip(before, m.arrays()):
            assert a.tobytes() == b.tobytes()

    def test_update_rule(self):
        p = np.array([1.0, 1.0])
        m = net.BlstmModel(net.LstmParams(p, p.copy(), p.copy()),
                           net.LstmParams(p.copy(), p.copy(), p.copy()), p.copy(), p.copy())
        opt = train.MomentumSGD(m, 0.1, 0.5, 1.0)
        g = [np.array([3.0, -0.5]) for _ in range(8)]
        opt.step([x.copy() for x in g])
        np.testing.assert_allclose(m.V, [1 - 0.1, 1 + 0.05])
        opt.step([x.copy() for x in g])
        # v = 0.5 * v - 0.1 * clip(g)
        np.testing.assert_allclose(m.V, [1 - 0.1 - 0.15, 1 + 0.05 + 0.075])


class TestTrain:
    def test_stops_when_validation_cannot_improve(self, tiny_corpus):
        _, gen, s = tiny_corpus
        cfg = quick(learning_rate=1e-12, patience=1, max_epochs=10)
        result = train.train(s["train"], s["val"], gen.alphabet, cfg)
        assert len(result.history) == 2
        assert result.stopped_early and result.best_epoch == 1

    @pytest.mark.parametrize("losses,epochs,best", [
        ([9.0, 8.0, 7.0, 6.0, 5.0, 4.0], 6, 6),      # blank plateau, loss still falling
        ([9.0, 8.999, 8.998, 8.997, 8.996, 8.995], 3, 1),  # drops below the minimum delta
    ])
    def test_loss_breaks_label_error_ties(self, tiny_corpus, monkeypatch, losses, epochs, best):
        _, gen, s = tiny_corpus
        scripted = iter(losses)
        monkeypatch.setattr(train, "_val_scores", lambda *a: (1.0, next(scripted)))
        cfg = quick(learning_rate=1e-12, patience=2, max_epochs=len(losses))
        result = train.train(s["train"], s["val"], gen.alphabet, cfg)
        assert (len(result.history), result.best_epoch) == (epochs, best)
        assert [m.val_ctc_loss for m in result.history] == losses[:epochs]

    def test_deterministic_histories(self, tiny_corpus, tmp_path):
        _, gen, s = tiny_corpus
        cfg = quick(reproducible=True)
        a = train.train(s["train"], s["val"], gen.alphabet, cfg, tmp_path / "a.csv")
        b = train.train(s["train"], s["val"], gen.alphabet, cfg, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        for x, y in zip(a.model.arrays(), b.model.arrays()):
            assert x.tobytes() == y.tobytes()

    def test_metrics_csv(self, tiny_corpus, tmp_path):
        _, gen, s = tiny_corpus
        train.train(s["train"], s["val"], gen.alphabet, quick(reproducible=True),
                    tmp_path / "m.csv")
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines[0] == train.METRICS_HEADER
        assert len(lines) == 4
        for row in lines[1:]:
            values = [float(v) for v in row.split(",")]
            assert all(np.isfinite(v) and v >= 0 for v in values)
            assert values[-1] == 0.0

    def test_best_checkpoint_matches_history(self, tiny_corpus):
        _, gen, s = tiny_corpus
        result = train.train(s["train"], s["val"], gen.alphabet, quick(max_epochs=4))
        err, _ = train.evaluate(result.model, s["val"], gen.alphabet)
        assert err == min(m.val_label_error for m in result.history)
        assert result.model.fingerprint == gen.alphabet.fingerprint()

    def test_infeasible_skipped_and_counted(self, tiny_corpus):
        _, gen, s = tiny_corpus
        short = train.Sample(corpus.SampleId(999, 1, 1), s["train"][0].frames[:2], [1, 1, 2])
        samples = s["train"] + [short]
        result = train.train(samples, s["val"], gen.alphabet, quick(max_epochs=1))
        assert result.skipped == [short.sample_id]
        m = result.history[0]
        assert m.processed + m.skipped == len(samples)

    def test_empty_split(self, tiny_corpus):
        _, gen, s = tiny_corpus
        with pytest.raises(train.TrainingError, match="empty split"):
            train.train(s["train"], [], gen.alphabet, quick())

    def test_mini_batch_threads_match_serial(self, tiny_corpus):
        _, gen, s = tiny_corpus
        one = train.train(s["train"], s["val"], gen.alphabet, quick(batch_size=4, max_epochs=2))
        many = train.train(s["train"], s["val"], gen.alphabet,
                           quick(batch_size=4, max_epochs=2, threads=3))
        for x, y in zip(one.model.arrays(), many.model.arrays()):
            assert x.tobytes() == y.tobytes()


class TestEvaluate:
    def test_fingerprint_mismatch(self, tiny_corpus):
        _, gen, s = tiny_corpus
        m = net.init_model(30, 4, len(gen.alphabet), fingerprint=123)
        with pytest.raises(train.TrainingError, match="fingerprint"):
            train.evaluate(m, s["test"], gen.alphabet)

    def test_empty(self, tiny_corpus):
        _, gen, _ = tiny_corpus
        m = net.init_model(30, 4, len(gen.alphabet), fingerprint=gen.alphabet.fingerprint())
        with pytest.raises(train.TrainingError, match="empty split"):
            train.evaluate(m, [], gen.alphabet)

    def test_decodes_file(self, tiny_corpus, tmp_path):
        _, gen, s = tiny_corpus
        m = net.init_model(30, 4, len(gen.alphabet), fingerprint=gen.alphabet.fingerprint())
        err, rows = train.evaluate(m, s["test"], gen.alphabet)
        assert 0 <= err and len(rows) == len(s["test"])
        train.write_decodes(tmp_path / "d.tsv", rows, gen.alphabet)
        assert len((tmp_path / "d.tsv").read_text().splitlines()) == len(rows) + 1


class TestSweep:
    def test_single_size_equals_plain_run(self, tiny_corpus, tmp_path):
        _, gen, s = tiny_corpus
        cfg = quick(max_epochs=2)
        rows = train.sweep_hidden_sizes(s["train"], s["val"], s["test"], gen.alphabet, [8], cfg,
                                        tmp_path / "sweep.csv")
        plain = train.train(s["train"], s["val"], gen.alphabet, cfg)
        test_err, _ = train.evaluate(plain.model, s["test"], gen.alphabet)
        assert len(rows) == 1
        assert rows[0].test_label_error == test_err
        assert rows[0].best_val_label_error == min(m.val_label_error for m in plain.history)
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == train.SWEEP_HEADER and lines[1].startswith("8,")

    @pytest.mark.parametrize("sizes", [[8, 8], [16, 8], []])
    def test_bad_sizes(self, tiny_corpus, sizes):
        _, gen, s = tiny_corpus
        with pytest.raises(ValueError):
            train.sweep_hidden_sizes(s["train"], s["val"], s["test"], gen.alphabet, sizes,
                                     quick())

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nastaliq_lines import corpus, synth
from nastaliq_lines.corpus import Alphabet, CorpusError, Manifest, Record, SampleId


def make_manifest(tmp_path, rows):
    """rows: (sample id text, gt text, split)."""
    records = []
    for sid, text, split in rows:
        gt = tmp_path / f"{sid}.gt.txt"
        gt.write_text(text + "\n", encoding="utf-8")
        records.append(Record(str(tmp_path / f"{sid}.pgm"), str(gt),
                              corpus.parse_sample_id(sid), split))
    return Manifest(records)


class TestSampleId:
    def test_parse(self):
        assert corpus.parse_sample_id("001-02-03") == SampleId(1, 2, 3)
        assert corpus.parse_sample_id("000-00-00") == SampleId(0, 0, 0)

    @pytest.mark.parametrize("bad", ["1-2-3", "001-02-3", "00a-02-03", "001_02_03",
                                     "001-02-03-", " 001-02-03", "0010-2-03"])
    def test_malformed(self, bad):
        with pytest.raises(CorpusError, match="malformed"):
            corpus.parse_sample_id(bad)

    @given(st.integers(0, 999), st.integers(0, 99), st.integers(0, 99))
    def test_round_trip(self, w, p, n):
        sid = SampleId(w, p, n)
        text = corpus.render_sample_id(sid)
        assert corpus.parse_sample_id(text) == sid
        assert corpus.render_sample_id(corpus.parse_sample_id(text)) == text

    def test_ordering_and_page(self):
        assert SampleId(1, 2, 3) < SampleId(1, 3, 0)
        assert SampleId(7, 1, 9).page_id == "007-01"


class TestAlphabet:
    alpha = Alphabet(["meem_i", "seen_m", "yea_f"])

    def test_encode(self):
        assert corpus.encode_transcription("meem_i seen_m yea_f", self.alpha) == [1, 2, 3]

    def test_empty(self):
        with pytest.raises(CorpusError, match="empty target"):
            self.alpha.encode("")

    def test_unknown(self):
        with pytest.raises(CorpusError, match=r"unknown token 'zz' at position 2"):
            self.alpha.encode("meem_i zz")

    def test_blank_not_encodable(self):
        with pytest.raises(CorpusError):
            self.alpha.encode(corpus.BLANK)

    @given(st.lists(st.sampled_from(["meem_i", "seen_m", "yea_f"]), min_size=1))
    def test_round_trip(self, toks):
        text = " ".join(toks)
        assert self.alpha.decode(self.alpha.encode(text)) == text

    def test_file_round_trip(self, tmp_path):
        self.alpha.save(tmp_path / "a.txt")
        assert (tmp_path / "a.txt").read_text().splitlines()[0] == "<blank>"
        back = Alphabet.load(tmp_path / "a.txt")
        assert back == self.alpha
        assert back.fingerprint() == self.alpha.fingerprint()
        assert Alphabet(["a"]).fingerprint() != Alphabet(["b"]).fingerprint()

    def test_load_requires_blank_first(self, tmp_path):
        (tmp_path / "a.txt").write_text("meem_i\n")
        with pytest.raises(CorpusError):
            Alphabet.load(tmp_path / "a.txt")


class TestBuildAlphabet:
    def test_sorted_union(self, tmp_path):
        m = make_manifest(tmp_path, [("000-01-01", "a_i b_m", "train"),
                                     ("000-01-02", "b_m c_f", "train")])
        assert corpus.build_alphabet(m).tokens == ["<blank>", "a_i", "b_m", "c_f"]

    def test_empty(self):
        assert corpus.build_alphabet(Manifest()).tokens == ["<blank>"]

    def test_order_invariant(self, tmp_path):
        rows = [(f"00{i}-01-01", f"t{i % 3}_i x_{i}", "train") for i in range(6)]
        m = make_manifest(tmp_path, rows)
        shuffled = list(m)
        random.Random(4).shuffle(shuffled)
        assert corpus.build_alphabet(m) == corpus.build_alphabet(Manifest(shuffled))
        assert corpus.build_alphabet(m) == corpus.build_alphabet(m)

    def test_unreadable_gt(self, tmp_path):
        m = Manifest([Record("x.pgm", str(tmp_path / "missing.gt.txt"), SampleId(0, 1, 1),
                             "train")])
        with pytest.raises(CorpusError, match="unreadable ground truth"):
            corpus.build_alphabet(m)


class TestSplit:
    def test_table_writer_counts(self):
        assign = corpus.split_by_writer(range(500), (0.60, 0.24, 0.16), seed=3)
        counts = {s: sum(v == s for v in assign.values()) for s in corpus.SPLITS}
        assert counts == {"train": 300, "val": 120, "test": 80}

    def test_deterministic(self):
        a = corpus.split_by_writer(range(10), (0.5, 0.3, 0.2), seed=11)
        b = corpus.split_by_writer(range(10), (0.5, 0.3, 0.2), seed=11)
        assert a == b
        assert sorted(a) == list(range(10))

    def test_bad_sum(self):
        with pytest.raises(CorpusError, match="sum"):
            corpus.split_by_writer(range(10), (0.5, 0.5, 0.1))

    def test_too_few_writers(self):
        with pytest.raises(CorpusError, match="too few writers"):
            corpus.split_by_writer([1, 2], (0.6, 0.24, 0.16))

    @given(st.integers(3, 200), st.integers(0, 2**31))
    def test_partition(self, n, seed):
        assign = corpus.split_by_writer(range(n), seed=seed)
        assert len(assign) == n
        assert set(assign.values()) <= set(corpus.SPLITS)


class TestManifest:
    def test_writer_leak_rejected(self, tmp_path):
        with pytest.raises(CorpusError, match="more than one split"):
            make_manifest(tmp_path, [("001-01-01", "a", "train"), ("001-02-01", "a", "test")])

    def test_duplicate_rejected(self, tmp_path):
        with pytest.raises(CorpusError, match="duplicate"):
            make_manifest(tmp_path, [("001-01-01", "a", "train"), ("001-01-01", "a", "train")])

    def test_unknown_split(self, tmp_path):
        with pytest.raises(CorpusError, match="unknown split"):
            make_manifest(tmp_path, [("001-01-01", "a", "dev")])

    def test_tsv_round_trip(self, tmp_path):
        m = make_manifest(tmp_path, [("001-01-01", "a b", "train"), ("002-01-01", "c", "val")])
        m.save(tmp_path / "manifest.tsv")
        line = (tmp_path / "manifest.tsv").read_text().splitlines()[0]
        assert line == "001-01-01.pgm\t001-01-01.gt.txt\ttrain"
        back = Manifest.load(tmp_path / "manifest.tsv")
        assert [r.sample_id for r in back] == [r.sample_id for r in m]
        assert [r.gt for r in back] == [r.gt for r in m]

    def test_load_bad_row(self, tmp_path):
        (tmp_path / "m.tsv").write_text("a.pgm\tb.gt.txt\n")
        with pytest.raises(CorpusError, match="3 tab-separated"):
            Manifest.load(tmp_path / "m.tsv")

    def test_find_and_build(self, tmp_path):
        for w in range(5):
            sid = f"{w:03d}-01-01"
            (tmp_path / f"{sid}.pgm").write_bytes(b"")
            (tmp_path / f"{sid}.gt.txt").write_text("a\n")
        (tmp_path / "notes.txt").write_text("skip me")
        samples = corpus.find_samples(tmp_path)
        assert len(samples) == 5
        m = corpus.build_manifest(samples, seed=1)
        assert len(m) == 5


class TestStats:
    def test_counts(self, tmp_path):
        m = make_manifest(tmp_path, [("001-01-01", "a b c", "train"),
                                     ("002-01-01", "a b c d", "test")])
        s = corpus.manifest_stats(m)
        assert (s["lines"], s["tokens"], s["distinct_tokens"]) == (2, 7, 4)
        assert s["writers_train"] == 1 and s["lines_test"] == 1

    def test_empty(self):
        s = corpus.manifest_stats(Manifest())
        assert all(v == 0 for v in s.values())

    def test_matches_generator_bookkeeping(self, tmp_path):
        cfg = synth.SynthConfig(lines_per_page=10, tokens_per_line=(3, 6), seed=2)
        gen = synth.generate_corpus(cfg, 10, tmp_path)
        s = corpus.manifest_stats(Manifest.load(tmp_path / "manifest.tsv"))
        assert s["lines"] == gen.counts["lines"] == 100
        assert s["tokens"] == gen.counts["tokens"]
        assert s["distinct_tokens"] == len(gen.alphabet) - 1

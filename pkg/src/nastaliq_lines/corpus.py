"""Sample identifiers, label alphabets, manifests and writer-level splits."""
from __future__ import annotations

import hashlib
import os
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BLANK = "<blank>"
SPLITS = ("train", "val", "test")
DEFAULT_FRACTIONS = (0.6, 0.24, 0.16)
GT_SUFFIX = ".gt.txt"
IMAGE_SUFFIXES = (".pgm", ".png", ".ppm")

_ID_RE = re.compile(r"(\d{3})-(\d{2})-(\d{2})")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class SampleId:
    writer: int
    page: int
    line: int

    def __post_init__(self):
        if not (0 <= self.writer <= 999 and 0 <= self.page <= 99 and 0 <= self.line <= 99):
            raise CorpusError(f"sample id out of range: {self.writer}, {self.page}, {self.line}")

    def __str__(self) -> str:
        return f"{self.writer:03d}-{self.page:02d}-{self.line:02d}"

    @property
    def page_id(self) -> str:
        return f"{self.writer:03d}-{self.page:02d}"


def parse_sample_id(name: str) -> SampleId:
    m = _ID_RE.fullmatch(name)
    if m is None:
        raise CorpusError(f"malformed sample id {name!r} (expected ddd-dd-dd)")
    return SampleId(*(int(g) for g in m.groups()))


def render_sample_id(sid: SampleId) -> str:
    return str(sid)


class Alphabet:
    """Label tokens with the CTC blank fixed at index 0."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if BLANK in tokens:
            raise CorpusError(f"{BLANK} is reserved")
        if len(set(tokens)) != len(tokens):
            raise CorpusError("alphabet tokens must be unique")
        self.tokens = [BLANK] + tokens
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Alphabet) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f"Alphabet({self.tokens[1:]!r})"

    def encode(self, text: str) -> list[int]:
        toks = text.split()
        if not toks:
            raise CorpusError("empty target")
        out = []
        for pos, tok in enumerate(toks, 1):
            if tok not in self.index or tok == BLANK:
                raise CorpusError(f"unknown token {tok!r} at position {pos}")
            out.append(self.index[tok])
        return out

    def decode(self, indices) -> str:
        return " ".join(self.tokens[i] for i in indices)

    def to_text(self) -> str:
        return "".join(t + "\n" for t in self.tokens)

    def fingerprint(self) -> int:
        """64-bit hash of the alphabet file bytes."""
        digest = hashlib.sha256(self.to_text().encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> Alphabet:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != BLANK:
            raise CorpusError(f"{path}: first line must be {BLANK}")
        return cls(lines[1:])


def encode_transcription(gt: str, alphabet: Alphabet) -> list[int]:
    return alphabet.encode(gt)


def read_ground_truth(path) -> str:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"unreadable ground truth {path}: {exc}") from exc
    return " ".join(text.split())


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    image: str
    gt: str
    sample_id: SampleId
    split: str


class Manifest:
    def __init__(self, records=()):
        self.records = list(records)
        ids = Counter(r.sample_id for r in self.records)
        dup = [str(s) for s, n in ids.items() if n > 1]
        if dup:
            raise CorpusError(f"duplicate sample ids: {', '.join(sorted(dup))}")
        seen: dict[int, str] = {}
        for r in self.records:
            if r.split not in SPLITS:
                raise CorpusError(f"unknown split {r.split!r} for {r.sample_id}")
            if seen.setdefault(r.sample_id.writer, r.split) != r.split:
                raise CorpusError(f"writer {r.sample_id.writer:03d} appears in more than one split")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def split(self, name: str) -> list[Record]:
        return [r for r in self.records if r.split == name]

    def save(self, path) -> None:
        """Write the TSV form; paths below the manifest's directory are stored relative."""
        base = os.path.dirname(os.path.abspath(path))
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(f"{_relative(base, r.image)}\t{_relative(base, r.gt)}\t{r.split}\n")

    @classmethod
    def load(cls, path) -> Manifest:
        base = Path(path).parent
        records = []
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise CorpusError(f"{path}:{n}: expected 3 tab-separated fields")
                image, gt, split = parts
                sid = parse_sample_id(_stem(image))
                records.append(Record(_resolve(base, image), _resolve(base, gt), sid, split))
        return cls(records)


def _stem(path: str) -> str:
    name = os.path.basename(path)
    for suffix in IMAGE_SUFFIXES + (GT_SUFFIX,):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return os.path.splitext(name)[0]


def _relative(base: str, p: str) -> str:
    rel = os.path.relpath(os.path.abspath(p), base)
    return p if rel.startswith("..") else rel


def _resolve(base: Path, p: str) -> str:
    return p if os.path.isabs(p) else str(base / p)


def build_alphabet(manifest: Manifest) -> Alphabet:
    tokens = set()
    for r in manifest:
        tokens.update(read_ground_truth(r.gt).split())
    return Alphabet(sorted(tokens))


def split_by_writer(writers, fractions=DEFAULT_FRACTIONS, seed: int = 0) -> dict[int, str]:
    """Assign each writer to train/val/test by a seeded shuffle.

    Partition sizes come from the cumulative fractions of the writer count,
    rounded to the nearest writer.
    """
    writers = sorted(set(writers))
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise CorpusError("need three non-negative fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise CorpusError(f"fractions sum to {sum(fractions)}, not 1")
    if len(writers) < 3:
        raise CorpusError("too few writers (need at least 3)")
    order = np.random.default_rng(seed).permutation(len(writers))
    n = len(writers)
    cut1 = int(np.floor(fractions[0] * n + 0.5))
    cut2 = int(np.floor((fractions[0] + fractions[1]) * n + 0.5))
    assign = {}
    for rank, idx in enumerate(order):
        assign[writers[idx]] = SPLITS[0] if rank < cut1 else SPLITS[1] if rank < cut2 else SPLITS[2]
    return assign


def find_samples(root) -> list[tuple[str, str, SampleId]]:
    """Pair every ``ddd-dd-dd`` image under ``root`` with its ``.gt.txt``."""
    images, gts = {}, {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            stem = _stem(f)
            if not _ID_RE.fullmatch(stem):
                continue
            full = os.path.join(dirpath, f)
            if f.endswith(GT_SUFFIX):
                gts[stem] = full
            elif f.endswith(IMAGE_SUFFIXES):
                images[stem] = full
    return [(images[s], gts[s], parse_sample_id(s)) for s in sorted(images) if s in gts]


def build_manifest(samples, fractions=DEFAULT_FRACTIONS, seed: int = 0) -> Manifest:
    assign = split_by_writer([sid.writer for _, _, sid in samples], fractions, seed)
    return Manifest(Record(img, gt, sid, assign[sid.writer]) for img, gt, sid in samples)


def manifest_stats(manifest: Manifest) -> dict:
    lines = tokens = 0
    distinct = set()
    writers = {s: set() for s in SPLITS}
    for r in manifest:
        toks = read_ground_truth(r.gt).split()
        lines += 1
        tokens += len(toks)
        distinct.update(toks)
        writers[r.split].add(r.sample_id.writer)
    stats = {"lines": lines, "tokens": tokens, "distinct_tokens": len(distinct)}
    for s in SPLITS:
        stats[f"writers_{s}"] = len(writers[s])
        stats[f"lines_{s}"] = len(manifest.split(s))
    return stats

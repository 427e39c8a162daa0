"""Synthetic script-like pages with exact ground truth.

Glyphs are procedural polylines on a 28-row cell: ascender zone rows 1-7,
body rows 8-19 (baseline at row 19), descender rows 20-26. Every stroke
touches the baseline, so the ink rows of a rendered line form one
contiguous run and its true band is well defined.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import corpus, raster
from .segment import LineBand

CELL_HEIGHT = 28
BODY_TOP = 8
BASELINE = 19
DESCENT = 26
ASCENT = 2
STROKE = 2
WORD_GAP = 5
POSITIONS = ("iso", "i", "m", "f")
LETTER_NAMES = ("bay", "jeem", "dal", "seen", "sad", "tay", "ain", "meem")

# body strokes in (x, y) with x over the cell width and y over the body zone,
# both in [0, 1]; every polyline reaches y == 1 (the baseline)
BODIES = (
    [[(0.5, 0.0), (0.5, 1.0)]],
    [[(0.2, 0.3), (0.8, 0.3), (0.8, 1.0), (0.2, 1.0), (0.2, 0.3)]],
    [[(0.1, 0.0), (0.9, 0.33), (0.1, 0.66), (0.9, 1.0)]],
    [[(0.1, 1.0), (0.9, 0.0)]],
    [[(0.1, 0.0), (0.5, 1.0), (0.9, 0.0)]],
    [[(0.1, 1.0), (0.5, 0.2), (0.9, 1.0)]],
    [[(0.8, 0.0), (0.2, 0.3), (0.2, 1.0), (0.8, 1.0)]],
    [[(0.5, 0.2), (0.5, 1.0)], [(0.1, 0.5), (0.9, 0.5)]],
)

# positional marks in (x, row) with x in [0, 1] and absolute cell rows
MARKS = {
    "iso": [[(0.3, BASELINE), (0.3, DESCENT - 1), (0.7, DESCENT - 1), (0.7, BASELINE)]],
    "i": [[(0.15, ASCENT), (0.15, BASELINE)]],
    "m": [[(0.85, ASCENT + 3), (0.85, BASELINE)]],
    "f": [[(0.9, BASELINE), (0.2, DESCENT)]],
}
# (joins to the left neighbour, joins to the right neighbour); lines run right to left
CONNECTORS = {"iso": (False, False), "i": (True, False), "m": (True, True), "f": (False, True)}


def token_name(glyph_class: int, position: str) -> str:
    name = LETTER_NAMES[glyph_class] if glyph_class < len(LETTER_NAMES) else f"c{glyph_class}"
    return f"{name}_{position}"


def parse_token(token: str) -> tuple[int, str]:
    name, _, position = token.rpartition("_")
    if position not in POSITIONS:
        raise ValueError(f"not a positional token: {token!r}")
    if name in LETTER_NAMES:
        return LETTER_NAMES.index(name), position
    if name.startswith("c") and name[1:].isdigit():
        return int(name[1:]), position
    raise ValueError(f"unknown glyph name in {token!r}")


def glyph_width(glyph_class: int) -> int:
    return 10 + 2 * (glyph_class % 3)


@dataclass(frozen=True)
class SynthConfig:
    glyph_classes: int = 8
    lines_per_page: int = 8
    tokens_per_line: tuple[int, int] = (10, 16)
    skew_degrees: tuple[float, float] = (0.0, 0.0)
    noise: float = 0.0
    stroke_jitter: float = 0.5
    seed: int = 0
    pages_per_writer: int = 1
    line_gap: tuple[int, int] = (6, 12)
    baselines: bool = False
    fractions: tuple[float, float, float] = corpus.DEFAULT_FRACTIONS

    def __post_init__(self):
        if self.glyph_classes < 2:
            raise ValueError("glyph_classes must be >= 2")
        for name in ("tokens_per_line", "skew_degrees", "line_gap"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is empty")
        if self.tokens_per_line[0] < 1 or self.line_gap[0] < 1 or self.lines_per_page < 1:
            raise ValueError("line counts, token counts and gaps must be >= 1")
        if not 0.0 <= self.noise <= 0.2:
            raise ValueError("noise density must lie in [0, 0.2]")
        if self.pages_per_writer < 1:
            raise ValueError("pages_per_writer must be >= 1")

    @property
    def tokens(self) -> list[str]:
        return [token_name(c, p) for c in range(self.glyph_classes) for p in POSITIONS]


# ---------------------------------------------------------------------------
# Drawing
# ---------------------------------------------------------------------------

def _draw_polyline(canvas: np.ndarray, pts) -> None:
    h, w = canvas.shape
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        n = int(np.ceil(3 * max(abs(x1 - x0), abs(y1 - y0)))) + 1
        xs = np.rint(np.linspace(x0, x1, n)).astype(int)
        ys = np.rint(np.linspace(y0, y1, n)).astype(int)
        for dy in range(STROKE):
            for dx in range(STROKE):
                r = np.clip(ys + dy - STROKE // 2, 0, h - 1)
                c = np.clip(xs + dx - STROKE // 2, 0, w - 1)
                canvas[r, c] = 0.0


def render_glyph(glyph_class: int, position: str, jitter: float = 0.0,
                 seed=0) -> tuple[np.ndarray, tuple[bool, bool]]:
    """Gray bitmap (CELL_HEIGHT x width) and its (left, right) connection flags."""
    if glyph_class < 0 or position not in POSITIONS:
        raise ValueError(f"invalid glyph ({glyph_class}, {position!r})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w = glyph_width(glyph_class)
    canvas = np.ones((CELL_HEIGHT, w))
    span = BASELINE - BODY_TOP
    body = BODIES[glyph_class % len(BODIES)]
    # classes past the table reuse a body mirrored left-right
    mirror = (glyph_class // len(BODIES)) % 2 == 1

    def jit(n):
        return rng.uniform(-jitter, jitter, (n, 2)) if jitter > 0 else np.zeros((n, 2))

    for stroke in body:
        j = jit(len(stroke))
        pts = []
        for (x, y), (jx, jy) in zip(stroke, j):
            x = 1.0 - x if mirror else x
            row = BODY_TOP + y * span + (jy if y < 1.0 else 0.0)
            pts.append((x * (w - 1) + jx, row))
        _draw_polyline(canvas, pts)
    for stroke in MARKS[position]:
        j = jit(len(stroke))
        pts = [(x * (w - 1) + jx, row + (jy if row not in (BASELINE,) else 0.0))
               for (x, row), (jx, jy) in zip(stroke, j)]
        _draw_polyline(canvas, pts)
    left, right = CONNECTORS[position]
    if left:
        _draw_polyline(canvas, [(0, BASELINE), (w // 2, BASELINE)])
    if right:
        _draw_polyline(canvas, [(w // 2, BASELINE), (w - 1, BASELINE)])
    # the baseline rows must stay inked so the glyph's rows stay contiguous
    _draw_polyline(canvas, [((w - 1) * 0.4, BASELINE), ((w - 1) * 0.6, BASELINE)])
    return canvas, (left, right)


def sample_tokens(cfg: SynthConfig, rng: np.random.Generator) -> list[tuple[int, str]]:
    """A line's tokens in reading order, grouped into joined words."""
    n = int(rng.integers(cfg.tokens_per_line[0], cfg.tokens_per_line[1] + 1))
    out = []
    while len(out) < n:
        length = min(int(rng.integers(1, 5)), n - len(out))
        classes = rng.integers(0, cfg.glyph_classes, size=length)
        if length == 1:
            out.append((int(classes[0]), "iso"))
        else:
            positions = ["i"] + ["m"] * (length - 2) + ["f"]
            out.extend((int(c), p) for c, p in zip(classes, positions))
    return out


def render_line(tokens, jitter: float, rng: np.random.Generator) -> np.ndarray:
    """Compose glyphs right to left; words are separated by a fixed gap."""
    glyphs = [render_glyph(c, p, jitter, rng)[0] for c, p in tokens]
    width = sum(g.shape[1] for g in glyphs)
    width += WORD_GAP * sum(1 for _, p in tokens[:-1] if p in ("iso", "f"))
    line = np.ones((CELL_HEIGHT, width))
    x = width
    for g, (_, p) in zip(glyphs, tokens):
        line[:, x - g.shape[1]:x] = np.minimum(line[:, x - g.shape[1]:x], g)
        x -= g.shape[1]
        if p in ("iso", "f"):
            x -= WORD_GAP
    return line


def salt_and_pepper(img: np.ndarray, density: float, rng: np.random.Generator) -> np.ndarray:
    if density <= 0:
        return img
    out = img.copy()
    hit = rng.random(img.shape[:2]) < density
    values = (rng.random(img.shape[:2]) < 0.5).astype(np.float64)
    out[hit] = values[hit][:, None] if img.ndim == 3 else values[hit]
    return out


# ---------------------------------------------------------------------------
# Pages and corpora
# ---------------------------------------------------------------------------

@dataclass
class SynthPage:
    image: np.ndarray
    lines: list[list[str]]
    skew: float
    bands: list[LineBand]
    line_images: list[np.ndarray] = field(repr=False, default_factory=list)


def render_page(cfg: SynthConfig, rng: np.random.Generator) -> SynthPage:
    token_lines = [sample_tokens(cfg, rng) for _ in range(cfg.lines_per_page)]
    rendered = [render_line(t, cfg.stroke_jitter, rng) for t in token_lines]
    gaps = [int(rng.integers(cfg.line_gap[0], cfg.line_gap[1] + 1))
            for _ in range(cfg.lines_per_page - 1)]
    skew = float(rng.uniform(*cfg.skew_degrees)) if cfg.skew_degrees[0] != cfg.skew_degrees[1] \
        else float(cfg.skew_degrees[0])

    ink_w = max(r.shape[1] for r in rendered)
    ink_h = sum(r.shape[0] for r in rendered) + sum(gaps)
    reach = np.sin(np.deg2rad(max(abs(a) for a in cfg.skew_degrees)))
    mx = int(np.ceil(0.5 * ink_h * reach)) + 8
    my = int(np.ceil(0.5 * ink_w * reach)) + 8
    height, width = ink_h + 2 * my, ink_w + 2 * mx

    ink = np.ones((height, width))
    guides = np.zeros((height, width), dtype=bool)
    bands = []
    y = my
    for k, line in enumerate(rendered):
        x1 = width - mx
        ink[y:y + CELL_HEIGHT, x1 - line.shape[1]:x1] = line
        rows = np.flatnonzero((line < 0.5).any(axis=1))
        top, bottom = int(rows[0]), int(rows[-1]) + 1
        assert rows.size == bottom - top, "line ink rows must be contiguous"
        n_ink = int((line < 0.5).sum())
        bands.append(LineBand(y + top, bottom - top, n_ink))
        if cfg.baselines:
            guides[y + BASELINE + 1, mx // 2:width - mx // 2] = True
        y += CELL_HEIGHT + (gaps[k] if k < len(gaps) else 0)

    line_images = [salt_and_pepper(ink[b.top:b.bottom].copy(), cfg.noise, rng) for b in bands]
    if cfg.baselines:
        page = np.ones((height, width, 3))
        page[guides] = 0.0
        red = ink < 0.5
        page[red] = (1.0, 0.0, 0.0)
    else:
        page = ink
    page = raster.rotate(page, skew)
    page = salt_and_pepper(page, cfg.noise, rng)
    names = [[token_name(c, p) for c, p in t] for t in token_lines]
    return SynthPage(page, names, skew, bands, line_images)


@dataclass
class SynthCorpus:
    manifest: corpus.Manifest
    alphabet: corpus.Alphabet
    pages: dict[str, SynthPage]
    counts: dict[str, int]


def page_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def generate_corpus(cfg: SynthConfig, pages: int, outdir) -> SynthCorpus:
    """Render ``pages`` pages and write images, ground truth, manifest and truth ledger.

    Layout under ``outdir``: ``pages/<ddd-dd>.pgm`` (``.ppm`` with drawn
    baselines), ``lines/<ddd-dd-nn>.pgm`` (clean per-line crops),
    ``gt/<ddd-dd-nn>.gt.txt``, ``manifest.tsv``, ``alphabet.txt`` and
    ``truth.tsv`` (``pageid<TAB>true_skew<TAB>top:height,...``).
    """
    if pages < 1:
        raise ValueError("need at least one page")
    if cfg.lines_per_page > 99:
        raise ValueError("at most 99 lines per page")
    dirs = {d: os.path.join(outdir, d) for d in ("pages", "lines", "gt")}
    try:
        for d in dirs.values():
            os.makedirs(d, exist_ok=True)
    except OSError as exc:
        raise OSError(f"unwritable outdir {outdir}: {exc.strerror}") from exc

    samples, truths = [], {}
    counts = {"pages": 0, "lines": 0, "tokens": 0}
    for i in range(pages):
        writer, page_no = divmod(i, cfg.pages_per_writer)
        page = render_page(cfg, page_rng(cfg.seed, i))
        pid = f"{writer:03d}-{page_no + 1:02d}"
        ext = ".ppm" if page.image.ndim == 3 else ".pgm"
        raster.save_image(os.path.join(dirs["pages"], pid + ext), page.image)
        for n, (tokens, img) in enumerate(zip(page.lines, page.line_images), 1):
            sid = corpus.SampleId(writer, page_no + 1, n)
            img_path = os.path.join(dirs["lines"], f"{sid}.pgm")
            gt_path = os.path.join(dirs["gt"], f"{sid}{corpus.GT_SUFFIX}")
            raster.save_image(img_path, img)
            with open(gt_path, "w", encoding="utf-8") as fh:
                fh.write(" ".join(tokens) + "\n")
            samples.append((img_path, gt_path, sid))
            counts["lines"] += 1
            counts["tokens"] += len(tokens)
        truths[pid] = page
        counts["pages"] += 1

    if len({sid.writer for _, _, sid in samples}) < 3:
        # too few writers to split by writer: everything goes to training
        manifest = corpus.Manifest(corpus.Record(img, gt, sid, corpus.SPLITS[0])
                                   for img, gt, sid in samples)
    else:
        manifest = corpus.build_manifest(samples, cfg.fractions, cfg.seed)
    manifest.save(os.path.join(outdir, "manifest.tsv"))
    alphabet = corpus.build_alphabet(manifest)
    alphabet.save(os.path.join(outdir, "alphabet.txt"))
    write_truth(os.path.join(outdir, "truth.tsv"), truths)
    return SynthCorpus(manifest, alphabet, truths, counts)


def write_truth(path, pages: dict[str, SynthPage]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pid, page in pages.items():
            bands = ",".join(f"{b.top}:{b.height}" for b in page.bands)
            fh.write(f"{pid}\t{page.skew!r}\t{bands}\n")


def read_truth(path) -> dict[str, tuple[float, list[LineBand]]]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            pid, skew, bands = line.rstrip("\n").split("\t")
            parsed = []
            for item in filter(None, bands.split(",")):
                top, height = item.split(":")
                parsed.append(LineBand(int(top), int(height)))
            out[pid] = (float(skew), parsed)
    return out

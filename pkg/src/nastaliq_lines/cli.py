"""``nastaliq-lines``: one executable for every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 input/data error, 3 internal error.
Results go to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import corpus, ctc, net, preprocess, raster, segment, synth, train

log = logging.getLogger("nastaliq_lines")

OK, USAGE, DATA, INTERNAL = 0, 1, 2, 3
DATA_ERRORS = (OSError, ValueError, UnicodeDecodeError)


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def _range(text: str) -> tuple[float, float]:
    """``a..b`` or a single value."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return float(lo), float(hi)
    v = float(text)
    return v, v


def _int_range(text: str) -> tuple[int, int]:
    lo, hi = _range(text)
    if lo != int(lo) or hi != int(hi):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return int(lo), int(hi)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="file of 'key = value' lines; flags override it")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--reproducible", action="store_true",
                   help="deterministic outputs (wall-clock columns written as 0)")
    g.add_argument("-v", "--verbose", action="store_true")


def _skew_flags(p) -> None:
    p.add_argument("--ink", choices=["red", "black"], help="color-key the ink before cleanup")
    p.add_argument("--tolerance", type=float, default=preprocess.DEFAULT_TOLERANCE)
    p.add_argument("--max-angle", type=float, default=15.0)
    p.add_argument("--coarse", type=float, default=1.0)
    p.add_argument("--fine", type=float, default=0.1)
    p.add_argument("--median-radius", type=int, default=1, help="0 disables the median filter")


def _segment_flags(p) -> None:
    p.add_argument("--tau", type=int, default=0, help="ink count a row must exceed")
    p.add_argument("--min-height", type=int, default=5)


def _train_flags(p) -> None:
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--direction", choices=[segment.RIGHT_TO_LEFT, segment.LEFT_TO_RIGHT],
                   default=segment.RIGHT_TO_LEFT)


REQUIRED = {
    "preprocess": ("input", "output"),
    "segment": ("input", "outdir"),
    "build-manifest": ("root", "out"),
    "stats": ("manifest",),
    "alphabet": ("manifest", "out"),
    "synth": ("outdir",),
    "train": ("manifest", "alphabet", "out"),
    "eval": ("model", "manifest", "alphabet"),
    "sweep": ("manifest", "alphabet", "out"),
    "pipeline": ("pages", "gt", "workdir"),
}


def build_parser() -> Parser:
    parser = Parser(prog="nastaliq-lines",
                    description="Offline handwritten text-line recognition toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=Parser, metavar="COMMAND")

    p = sub.add_parser("preprocess", help="strip color, denoise and de-skew a page")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--report", help="write the skew report (.json or .csv)")
    _skew_flags(p)
    _common(p)

    p = sub.add_parser("segment", help="cut a clean page into line images")
    p.add_argument("--input")
    p.add_argument("--outdir")
    p.add_argument("--page-id", help="ddd-dd page id (default: input file stem)")
    _segment_flags(p)
    _common(p)

    p = sub.add_parser("corpus", help="manifest and alphabet tooling")
    csub = p.add_subparsers(dest="action", parser_class=Parser, metavar="ACTION")
    q = csub.add_parser("build-manifest", help="pair line images with ground truth")
    q.add_argument("--root")
    q.add_argument("--fractions", type=_floats, default=corpus.DEFAULT_FRACTIONS)
    q.add_argument("--out")
    q.add_argument("--alphabet-out")
    _common(q)
    q = csub.add_parser("stats", help="print manifest counts")
    q.add_argument("manifest", nargs="?")
    _common(q)
    q = csub.add_parser("alphabet", help="write the alphabet of a manifest")
    q.add_argument("manifest", nargs="?")
    q.add_argument("--out")
    _common(q)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--pages", type=int, default=10)
    p.add_argument("--lines", type=int, default=8)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--tokens", type=_int_range, default=(10, 16), help="a..b tokens per line")
    p.add_argument("--skew", type=_range, default=(0.0, 0.0), help="a..b degrees")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=0.5)
    p.add_argument("--pages-per-writer", type=int, default=1)
    p.add_argument("--baselines", type=_bool, nargs="?", const=True, default=False)
    p.add_argument("--fractions", type=_floats, default=corpus.DEFAULT_FRACTIONS)
    p.add_argument("--outdir")
    _common(p)

    p = sub.add_parser("train", help="train a BLSTM-CTC recognizer")
    p.add_argument("--manifest")
    p.add_argument("--alphabet")
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--metrics", help="metrics CSV (default: <out>.metrics.csv)")
    _train_flags(p)
    _common(p)

    p = sub.add_parser("eval", help="label error rate of a checkpoint")
    p.add_argument("--model")
    p.add_argument("--manifest")
    p.add_argument("--alphabet")
    p.add_argument("--split", choices=corpus.SPLITS, default="test")
    p.add_argument("--direction", choices=[segment.RIGHT_TO_LEFT, segment.LEFT_TO_RIGHT],
                   default=segment.RIGHT_TO_LEFT)
    p.add_argument("--decodes", help="per-sample TSV output")
    _common(p)

    p = sub.add_parser("sweep", help="train across hidden-layer sizes")
    p.add_argument("--manifest")
    p.add_argument("--alphabet")
    p.add_argument("--sizes", type=_ints, default=[20, 40, 60, 80, 100, 120, 140])
    p.add_argument("--out", help="sweep CSV path")
    _train_flags(p)
    _common(p)

    p = sub.add_parser("pipeline", help="preprocess, segment, build corpus, train and evaluate")
    p.add_argument("--pages", help="directory of ddd-dd page images")
    p.add_argument("--gt", help="directory holding <ddd-dd-dd>.gt.txt files")
    p.add_argument("--workdir")
    p.add_argument("--fractions", type=_floats, default=corpus.DEFAULT_FRACTIONS)
    _skew_flags(p)
    _segment_flags(p)
    _train_flags(p)
    _common(p)
    return parser


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

def read_config(path) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
    return values


def _leaf(parser: argparse.ArgumentParser, argv) -> argparse.ArgumentParser:
    """The (sub)parser that handles ``argv``."""
    current = parser
    for tok in argv:
        choices = None
        for action in current._actions:
            if isinstance(action, argparse._SubParsersAction):
                choices = action.choices
        if choices is None:
            break
        if tok in choices:
            current = choices[tok]
    return current


def _apply_config(leaf: argparse.ArgumentParser, path) -> None:
    by_flag = {}
    for action in leaf._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                by_flag[opt[2:]] = action
    defaults = {}
    for key, raw in read_config(path).items():
        action = by_flag.get(key.replace("_", "-"))
        if action is None or key == "config":
            raise UsageError(f"unknown config key {key!r} in {path}")
        try:
            if isinstance(action, argparse._StoreTrueAction):
                value = _bool(raw)
            elif action.type is not None:
                value = action.type(raw)
            else:
                value = raw
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"bad value for config key {key!r}: {exc}")
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"bad value for config key {key!r}: {raw!r}")
        defaults[action.dest] = value
    leaf.set_defaults(**defaults)


def parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("nastaliq-lines: a command is required (see --help)")
    if args.command == "corpus" and getattr(args, "action", None) is None:
        raise UsageError("nastaliq-lines corpus: an action is required")
    if getattr(args, "config", None):
        leaf = _leaf(parser, argv)
        if not os.path.isfile(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        _apply_config(leaf, args.config)
        args = parser.parse_args(argv)
    name = args.action if args.command == "corpus" else args.command
    missing = [k for k in REQUIRED.get(name, ()) if getattr(args, k.replace("-", "_")) is None]
    if missing:
        raise UsageError(f"nastaliq-lines {name}: missing required {', '.join(missing)}")
    return args


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _skew_cfg(args) -> preprocess.SkewSearchConfig:
    return preprocess.SkewSearchConfig(args.max_angle, args.coarse, args.fine)


def _train_cfg(args) -> train.TrainConfig:
    return train.TrainConfig(hidden_size=args.hidden, learning_rate=args.lr,
                             momentum=args.momentum, max_epochs=args.max_epochs,
                             patience=args.patience, gradient_clip=args.clip, seed=args.seed,
                             reproducible=args.reproducible, batch_size=args.batch_size,
                             threads=args.threads, direction=args.direction)


def cmd_preprocess(args) -> int:
    page = raster.load_raster(args.input)
    clean, report = preprocess.clean_page(page, args.ink, args.median_radius, _skew_cfg(args),
                                          args.tolerance, args.threads)
    raster.save_image(args.output, clean)
    if args.report:
        if args.report.endswith(".json"):
            Path(args.report).write_text(json.dumps(report.__dict__) + "\n", encoding="utf-8")
        else:
            Path(args.report).write_text(report.csv_row() + "\n", encoding="utf-8")
    print(report.csv_row())
    return OK


def _page_id(path, explicit=None) -> str:
    pid = explicit or Path(path).name.split(".")[0]
    corpus.parse_sample_id(pid + "-00")
    return pid


def segment_page(page, outdir, page_id, tau=0, min_height=5) -> list[tuple[str, segment.LineBand]]:
    bands = segment.segment_lines(page, tau, min_height)
    if len(bands) > 99:
        raise ValueError(f"page {page_id}: {len(bands)} lines exceed the two-digit serial")
    os.makedirs(outdir, exist_ok=True)
    out = []
    for n, band in enumerate(bands, 1):
        path = os.path.join(outdir, f"{page_id}-{n:02d}.pgm")
        raster.save_image(path, segment.crop_band(page, band))
        out.append((path, band))
    return out


def cmd_segment(args) -> int:
    page = raster.load_image(args.input)
    pid = _page_id(args.input, args.page_id)
    for path, band in segment_page(page, args.outdir, pid, args.tau, args.min_height):
        print(f"{path}\t{band.top}\t{band.height}\t{band.ink_pixels}")
    return OK


def cmd_corpus(args) -> int:
    if args.action == "build-manifest":
        samples = corpus.find_samples(args.root)
        m = corpus.build_manifest(samples, args.fractions, args.seed)
        m.save(args.out)
        if args.alphabet_out:
            corpus.build_alphabet(m).save(args.alphabet_out)
        log.info("wrote %d records to %s", len(m), args.out)
    elif args.action == "stats":
        for k, v in corpus.manifest_stats(corpus.Manifest.load(args.manifest)).items():
            print(f"{k}\t{v}")
    elif args.action == "alphabet":
        corpus.build_alphabet(corpus.Manifest.load(args.manifest)).save(args.out)
    return OK


def cmd_synth(args) -> int:
    cfg = synth.SynthConfig(glyph_classes=args.classes, lines_per_page=args.lines,
                            tokens_per_line=args.tokens, skew_degrees=args.skew,
                            noise=args.noise, stroke_jitter=args.jitter, seed=args.seed,
                            pages_per_writer=args.pages_per_writer, baselines=args.baselines,
                            fractions=args.fractions)
    result = synth.generate_corpus(cfg, args.pages, args.outdir)
    for k, v in result.counts.items():
        print(f"{k}\t{v}")
    return OK


def _load_splits(manifest_path, alphabet, direction, names=corpus.SPLITS):
    m = corpus.Manifest.load(manifest_path)
    return {s: train.load_samples(m.split(s), alphabet, direction) for s in names}


def cmd_train(args) -> int:
    alphabet = corpus.Alphabet.load(args.alphabet)
    data = _load_splits(args.manifest, alphabet, args.direction, ("train", "val"))
    metrics = args.metrics or args.out + ".metrics.csv"
    result = train.train(data["train"], data["val"], alphabet, _train_cfg(args), metrics)
    net.save_model(result.model, args.out)
    best = result.history[result.best_epoch - 1]
    print(f"best_epoch\t{result.best_epoch}\nval_label_error\t{best.val_label_error!r}\n"
          f"epochs\t{len(result.history)}\nskipped\t{len(result.skipped)}")
    return OK


def cmd_eval(args) -> int:
    alphabet = corpus.Alphabet.load(args.alphabet)
    model = net.load_model(args.model, alphabet.fingerprint())
    data = _load_splits(args.manifest, alphabet, args.direction, (args.split,))
    err, rows = train.evaluate(model, data[args.split], alphabet, args.threads)
    if args.decodes:
        train.write_decodes(args.decodes, rows, alphabet)
    print(f"{args.split}_label_error\t{err!r}")
    return OK


def cmd_sweep(args) -> int:
    alphabet = corpus.Alphabet.load(args.alphabet)
    data = _load_splits(args.manifest, alphabet, args.direction)
    rows = train.sweep_hidden_sizes(data["train"], data["val"], data["test"], alphabet,
                                    args.sizes, _train_cfg(args), args.out)
    print(train.SWEEP_HEADER)
    for r in rows:
        print(r.csv_row())
    return OK


def cmd_pipeline(args) -> int:
    """Preprocess, segment, build the corpus, train and evaluate under ``--workdir``."""
    work = Path(args.workdir)
    clean_dir, line_dir = work / "clean", work / "lines"
    clean_dir.mkdir(parents=True, exist_ok=True)
    line_dir.mkdir(parents=True, exist_ok=True)

    pages = sorted(p for p in Path(args.pages).iterdir()
                   if p.suffix in corpus.IMAGE_SUFFIXES)
    if not pages:
        raise FileNotFoundError(f"no page images in {args.pages}")
    samples = []
    with open(work / "skew.csv", "w", encoding="utf-8") as skew_log:
        skew_log.write("page_id,angle,best_variance,evaluated_angles\n")
        for path in pages:
            pid = _page_id(path)
            clean, report = preprocess.clean_page(raster.load_raster(path), args.ink,
                                                  args.median_radius, _skew_cfg(args),
                                                  args.tolerance, args.threads)
            raster.save_image(clean_dir / f"{pid}.pgm", clean)
            skew_log.write(f"{pid},{report.csv_row()}\n")
            lines = segment_page(clean, line_dir, pid, args.tau, args.min_height)
            gts = [Path(args.gt) / f"{pid}-{n:02d}{corpus.GT_SUFFIX}"
                   for n in range(1, len(lines) + 1)]
            expected = len(list(Path(args.gt).glob(f"{pid}-??{corpus.GT_SUFFIX}")))
            if len(lines) != expected or not all(g.exists() for g in gts):
                log.warning("page %s: %d lines segmented but %d transcriptions; page skipped",
                            pid, len(lines), expected)
                continue
            for (img, _), gt in zip(lines, gts):
                samples.append((img, str(gt), corpus.parse_sample_id(Path(img).stem)))

    manifest = corpus.build_manifest(samples, args.fractions, args.seed)
    manifest.save(work / "manifest.tsv")
    alphabet = corpus.build_alphabet(manifest)
    alphabet.save(work / "alphabet.txt")
    data = {s: train.load_samples(manifest.split(s), alphabet, args.direction)
            for s in corpus.SPLITS}
    result = train.train(data["train"], data["val"], alphabet, _train_cfg(args),
                         work / "metrics.csv")
    net.save_model(result.model, work / "model.ckpt")
    err, rows = train.evaluate(result.model, data["test"], alphabet, args.threads)
    train.write_decodes(work / "decodes.tsv", rows, alphabet)
    (work / "report.txt").write_text(f"test_label_error\t{err!r}\n", encoding="utf-8")
    print(f"test_label_error\t{err!r}")
    return OK


COMMANDS = {
    "preprocess": cmd_preprocess,
    "segment": cmd_segment,
    "corpus": cmd_corpus,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "pipeline": cmd_pipeline,
}


def dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse(argv)
    except SystemExit as exc:  # --help
        return OK if exc.code in (0, None) else USAGE
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return USAGE
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("interrupted; partial outputs kept", file=sys.stderr)
        return DATA
    except (ctc.InfeasibleTargetError, preprocess.BlankImageError, net.CheckpointError,
            train.TrainingError, corpus.CorpusError, raster.ImageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA
    except AssertionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return INTERNAL
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return INTERNAL


def run_pipeline(config_path) -> int:
    return dispatch(["pipeline", "--config", os.fspath(config_path)])


def main() -> None:
    sys.exit(dispatch())

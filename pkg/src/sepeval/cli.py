"""Command-line entry points.

Commands: ``oracle`` (write oracle separations and score them), ``eval``
(score an estimates tree), ``aggregate`` (medians to CSV), ``compare``
(pairwise significance) and ``validate`` (corpus checks).  Flags beat
``SEPEVAL_*`` environment variables, which beat built-in defaults.
Progress and warnings go to stderr; machine-readable output goes to
files.  Exit codes: 0 success, 1 fatal error, 2 usage error.
"""

import argparse
import os
import sys
import warnings
from pathlib import Path

from .audio import save_wav
from .campaign import (
    EvalConfig,
    aggregate,
    evaluate_track,
    run_campaign,
    significance_from_table,
    write_significance_csv,
    write_significance_json,
)
from .dataset import (
    STEM_NAMES,
    load_track,
    scan_corpus,
    validate_mixture,
    write_manifest,
)
from .masks import oracle_separate
from .reports import read_report, write_report
from .spectral import StftConfig

_MODES = {"v4": "v4_global", "v3": "v3_windowed"}


def _env(name: str, fallback=None):
    return os.environ.get(f"SEPEVAL_{name}", fallback)


def _progress(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def _require(args, attr: str, flag: str, parser: argparse.ArgumentParser):
    value = getattr(args, attr)
    if value is None:
        parser.error(f"{flag} is required (or set SEPEVAL_{attr.upper()})")
    return value


def _select_tracks(corpus, split: str, names):
    tracks = corpus.tracks if split == "both" else corpus.split(split)
    if names:
        wanted = set(names)
        tracks = [t for t in tracks if t.name in wanted]
        missing = wanted - {t.name for t in tracks}
        if missing:
            raise FileNotFoundError(f"tracks not found: {sorted(missing)}")
    if not tracks:
        raise FileNotFoundError(f"no tracks selected (split={split})")
    return tracks


def _eval_config(args, sample_rate: int) -> EvalConfig:
    window = max(1, int(round(args.window * sample_rate)))
    hop = None if args.hop is None else max(1, int(round(args.hop * sample_rate)))
    return EvalConfig(
        window=window,
        hop=hop,
        filter_len=args.filter_len,
        mode=_MODES[args.mode],
    )


def _add_eval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--window", type=float, default=float(_env("WINDOW", 1.0)),
        help="evaluation window in seconds (default 1.0)",
    )
    parser.add_argument(
        "--hop", type=float, default=None,
        help="evaluation hop in seconds (default: window)",
    )
    parser.add_argument(
        "--filter-len", type=int, default=int(_env("FILTER_LEN", 512)),
        help="distortion filter length in taps (default 512)",
    )
    parser.add_argument(
        "--mode", choices=sorted(_MODES), default=_env("MODE", "v4"),
        help="v4: track-global filters; v3: filters refit per window",
    )


def cmd_oracle(args, parser) -> int:
    corpus_root = _require(args, "corpus", "--corpus", parser)
    output = Path(_require(args, "output", "--output", parser))
    corpus = scan_corpus(corpus_root)
    tracks = _select_tracks(corpus, args.split, args.tracks)

    label = args.method.upper()
    if label == "IBM":
        label = f"IBM{args.order}"
    elif label == "IRM":
        label = f"IRM{args.alpha:g}"
    stft_config = StftConfig(args.stft_window, args.stft_hop)
    method_dir = output / label
    scores = []
    for track in tracks:
        _progress(f"oracle {label}: {track.split}/{track.name}")
        mixture, stems = load_track(track)
        estimates = oracle_separate(
            mixture,
            list(stems.values()),
            args.method,
            config=stft_config,
            iterations=args.iterations,
            alpha=None if args.alpha == 2.0 else args.alpha,
            order=None if args.order == 1 else args.order,
        )
        track_dir = method_dir / track.name
        track_dir.mkdir(parents=True, exist_ok=True)
        for name, estimate in zip(stems, estimates):
            save_wav(track_dir / f"{name}.wav", estimate, bit_depth=args.bit_depth)
        config = _eval_config(args, track.sample_rate)
        score = evaluate_track(track, track_dir, label, config)
        write_report(score, method_dir / f"{track.name}.json")
        scores.append(score)
    aggregate(scores).write_csv(method_dir / "summary.csv")
    _progress(f"wrote {len(scores)} track reports under {method_dir}")
    return 0


def cmd_eval(args, parser) -> int:
    corpus_root = _require(args, "corpus", "--corpus", parser)
    estimates = Path(_require(args, "estimates", "--estimates", parser))
    output = Path(_require(args, "output", "--output", parser))
    if not estimates.is_dir():
        raise FileNotFoundError(f"estimates directory {estimates} does not exist")
    corpus = scan_corpus(corpus_root)
    tracks = _select_tracks(corpus, args.split, args.tracks)
    method = args.method or estimates.name
    config = _eval_config(args, tracks[0].sample_rate)
    _progress(f"evaluating {method} on {len(tracks)} tracks ({args.mode} mode)")
    scores = run_campaign(
        tracks, estimates, method, config,
        workers=args.workers, output_dir=output,
    )
    aggregate(scores).write_csv(output / "summary.csv")
    _progress(f"wrote {len(scores)} reports and summary.csv under {output}")
    return 0


def _read_report_paths(paths) -> list:
    files = []
    for item in paths:
        path = Path(item)
        if path.is_dir():
            files.extend(sorted(path.glob("*.json")))
        else:
            files.append(path)
    scores = []
    for path in files:
        scores.extend(read_report(path))
    if not scores:
        raise FileNotFoundError(f"no reports found in {list(map(str, paths))}")
    return scores


def cmd_aggregate(args, parser) -> int:
    scores = _read_report_paths(args.reports)
    table = aggregate(scores)
    table.write_csv(args.output)
    _progress(
        f"aggregated {len(scores)} track reports "
        f"({len(table.methods)} methods) into {args.output}"
    )
    return 0


def cmd_compare(args, parser) -> int:
    scores = _read_report_paths(args.reports)
    table = aggregate(scores)
    if len(table.methods) < 2:
        parser.error("compare needs reports from at least two methods")
    matrix = significance_from_table(table, args.target, args.metric)
    write_significance_csv(matrix, args.output)
    if args.json:
        write_significance_json(matrix, args.json)
    for i, a in enumerate(matrix.methods):
        for j in range(i + 1, len(matrix.methods)):
            p = matrix.p_values[i, j]
            verdict = "differ" if p < args.threshold else "indistinguishable"
            _progress(
                f"{a} vs {matrix.methods[j]} on {args.target}/{args.metric}: "
                f"p={p:.4g} ({verdict} at {args.threshold})"
            )
    return 0


def cmd_validate(args, parser) -> int:
    corpus_root = _require(args, "corpus", "--corpus", parser)
    corpus = scan_corpus(corpus_root)
    _progress(
        f"{len(corpus.tracks)} tracks: "
        f"{len(corpus.train)} train, {len(corpus.test)} test"
    )
    if args.manifest:
        write_manifest(corpus, args.manifest)
        _progress(f"manifest written to {args.manifest}")
    failures = 0
    if args.check_mixture:
        for track in corpus.tracks:
            report = validate_mixture(track, args.tolerance)
            status = "ok" if report.passed else "FAIL"
            _progress(
                f"{track.split}/{track.name}: max |mixture - sum(stems)| "
                f"= {report.max_deviation:.3e} [{status}]"
            )
            failures += not report.passed
    if failures:
        _progress(f"{failures} tracks exceed the mixture tolerance")
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sepeval",
        description="Oracle source separation and BSS Eval scoring toolkit.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def common(sub):
        sub.add_argument(
            "--corpus", default=_env("CORPUS"),
            help="corpus root containing train/ and test/",
        )
        sub.add_argument(
            "--split", choices=("train", "test", "both"), default="both",
            help="which split to process (default both)",
        )
        sub.add_argument(
            "--tracks", nargs="*", default=None, metavar="NAME",
            help="restrict to specific track names",
        )

    oracle = subparsers.add_parser(
        "oracle", help="run an oracle method and score its estimates"
    )
    common(oracle)
    oracle.add_argument(
        "--method", required=True,
        choices=("IBM1", "IBM2", "IRM1", "IRM2", "MWF", "IBM", "IRM"),
        help="oracle mask; bare IBM/IRM use --order/--alpha",
    )
    oracle.add_argument("--alpha", type=float, default=2.0,
                        help="IRM magnitude exponent (default 2)")
    oracle.add_argument("--order", type=int, choices=(1, 2), default=1,
                        help="IBM comparison order (default 1)")
    oracle.add_argument("--iterations", type=int, default=2,
                        help="MWF model estimation sweeps (default 2)")
    oracle.add_argument("--stft-window", type=int, default=4096,
                        help="STFT window size in samples (default 4096)")
    oracle.add_argument("--stft-hop", type=int, default=1024,
                        help="STFT hop size in samples (default 1024)")
    oracle.add_argument("--bit-depth", type=int, choices=(16, 24, 32), default=32,
                        help="bit depth of written estimates (default 32)")
    oracle.add_argument("--output", default=_env("OUTPUT"),
                        help="directory for estimates and reports")
    _add_eval_flags(oracle)
    oracle.set_defaults(func=cmd_oracle)

    evaluate = subparsers.add_parser(
        "eval", help="score an estimates tree against the corpus"
    )
    common(evaluate)
    evaluate.add_argument(
        "--estimates", default=_env("ESTIMATES"),
        help="root holding <track>/<target>.wav estimate files",
    )
    evaluate.add_argument("--method", default=None,
                          help="method label for reports (default: dir name)")
    evaluate.add_argument(
        "--workers", type=int,
        default=int(_env("WORKERS", 0)) or None,
        help="parallel track workers (default: cpu count)",
    )
    evaluate.add_argument("--output", default=_env("OUTPUT"),
                          help="directory for reports and summary.csv")
    _add_eval_flags(evaluate)
    evaluate.set_defaults(func=cmd_eval)

    agg = subparsers.add_parser(
        "aggregate", help="aggregate report files into a medians CSV"
    )
    agg.add_argument("--reports", nargs="+", required=True,
                     help="report files or directories of *.json")
    agg.add_argument("--output", required=True, help="CSV output path")
    agg.set_defaults(func=cmd_aggregate)

    compare = subparsers.add_parser(
        "compare", help="pairwise significance between methods"
    )
    compare.add_argument("--reports", nargs="+", required=True,
                         help="report files or directories of *.json")
    compare.add_argument("--target", default="vocals",
                         help="target to compare on (default vocals)")
    compare.add_argument("--metric", default="SDR",
                         choices=("SDR", "ISR", "SIR", "SAR"),
                         help="metric to compare on (default SDR)")
    compare.add_argument("--threshold", type=float, default=0.05,
                         help="significance level for stderr verdicts")
    compare.add_argument("--output", required=True,
                         help="CSV output path for the p-value matrix")
    compare.add_argument("--json", default=None,
                         help="optional JSON output path")
    compare.set_defaults(func=cmd_compare)

    validate = subparsers.add_parser("validate", help="check a corpus tree")
    validate.add_argument("--corpus", default=_env("CORPUS"),
                          help="corpus root containing train/ and test/")
    validate.add_argument("--manifest", default=None,
                          help="write a JSON corpus manifest here")
    validate.add_argument("--check-mixture", action="store_true",
                          help="also verify mixture = sum of stems per track")
    validate.add_argument("--tolerance", type=float, default=1e-2,
                          help="mixture consistency tolerance (default 1e-2)")
    validate.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    with warnings.catch_warnings():
        warnings.simplefilter("always", RuntimeWarning)
        try:
            return args.func(args, parser)
        except BrokenPipeError:
            return 1
        except (OSError, ValueError, RuntimeError, KeyError) as exc:
            print(f"sepeval: error: {exc}", file=sys.stderr)
            return 1


if __name__ == "__main__":
    sys.exit(main())

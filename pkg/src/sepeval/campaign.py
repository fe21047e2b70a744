"""Campaign runner: evaluate estimate sets over a corpus and aggregate.

For each track the four stems are scored jointly (the full stem set spans
the interference subspace) and ``accompaniment`` is scored against the
``[vocals, accompaniment]`` reference pair, with the accompaniment
reference and, when no file is provided, its estimate formed by summing
the non-vocal parts.  Scores aggregate as medians over finite frames per
track, then medians over tracks; pairwise method comparisons use the
rank-based test from :mod:`sepeval.stats`.
"""

import csv
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioSignal, load_wav
from .bsseval import DEFAULT_FILTER_LEN, DEFAULT_WINDOW, bss_eval
from .dataset import STEM_NAMES, TrackRef, derive_accompaniment, load_track
from .reports import TrackScore, write_report
from .stats import SignificanceMatrix, pairwise_significance

__all__ = [
    "TARGET_NAMES",
    "METRIC_NAMES",
    "EvalConfig",
    "AggregateTable",
    "evaluate_track",
    "run_campaign",
    "aggregate",
    "significance_from_table",
    "write_significance_csv",
    "write_significance_json",
]

TARGET_NAMES = STEM_NAMES + ("accompaniment",)
METRIC_NAMES = ("SDR", "ISR", "SIR", "SAR")


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation parameters shared by every track of a campaign run."""

    window: int = DEFAULT_WINDOW
    hop: int | None = None
    filter_len: int = DEFAULT_FILTER_LEN
    mode: str = "v4_global"
    targets: tuple = TARGET_NAMES

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"window must be >= 1 sample, got {self.window}")
        if self.hop is not None and self.hop < 1:
            raise ValueError(f"hop must be >= 1 sample, got {self.hop}")
        unknown = set(self.targets) - set(TARGET_NAMES)
        if unknown:
            raise ValueError(f"unknown targets: {sorted(unknown)}")

    @property
    def effective_hop(self) -> int:
        return self.hop or self.window


def _load_estimate(path: Path, mixture: AudioSignal):
    """Load one estimate WAV, or None when the file is absent."""
    if not path.is_file():
        return None
    signal = load_wav(path)
    if signal.samples.shape != mixture.samples.shape:
        raise ValueError(
            f"estimate {path.name} shape {signal.samples.shape} does not "
            f"match track {mixture.samples.shape}"
        )
    return signal


def evaluate_track(
    track: TrackRef,
    estimates_dir,
    method_name: str,
    config: EvalConfig = EvalConfig(),
) -> TrackScore:
    """Score the estimates for one track against its true stems.

    Estimates are WAVs named after targets inside ``estimates_dir``.
    Missing files drop that target from the result (with a warning);
    shape mismatches are fatal for the track.
    """
    estimates_dir = Path(estimates_dir)
    mixture, stems = load_track(track)
    estimates = {
        name: _load_estimate(estimates_dir / f"{name}.wav", mixture)
        for name in TARGET_NAMES
    }
    if (
        "accompaniment" in config.targets
        and estimates["accompaniment"] is None
        and all(estimates[name] is not None for name in STEM_NAMES if name != "vocals")
    ):
        total = sum(
            estimates[name].samples for name in STEM_NAMES if name != "vocals"
        )
        estimates["accompaniment"] = AudioSignal(total, mixture.sample_rate)

    kwargs = dict(
        filter_len=config.filter_len,
        window=config.window,
        hop=config.effective_hop,
        mode=config.mode,
    )
    target_frames = {}

    stem_targets = [
        name for name in STEM_NAMES
        if name in config.targets and estimates[name] is not None
    ]
    if stem_targets:
        frames = bss_eval(
            [stems[name] for name in STEM_NAMES],
            [estimates[name] for name in stem_targets],
            targets=[STEM_NAMES.index(name) for name in stem_targets],
            **kwargs,
        )
        target_frames.update(zip(stem_targets, frames))

    if "accompaniment" in config.targets and estimates["accompaniment"] is not None:
        frames = bss_eval(
            [stems["vocals"], derive_accompaniment(stems)],
            [estimates["accompaniment"]],
            targets=[1],
            **kwargs,
        )
        target_frames["accompaniment"] = frames[0]

    for name in config.targets:
        if name not in target_frames:
            warnings.warn(
                f"{track.name}: no estimate for target {name!r}",
                RuntimeWarning,
                stacklevel=2,
            )
    return TrackScore(
        track=track.name,
        method=method_name,
        targets=target_frames,
        sample_rate=track.sample_rate,
        window=config.window,
        hop=config.effective_hop,
        mode=config.mode,
        filter_len=config.filter_len,
    )


def run_campaign(
    tracks,
    estimates_root,
    method_name: str,
    config: EvalConfig = EvalConfig(),
    workers: int | None = None,
    output_dir=None,
) -> list:
    """Evaluate many tracks, in parallel, deterministically ordered.

    ``estimates_root/<track name>/<target>.wav`` supplies the estimates.
    Per-track failures are reported and skipped; the run fails only when
    every track fails.  Results are sorted by track name; with
    ``output_dir`` set, one JSON report per track is written there.
    """
    estimates_root = Path(estimates_root)
    workers = workers or os.cpu_count() or 1

    def one(track: TrackRef):
        return evaluate_track(
            track, estimates_root / track.name, method_name, config
        )

    scores = []
    failures = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for track, outcome in zip(tracks, pool.map(_guarded(one), tracks)):
            if isinstance(outcome, TrackScore):
                scores.append(outcome)
            else:
                failures.append((track.name, outcome))
    for name, error in failures:
        warnings.warn(f"track {name} failed: {error}", RuntimeWarning, stacklevel=2)
    if not scores:
        raise RuntimeError(
            f"all {len(failures)} tracks failed; first error: {failures[0][1]}"
        )
    scores.sort(key=lambda s: s.track)
    if output_dir is not None:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        for score in scores:
            write_report(score, output_dir / f"{score.track}.json")
    return scores


def _guarded(fn):
    def wrapper(track):
        try:
            return fn(track)
        except Exception as exc:  # noqa: BLE001 - per-track isolation
            return exc

    return wrapper


def _finite_median(values) -> float | None:
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return None
    return float(np.median(finite))


@dataclass
class AggregateTable:
    """Track-wise and campaign-wide medians per (method, target, metric).

    ``track_medians[(method, target, metric)]`` maps track name to the
    median of that metric over the track's finite frames (None when no
    frame is finite); ``campaign_medians`` is the median of those
    track medians.
    """

    track_medians: dict = field(default_factory=dict)
    campaign_medians: dict = field(default_factory=dict)

    @property
    def methods(self) -> tuple:
        return tuple(sorted({key[0] for key in self.track_medians}))

    def scores_by_method(self, target: str, metric: str) -> dict:
        """Per-method {track: median} maps, for significance testing."""
        out = {}
        for method in self.methods:
            medians = self.track_medians.get((method, target, metric), {})
            defined = {t: v for t, v in medians.items() if v is not None}
            if defined:
                out[method] = defined
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["method", "target", "metric", "track",
                 "track_median", "campaign_median"]
            )
            for key in sorted(self.track_medians):
                method, target, metric = key
                campaign = self.campaign_medians[key]
                for track in sorted(self.track_medians[key]):
                    median = self.track_medians[key][track]
                    writer.writerow([
                        method, target, metric, track,
                        "" if median is None else repr(median),
                        "" if campaign is None else repr(campaign),
                    ])


def aggregate(scores) -> AggregateTable:
    """Median over finite frames per track, then median over tracks."""
    if not scores:
        raise ValueError("nothing to aggregate")
    table = AggregateTable()
    for score in scores:
        for target, frames in score.targets.items():
            for metric in METRIC_NAMES:
                key = (score.method, target, metric)
                per_track = table.track_medians.setdefault(key, {})
                per_track[score.track] = _finite_median(
                    getattr(frame, metric.lower()) for frame in frames
                )
    for key, per_track in table.track_medians.items():
        table.campaign_medians[key] = _finite_median(
            v for v in per_track.values() if v is not None
        )
    return table


def significance_from_table(
    table: AggregateTable, target: str, metric: str
) -> SignificanceMatrix:
    """Pairwise significance of method differences on one target/metric."""
    scores = table.scores_by_method(target, metric)
    if len(scores) < 2:
        raise ValueError(
            f"need scores from at least two methods for {target}/{metric}"
        )
    return pairwise_significance(scores, metric=metric, target=target)


def write_significance_csv(matrix: SignificanceMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["method"] + list(matrix.methods))
        for i, method in enumerate(matrix.methods):
            row = [method]
            for value in matrix.p_values[i]:
                row.append("" if math.isnan(value) else repr(float(value)))
            writer.writerow(row)


def write_significance_json(matrix: SignificanceMatrix, path) -> None:
    cells = [
        [None if math.isnan(v) else float(v) for v in row]
        for row in matrix.p_values
    ]
    payload = {
        "methods": list(matrix.methods),
        "metric": matrix.metric,
        "target": matrix.target,
        "num_tracks": matrix.num_tracks,
        "p_values": cells,
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )

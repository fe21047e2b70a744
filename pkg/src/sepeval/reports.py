"""Framewise score reports as JSON, round-tripping non-finite values.

Schema (version 1): a report object per track holding one frame list per
target.  dB values serialize as numbers when finite and as ``null`` plus
a status field otherwise, so +inf/-inf/undefined survive the round trip
and downstream tools never meet bare Infinity tokens:

    {"schema_version": 1, "track": ..., "method": ...,
     "sample_rate": ..., "window": ..., "hop": ..., "mode": ...,
     "filter_len": ...,
     "targets": {"vocals": {"frames": [
         {"time": 0, "duration": 44100,
          "SDR": 5.1, "SDR_status": "ok",
          "SIR": null, "SIR_status": "inf", ...}]}}}

A file holds either one report object or ``{"schema_version": 1,
"reports": [...]}``.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .bsseval import FrameScores

__all__ = ["SCHEMA_VERSION", "ReportSchemaError", "TrackScore",
           "write_report", "read_report"]

SCHEMA_VERSION = 1

_METRICS = ("SDR", "ISR", "SIR", "SAR")


class ReportSchemaError(ValueError):
    """Raised for malformed report files or unsupported schema versions."""


@dataclass
class TrackScore:
    """All framewise scores of one method on one track, keyed by target."""

    track: str
    method: str
    targets: dict
    sample_rate: int = 44100
    window: int = 44100
    hop: int = 44100
    mode: str = "v4_global"
    filter_len: int = 512


def _encode_value(value: float):
    if math.isnan(value):
        return None, "undefined"
    if math.isinf(value):
        return None, "inf" if value > 0 else "neg_inf"
    return value, "ok"


def _decode_value(number, status, where: str) -> float:
    if status == "ok":
        if not isinstance(number, (int, float)) or number is None:
            raise ReportSchemaError(f"{where}: status 'ok' but no numeric value")
        return float(number)
    if number is not None:
        raise ReportSchemaError(f"{where}: non-finite status with a numeric value")
    try:
        return {"inf": math.inf, "neg_inf": -math.inf, "undefined": math.nan}[status]
    except KeyError:
        raise ReportSchemaError(f"{where}: unknown status {status!r}") from None


def _frame_to_obj(frame: FrameScores) -> dict:
    obj = {"time": frame.window_start, "duration": frame.window_len}
    for name, value in zip(_METRICS, (frame.sdr, frame.isr, frame.sir, frame.sar)):
        number, status = _encode_value(value)
        obj[name] = number
        obj[f"{name}_status"] = status
    return obj


def _frame_from_obj(obj: dict, where: str) -> FrameScores:
    try:
        start = int(obj["time"])
        length = int(obj["duration"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportSchemaError(f"{where}: bad frame timing: {exc}") from None
    values = {}
    for name in _METRICS:
        if name not in obj:
            raise ReportSchemaError(f"{where}: missing {name}")
        status = obj.get(f"{name}_status", "ok")
        values[name.lower()] = _decode_value(obj[name], status, f"{where}.{name}")
    return FrameScores(window_start=start, window_len=length, **values)


def _score_to_obj(score: TrackScore) -> dict:
    return {
        "track": score.track,
        "method": score.method,
        "sample_rate": score.sample_rate,
        "window": score.window,
        "hop": score.hop,
        "mode": score.mode,
        "filter_len": score.filter_len,
        "targets": {
            name: {"frames": [_frame_to_obj(f) for f in frames]}
            for name, frames in score.targets.items()
        },
    }


def _score_from_obj(obj: dict, where: str) -> TrackScore:
    if not isinstance(obj, dict):
        raise ReportSchemaError(f"{where}: report entry is not an object")
    for key in ("track", "method", "targets"):
        if key not in obj:
            raise ReportSchemaError(f"{where}: missing key {key!r}")
    targets = {}
    for name, body in obj["targets"].items():
        if not isinstance(body, dict) or "frames" not in body:
            raise ReportSchemaError(f"{where}: target {name!r} lacks frames")
        targets[name] = [
            _frame_from_obj(frame, f"{where}.{name}[{i}]")
            for i, frame in enumerate(body["frames"])
        ]
    return TrackScore(
        track=obj["track"],
        method=obj["method"],
        targets=targets,
        sample_rate=int(obj.get("sample_rate", 44100)),
        window=int(obj.get("window", 44100)),
        hop=int(obj.get("hop", 44100)),
        mode=obj.get("mode", "v4_global"),
        filter_len=int(obj.get("filter_len", 512)),
    )


def write_report(scores, path) -> None:
    """Serialize one TrackScore or a list of them to a JSON file.

    Output is deterministic (sorted keys, fixed layout): identical scores
    always produce byte-identical files.
    """
    if isinstance(scores, TrackScore):
        payload = {"schema_version": SCHEMA_VERSION, **_score_to_obj(scores)}
    else:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "reports": [_score_to_obj(s) for s in scores],
        }
    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_report(path) -> list:
    """Parse a report file back into a list of TrackScore."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ReportSchemaError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ReportSchemaError(f"{path}: top level must be an object")
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ReportSchemaError(
            f"{path}: schema_version {version!r} not supported "
            f"(expected {SCHEMA_VERSION})"
        )
    if "reports" in payload:
        entries = payload["reports"]
        if not isinstance(entries, list):
            raise ReportSchemaError(f"{path}: 'reports' must be a list")
        return [
            _score_from_obj(entry, f"{path}[{i}]") for i, entry in enumerate(entries)
        ]
    return [_score_from_obj(payload, str(path))]

"""Dataset files: per-recording CSV plus a JSON manifest.

Recording CSV (UTF-8, LF)::

    t_ms,x_deg,y_deg,event
    0.0,100.5,90.0,F
    8.333333333333334,100.52,90.01,F

``event`` is one of F, S, SP, U. Reals are written in the shortest
positional form that round-trips (Python ``repr`` unless that would use an
exponent), never with an exponent.

Manifest (``manifest.json``)::

    {"format_version": 1, "name": ..., "rate_hz": 120,
     "subjects": ["s01", ...],
     "stimuli": [{"id": "img01", "duration_s": 25, "aois": [{"id", "x_min", "x_max", "y_min", "y_max"}]}],
     "recordings": [{"subject_id": "s01", "stimulus_id": "img01", "path": "recordings/s01/img01.csv"}]}

Recording paths are relative to the manifest's directory.
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path

import numpy as np

from .core import EventLabel, GazeSeries
from .dataset import Aoi, Dataset, Stimulus
from .errors import DomainError, InvalidAoi, ManifestError, NonMonotoneTimestamps, ParseError

log = logging.getLogger(__name__)

HEADER = "t_ms,x_deg,y_deg,event"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
_DECIMAL = re.compile(r"^-?(\d+(\.\d*)?|\.\d+)$")


def format_real(v: float) -> str:
    """Shortest round-tripping positional decimal (``0.1875``, ``100.0``)."""
    r = repr(float(v))
    if "e" in r:
        r = np.format_float_positional(float(v), unique=True, trim="0")
    return r


def _parse_real(text: str, line: int, name: str) -> float:
    if not _DECIMAL.match(text):
        raise ParseError(f"{name} {text!r} is not a plain decimal number", line)
    return float(text)


def read_recording(path, sampling_rate_hz: float | None = None, subject_id: str = "", stimulus_id: str = "") -> GazeSeries:
    """Parse and validate one recording file.

    Without ``sampling_rate_hz`` the rate is inferred from the median
    timestamp step.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != HEADER:
        raise ParseError(f"{path}: expected header {HEADER!r}", 1)
    xs, ys, ts, es = [], [], [], []
    prev_t = None
    for lineno, row in enumerate(lines[1:], start=2):
        parts = row.split(",")
        if len(parts) != 4:
            raise ParseError(f"{path}: expected 4 fields, got {len(parts)}", lineno)
        t = _parse_real(parts[0], lineno, "t_ms")
        x = _parse_real(parts[1], lineno, "x_deg")
        y = _parse_real(parts[2], lineno, "y_deg")
        try:
            e = EventLabel.from_code(parts[3])
        except ValueError:
            raise ParseError(f"{path}: unknown event code {parts[3]!r}", lineno) from None
        if not (0.0 <= x < 360.0 and 0.0 <= y < 180.0) or t < 0:
            raise DomainError(f"{path}: sample out of domain (t={t}, x={x}, y={y})", lineno)
        if prev_t is not None and t <= prev_t:
            raise NonMonotoneTimestamps(f"{path}: timestamp {t} does not exceed {prev_t}", lineno)
        prev_t = t
        ts.append(t)
        xs.append(x)
        ys.append(y)
        es.append(int(e))
    if sampling_rate_hz is None:
        sampling_rate_hz = 1000.0 / float(np.median(np.diff(ts))) if len(ts) > 1 else 1.0
    series = GazeSeries(xs, ys, ts, es, sampling_rate_hz, subject_id, stimulus_id)
    gaps = series.irregular_gaps()
    if gaps.size:
        log.warning("%s: %d timestamp gap(s) exceed 3 sample periods (first at line %d)", path, gaps.size, int(gaps[0]) + 2)
    return series


def recording_text(series: GazeSeries) -> str:
    codes = [EventLabel(int(e)).code for e in series.e]
    rows = [HEADER]
    for t, x, y, c in zip(series.t.tolist(), series.x.tolist(), series.y.tolist(), codes):
        rows.append(f"{format_real(t)},{format_real(x)},{format_real(y)},{c}")
    return "\n".join(rows) + "\n"


def write_recording(series: GazeSeries, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(recording_text(series))


# ---------------------------------------------------------------- manifests


def recording_relpath(subject_id: str, stimulus_id: str) -> str:
    return f"recordings/{subject_id}/{stimulus_id}.csv"


def manifest_dict(dataset: Dataset, paths: dict | None = None) -> dict:
    recs = []
    for sub, stim in sorted(dataset.recordings):
        rel = (paths or {}).get((sub, stim), recording_relpath(sub, stim))
        recs.append({"subject_id": sub, "stimulus_id": stim, "path": rel})
    out = {
        "format_version": FORMAT_VERSION,
        "name": dataset.name,
        "rate_hz": dataset.rate_hz,
        "subjects": list(dataset.subjects),
        "stimuli": [
            {"id": s.id, "duration_s": s.duration_s, "aois": [a.to_dict() for a in s.aois]} for s in dataset.stimuli
        ],
        "recordings": recs,
    }
    if dataset.profiles:
        out["profiles"] = {k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in dataset.profiles.items()}
    return out


def write_dataset(dataset: Dataset, directory) -> Path:
    """Write recordings and ``manifest.json`` under ``directory``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for (sub, stim), series in sorted(dataset.recordings.items()):
        write_recording(series, directory / recording_relpath(sub, stim))
    manifest = directory / MANIFEST_NAME
    with open(manifest, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest_dict(dataset), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _manifest_path(path) -> Path:
    path = Path(path)
    return path / MANIFEST_NAME if path.is_dir() else path


def load_dataset(path) -> Dataset:
    """Load and cross-check a manifest (file or containing directory).

    All violations are collected and raised together as one ManifestError.
    """
    mpath = _manifest_path(path)
    try:
        with open(mpath, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ManifestError([f"manifest not found: {mpath}"]) from None
    except json.JSONDecodeError as exc:
        raise ManifestError([f"manifest is not valid JSON: {exc}"]) from None

    errors: list[str] = []
    if doc.get("format_version") != FORMAT_VERSION:
        errors.append(f"unsupported format_version {doc.get('format_version')!r} (expected {FORMAT_VERSION})")
    try:
        rate = float(doc["rate_hz"])
        if not rate > 0:
            raise ValueError
    except (KeyError, TypeError, ValueError):
        errors.append("rate_hz missing or not a positive number")
        rate = 0.0
    subjects = [str(s) for s in doc.get("subjects", [])]
    if len(set(subjects)) != len(subjects):
        errors.append("duplicate subject ids")
    stimuli = []
    for i, st in enumerate(doc.get("stimuli", [])):
        try:
            aois = tuple(Aoi.from_dict(a) for a in st.get("aois", []))
            stimuli.append(Stimulus(str(st["id"]), float(st["duration_s"]), aois))
        except InvalidAoi as exc:
            errors.append(f"stimulus #{i}: {exc}")
        except (KeyError, TypeError, ValueError):
            errors.append(f"stimulus #{i} is malformed")
    stim_ids = [s.id for s in stimuli]
    if len(set(stim_ids)) != len(stim_ids):
        errors.append("duplicate stimulus ids")

    base = mpath.parent
    seen_paths: set[str] = set()
    seen_keys: set[tuple[str, str]] = set()
    todo = []
    for i, rec in enumerate(doc.get("recordings", [])):
        try:
            sub, stim, rel = str(rec["subject_id"]), str(rec["stimulus_id"]), str(rec["path"])
        except (KeyError, TypeError):
            errors.append(f"recording #{i} is malformed")
            continue
        if sub not in subjects:
            errors.append(f"recording {rel}: undeclared subject {sub!r}")
        if stim not in stim_ids:
            errors.append(f"recording {rel}: undeclared stimulus {stim!r}")
        if rel in seen_paths:
            errors.append(f"recording path {rel} listed twice")
        if (sub, stim) in seen_keys:
            errors.append(f"duplicate recording for subject {sub!r}, stimulus {stim!r}")
        seen_paths.add(rel)
        seen_keys.add((sub, stim))
        if not (base / rel).is_file():
            errors.append(f"recording file missing: {rel}")
            continue
        todo.append((sub, stim, rel))

    recordings = {}
    if rate > 0:
        for sub, stim, rel in sorted(todo):
            try:
                recordings[(sub, stim)] = read_recording(base / rel, rate, sub, stim)
            except (ParseError, DomainError, NonMonotoneTimestamps) as exc:
                errors.append(str(exc))
    if errors:
        raise ManifestError(errors)
    return Dataset(
        name=str(doc.get("name", mpath.parent.name)),
        rate_hz=rate,
        subjects=tuple(subjects),
        stimuli=tuple(stimuli),
        recordings=dict(sorted(recordings.items())),
        profiles=doc.get("profiles"),
    )

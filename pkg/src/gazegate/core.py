"""Gaze time-series model, viewing-sphere geometry and event detection.

Coordinates are equirectangular degrees: ``x`` is azimuth in [0, 360) and
``y`` is the polar angle in [0, 180) with ``y = 0`` at the north pole.
Timestamps are milliseconds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import (
    DomainError,
    NonMonotoneTimestamps,
    TooShort,
    UnlabeledSamples,
    ZeroTimeGap,
)


class EventLabel(enum.IntEnum):
    FIXATION = 0
    SACCADE = 1
    SMOOTH_PURSUIT = 2
    UNLABELED = 3

    @property
    def code(self) -> str:
        return _LABEL_CODES[self]

    @classmethod
    def from_code(cls, code: str) -> "EventLabel":
        try:
            return _CODE_LABELS[code]
        except KeyError:
            raise ValueError(f"unknown event code {code!r}") from None


_LABEL_CODES = {
    EventLabel.FIXATION: "F",
    EventLabel.SACCADE: "S",
    EventLabel.SMOOTH_PURSUIT: "SP",
    EventLabel.UNLABELED: "U",
}
_CODE_LABELS = {v: k for k, v in _LABEL_CODES.items()}

FIX = int(EventLabel.FIXATION)
SAC = int(EventLabel.SACCADE)


class GazePoint(NamedTuple):
    x: float
    y: float


class GazeSample(NamedTuple):
    x: float
    y: float
    t: float
    e: EventLabel = EventLabel.UNLABELED


def in_domain(x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (x >= 0.0) & (x < 360.0) & (y >= 0.0) & (y < 180.0)


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GazeSeries:
    """Immutable gaze recording for one subject viewing one stimulus.

    Column arrays are read-only; build a new series to change anything.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    e: np.ndarray
    sampling_rate_hz: float
    subject_id: str = ""
    stimulus_id: str = ""

    def __post_init__(self) -> None:
        x = _frozen(self.x, np.float64)
        y = _frozen(self.y, np.float64)
        t = _frozen(self.t, np.float64)
        e = _frozen(self.e, np.int8)
        if not (len(x) == len(y) == len(t) == len(e)):
            raise ValueError("column lengths differ")
        if not self.sampling_rate_hz > 0:
            raise ValueError("sampling_rate_hz must be positive")
        bad = np.flatnonzero(~in_domain(x, y) | ~(t >= 0) | ~np.isfinite(t))
        if bad.size:
            i = int(bad[0])
            raise DomainError(f"sample {i} out of domain: x={x[i]!r} y={y[i]!r} t={t[i]!r}")
        if np.any((e < 0) | (e > 3)):
            raise ValueError("invalid event label code")
        if len(t) > 1:
            dt = np.diff(t)
            if np.any(dt <= 0):
                i = int(np.flatnonzero(dt <= 0)[0]) + 1
                cls = ZeroTimeGap if dt[i - 1] == 0 else NonMonotoneTimestamps
                raise cls(f"timestamp at sample {i} does not increase ({t[i - 1]!r} -> {t[i]!r})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "sampling_rate_hz", float(self.sampling_rate_hz))

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[GazeSample | tuple],
        sampling_rate_hz: float,
        subject_id: str = "",
        stimulus_id: str = "",
    ) -> "GazeSeries":
        rows = [GazeSample(*s) for s in samples]
        return cls(
            x=[s.x for s in rows],
            y=[s.y for s in rows],
            t=[s.t for s in rows],
            e=[int(s.e) for s in rows],
            sampling_rate_hz=sampling_rate_hz,
            subject_id=subject_id,
            stimulus_id=stimulus_id,
        )

    @property
    def samples(self) -> list[GazeSample]:
        return list(iter(self))

    def __iter__(self) -> Iterator[GazeSample]:
        for x, y, t, e in zip(self.x.tolist(), self.y.tolist(), self.t.tolist(), self.e.tolist()):
            yield GazeSample(x, y, t, EventLabel(e))

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GazeSeries):
            return NotImplemented
        return (
            self.sampling_rate_hz == other.sampling_rate_hz
            and self.subject_id == other.subject_id
            and self.stimulus_id == other.stimulus_id
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.e, other.e)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.sampling_rate_hz

    def replace(self, **changes) -> "GazeSeries":
        fields = dict(
            x=self.x,
            y=self.y,
            t=self.t,
            e=self.e,
            sampling_rate_hz=self.sampling_rate_hz,
            subject_id=self.subject_id,
            stimulus_id=self.stimulus_id,
        )
        fields.update(changes)
        return GazeSeries(**fields)

    def irregular_gaps(self) -> np.ndarray:
        """Indices ``i`` where ``t[i] - t[i-1]`` exceeds three nominal periods."""
        if len(self.t) < 2:
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero(np.diff(self.t) > 3.0 * self.period_ms) + 1


@dataclass(frozen=True)
class IvtParams:
    velocity_threshold: float = 70.0
    min_fixation_ms: float = 100.0
    max_saccade_ms: float = 150.0
    merge_gap_ms: float = 75.0
    # fixations split by a short gap are merged only if they are this close
    merge_max_deg: float = 1.0

    def __post_init__(self) -> None:
        for name in ("velocity_threshold", "min_fixation_ms", "max_saccade_ms", "merge_gap_ms", "merge_max_deg"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True, slots=True)
class GazeEvent:
    kind: EventLabel
    start_ms: float
    end_ms: float
    duration_ms: float
    centroid_x: float
    centroid_y: float
    amplitude_deg: float
    mean_velocity: float
    peak_velocity: float
    sample_range: tuple[int, int]
    velocity_std: float = 0.0
    dispersion_deg: float = 0.0
    direction_deg: float = 0.0
    landing_x: float = 0.0
    landing_y: float = 0.0

    @property
    def n_samples(self) -> int:
        return self.sample_range[1] - self.sample_range[0]


# ---------------------------------------------------------------- geometry


def _unit_vectors(x, y):
    az = np.radians(np.asarray(x, dtype=float))
    pol = np.radians(np.asarray(y, dtype=float))
    s = np.sin(pol)
    return s * np.cos(az), s * np.sin(az), np.cos(pol)


def angular_distance_arrays(x1, y1, x2, y2) -> np.ndarray:
    """Great-circle distance in degrees, elementwise."""
    ax, ay, az = _unit_vectors(x1, y1)
    bx, by, bz = _unit_vectors(x2, y2)
    cx = ay * bz - az * by
    cy = az * bx - ax * bz
    cz = ax * by - ay * bx
    cross = np.sqrt(cx * cx + cy * cy + cz * cz)
    dot = ax * bx + ay * by + az * bz
    return np.degrees(np.arctan2(cross, dot))


def angular_distance(a, b) -> float:
    """Great-circle distance in degrees between two ``(x, y)`` gaze points."""
    return float(angular_distance_arrays(a[0], a[1], b[0], b[1]))


def wrap_delta(dx):
    """Map a horizontal difference into [-180, 180)."""
    return (np.asarray(dx, dtype=float) + 180.0) % 360.0 - 180.0


def _velocity(x: np.ndarray, y: np.ndarray, t: np.ndarray) -> np.ndarray:
    v = np.zeros(len(t), dtype=float)
    if len(t) < 2:
        return v
    dt = np.diff(t)
    if np.any(dt == 0):
        i = int(np.flatnonzero(dt == 0)[0]) + 1
        raise ZeroTimeGap(f"samples {i - 1} and {i} share timestamp {t[i]!r}")
    v[1:] = angular_distance_arrays(x[:-1], y[:-1], x[1:], y[1:]) / (dt / 1000.0)
    return v


def sample_velocity(series: GazeSeries) -> np.ndarray:
    """Angular velocity in deg/s per sample; the first entry is 0."""
    if len(series) < 1:
        raise TooShort("velocity needs at least one sample")
    return _velocity(series.x, series.y, series.t)


# ---------------------------------------------------------------- runs


def _runs(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run-length encode ``labels`` into (starts, stops, values)."""
    n = len(labels)
    if n == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z, z
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate(([0], change))
    stops = np.concatenate((change, [n]))
    return starts, stops, np.asarray(labels)[starts]


def _run_spans(t: np.ndarray, starts: np.ndarray, stops: np.ndarray, period: float):
    """Start/end times of runs.

    A run ends where the next one starts; the final run ends at the last
    timestamp (one nominal period later if it is a single sample).
    """
    begin = t[starts]
    end = np.empty_like(begin)
    if len(starts) == 0:
        return begin, end
    end[:-1] = t[starts[1:]]
    last_start = starts[-1]
    end[-1] = t[-1] if stops[-1] - last_start > 1 else t[-1] + period
    return begin, end


# ---------------------------------------------------------------- I-VT


def detect_events_ivt(series: GazeSeries, params: IvtParams | None = None) -> GazeSeries:
    """Relabel every sample as fixation or saccade by velocity threshold.

    Post-processing, in order: saccade runs longer than ``max_saccade_ms``
    become fixation; fixation runs shorter than ``min_fixation_ms`` take the
    label of the surrounding saccade; a saccade gap shorter than
    ``merge_gap_ms`` whose flanking fixations lie within ``merge_max_deg``
    is absorbed into one fixation.
    """
    params = params or IvtParams()
    if len(series) < 2:
        raise TooShort("I-VT needs at least two samples")
    t = series.t
    period = series.period_ms
    v = _velocity(series.x, series.y, t)
    lab = np.where(v > params.velocity_threshold, SAC, FIX).astype(np.int8)

    starts, stops, vals = _runs(lab)
    begin, end = _run_spans(t, starts, stops, period)
    for s, e, val, d in zip(starts, stops, vals, end - begin):
        if val == SAC and d > params.max_saccade_ms:
            lab[s:e] = FIX

    starts, stops, vals = _runs(lab)
    if len(starts) > 1:
        begin, end = _run_spans(t, starts, stops, period)
        for s, e, val, d in zip(starts, stops, vals, end - begin):
            if val == FIX and d < params.min_fixation_ms:
                lab[s:e] = SAC

    starts, stops, vals = _runs(lab)
    if len(starts) > 2:
        begin, end = _run_spans(t, starts, stops, period)
        inner = np.arange(1, len(starts) - 1)
        short = inner[(vals[inner] == SAC) & (end[inner] - begin[inner] < params.merge_gap_ms)]
        if short.size:
            a, b = stops[short - 1] - 1, stops[short]
            x, y = series.x, series.y
            near = angular_distance_arrays(x[a], y[a], x[b], y[b]) < params.merge_max_deg
            for i in short[near]:
                lab[starts[i] : stops[i]] = FIX

    return series.replace(e=lab)


# ---------------------------------------------------------------- segmentation


def event_table(series: GazeSeries, velocity: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Column-wise statistics of every maximal label run (one row per event)."""
    n = len(series)
    if n == 0:
        raise UnlabeledSamples("empty series has no events")
    e = series.e
    if np.any(e == int(EventLabel.UNLABELED)):
        i = int(np.flatnonzero(e == int(EventLabel.UNLABELED))[0])
        raise UnlabeledSamples(f"sample {i} is unlabeled")
    x, y, t = series.x, series.y, series.t
    period = series.period_ms
    v = _velocity(x, y, t) if velocity is None else velocity
    starts, stops, kinds = _runs(e)
    begin, end = _run_spans(t, starts, stops, period)
    counts = (stops - starts).astype(float)
    owner = np.repeat(np.arange(len(starts)), stops - starts)

    w = np.empty(n, dtype=float)
    w[:-1] = np.diff(t)
    w[-1] = period
    wsum = np.add.reduceat(w, starts)

    x0 = x[starts]
    dx = wrap_delta(x - x0[owner])
    cx = (x0 + np.add.reduceat(w * dx, starts) / wsum) % 360.0
    cx = np.where(cx >= 360.0, 0.0, cx)
    cy = np.add.reduceat(w * y, starts) / wsum

    last = stops - 1
    amp = angular_distance_arrays(x[starts], y[starts], x[last], y[last])
    vmean = np.add.reduceat(v, starts) / counts
    vpeak = np.maximum.reduceat(v, starts)
    vstd = np.sqrt(np.add.reduceat((v - vmean[owner]) ** 2, starts) / counts)
    disp = np.add.reduceat(angular_distance_arrays(x, y, cx[owner], cy[owner]), starts) / counts

    ddx = wrap_delta(x[last] - x[starts]) * np.sin(np.radians(0.5 * (y[starts] + y[last])))
    ddy = -(y[last] - y[starts])
    direction = np.degrees(np.arctan2(ddy, ddx)) % 360.0
    direction = np.where(direction >= 360.0, 0.0, direction)

    return {
        "kind": kinds.astype(np.int8),
        "start": starts,
        "stop": stops,
        "start_ms": begin,
        "end_ms": end,
        "duration_ms": end - begin,
        "centroid_x": cx,
        "centroid_y": cy,
        "amplitude_deg": amp,
        "mean_velocity": vmean,
        "peak_velocity": vpeak,
        "velocity_std": vstd,
        "dispersion_deg": disp,
        "direction_deg": direction,
        "landing_x": x[last],
        "landing_y": y[last],
        "n_samples": counts,
    }


def segment_events(series: GazeSeries) -> list[GazeEvent]:
    """Split a fully labeled series into one event per maximal label run."""
    if len(series) == 0:
        return []
    tab = event_table(series)
    cols = [
        tab[k].tolist()
        for k in (
            "kind", "start", "stop", "start_ms", "end_ms", "duration_ms", "centroid_x",
            "centroid_y", "amplitude_deg", "mean_velocity", "peak_velocity", "velocity_std",
            "dispersion_deg", "direction_deg", "landing_x", "landing_y",
        )
    ]
    events = []
    for k, s, st, b, en, d, cx, cy, amp, vm, vp, vs, disp, dirn, lx, ly in zip(*cols):
        events.append(
            GazeEvent(
                kind=EventLabel(k),
                start_ms=b,
                end_ms=en,
                duration_ms=d,
                centroid_x=cx,
                centroid_y=cy,
                amplitude_deg=amp,
                mean_velocity=vm,
                peak_velocity=max(vp, vm),
                sample_range=(s, st),
                velocity_std=vs,
                dispersion_deg=disp,
                direction_deg=dirn,
                landing_x=lx,
                landing_y=ly,
            )
        )
    return events


def labels_from_events(events: Sequence[GazeEvent], n_samples: int) -> np.ndarray:
    """Expand events back into per-sample label codes."""
    out = np.full(n_samples, int(EventLabel.UNLABELED), dtype=np.int8)
    for ev in events:
        out[ev.sample_range[0] : ev.sample_range[1]] = int(ev.kind)
    return out


def relabel(series: GazeSeries, params: IvtParams | None = None) -> GazeSeries:
    """I-VT labels for series long enough to run it; trivial fixation otherwise."""
    if len(series) >= 2:
        return detect_events_ivt(series, params)
    return series.replace(e=np.full(len(series), FIX, dtype=np.int8))


def point_in_box(x, y, x_min, x_max, y_min, y_max):
    """Containment with inclusive min edges and exclusive max edges."""
    return (x >= x_min) & (x < x_max) & (y >= y_min) & (y < y_max)


__all__ = [
    "EventLabel",
    "GazePoint",
    "GazeSample",
    "GazeSeries",
    "GazeEvent",
    "IvtParams",
    "angular_distance",
    "angular_distance_arrays",
    "sample_velocity",
    "detect_events_ivt",
    "segment_events",
    "event_table",
    "labels_from_events",
    "relabel",
    "wrap_delta",
    "in_domain",
    "point_in_box",
]

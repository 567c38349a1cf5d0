"""In-process Gatekeeper: summary queries, event notices and privatized streams.

A :class:`Session` replays one recorded series against a virtual clock.
Queries only see events completed at or before the clock, and nothing in
this module hands out raw samples: fixations are reported by centroid,
saccades and pursuits by landing point, tiles by index, and streamed
samples only after a non-identity privacy mechanism.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from ..core import EventLabel, GazeEvent, GazeSample, GazeSeries, detect_events_ivt, segment_events
from ..dataset import Aoi
from ..errors import InvalidMechanism, NoData, PolicyDenied, UnknownFixation
from ..privacy import MechanismConfig, OnlineMechanism


@dataclass(frozen=True)
class Tiling:
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if int(self.rows) != self.rows or int(self.cols) != self.cols or self.rows < 1 or self.cols < 1:
            raise ValueError("tiling rows and cols must be positive integers")

    def tile_of(self, x: float, y: float) -> tuple[int, int]:
        row = min(int(math.floor(y / (180.0 / self.rows))), self.rows - 1)
        col = min(int(math.floor(x / (360.0 / self.cols))), self.cols - 1)
        return row, col


def exposes_raw(cfg: MechanismConfig) -> bool:
    """True for configurations that pass samples through unchanged."""
    return (
        cfg.kind == "identity"
        or (cfg.kind == "gaussian" and cfg.sigma == 0)
        or (cfg.kind == "temporal" and cfg.k == 1)
    )


@dataclass(frozen=True)
class SessionPolicy:
    """Capabilities granted to one session.

    ``sample_stream`` is either None (disabled) or a privacy mechanism; the
    identity mechanism is rejected so raw samples can never be streamed.
    """

    allow_aoi_queries: bool = True
    allow_event_stream: bool = True
    saccade_phase_events: bool = False
    allow_tile_query: bool = False
    tiling: Tiling | None = None
    sample_stream: MechanismConfig | None = None

    def __post_init__(self) -> None:
        if self.sample_stream is not None and exposes_raw(self.sample_stream):
            raise PolicyDenied(f"mechanism {self.sample_stream} would stream raw samples")
        if self.allow_tile_query and self.tiling is None:
            raise ValueError("tile queries need a tiling")

    def to_dict(self) -> dict:
        return {
            "allow_aoi_queries": self.allow_aoi_queries,
            "allow_event_stream": self.allow_event_stream,
            "saccade_phase_events": self.saccade_phase_events,
            "allow_tile_query": self.allow_tile_query,
            "tiling": None if self.tiling is None else {"rows": self.tiling.rows, "cols": self.tiling.cols},
            "sample_stream": None if self.sample_stream is None else str(self.sample_stream),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionPolicy":
        tiling = d.get("tiling")
        stream = d.get("sample_stream")
        return cls(
            allow_aoi_queries=bool(d.get("allow_aoi_queries", True)),
            allow_event_stream=bool(d.get("allow_event_stream", True)),
            saccade_phase_events=bool(d.get("saccade_phase_events", False)),
            allow_tile_query=bool(d.get("allow_tile_query", False)),
            tiling=None if tiling is None else Tiling(int(tiling["rows"]), int(tiling["cols"])),
            sample_stream=None if stream is None else MechanismConfig.parse(str(stream)),
        )

    def narrow(self, request: dict | None) -> "SessionPolicy":
        """Policy with the client's requested restrictions applied.

        Any request that would grant more than this policy raises PolicyDenied.
        """
        if not request:
            return self
        known = {"allow_aoi_queries", "allow_event_stream", "saccade_phase_events", "allow_tile_query", "tiling", "sample_stream"}
        unknown = set(request) - known
        if unknown:
            raise ValueError(f"unknown policy fields: {sorted(unknown)}")
        changes = {}
        for name in ("allow_aoi_queries", "allow_event_stream", "saccade_phase_events", "allow_tile_query"):
            if name in request:
                want = request[name]
                if not isinstance(want, bool):
                    raise ValueError(f"{name} must be a boolean")
                if want and not getattr(self, name):
                    raise PolicyDenied(f"server policy does not allow {name}")
                changes[name] = want
        if request.get("tiling") is not None:
            t = request["tiling"]
            want = Tiling(int(t["rows"]), int(t["cols"]))
            have = self.tiling
            if have is None or have.rows % want.rows or have.cols % want.cols:
                raise PolicyDenied("requested tiling is not a coarsening of the server tiling")
            changes["tiling"] = want
        if "sample_stream" in request:
            want = request["sample_stream"]
            if want is None:
                changes["sample_stream"] = None
            else:
                try:
                    cfg = MechanismConfig.parse(str(want))
                except (InvalidMechanism, ValueError) as exc:
                    raise PolicyDenied(f"invalid sample stream mechanism: {exc}") from None
                if self.sample_stream is None or cfg != self.sample_stream:
                    raise PolicyDenied("sample stream mechanism can only be kept or disabled")
                changes["sample_stream"] = cfg
        return replace(self, **changes)


class NoticePhase(str, enum.Enum):
    COMPLETED = "Completed"
    SACCADE_STARTED = "SaccadeStarted"
    SACCADE_ENDED = "SaccadeEnded"


KIND_NAMES = {
    EventLabel.FIXATION: "Fixation",
    EventLabel.SACCADE: "Saccade",
    EventLabel.SMOOTH_PURSUIT: "SmoothPursuit",
}


@dataclass(frozen=True)
class GazeEventNotice:
    event_id: int
    kind: str
    phase: str
    t: float
    x: float | None
    y: float | None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FixationSummary:
    event_id: int
    centroid_x: float
    centroid_y: float
    start_ms: float
    duration_ms: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SaccadeSummary:
    event_id: int
    landing_x: float
    landing_y: float
    start_ms: float
    duration_ms: float
    amplitude_deg: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StreamedSample:
    x: float
    y: float
    t: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EventSubscription:
    """Collects notices; an optional listener is called for each one as it is delivered."""

    saccade_phases: bool
    listener: Callable[[GazeEventNotice], None] | None = None
    delivered: list[GazeEventNotice] = field(default_factory=list)

    def deliver(self, notice: GazeEventNotice) -> None:
        self.delivered.append(notice)
        if self.listener is not None:
            self.listener(notice)

    def drain(self) -> list[GazeEventNotice]:
        out, self.delivered = self.delivered, []
        return out


@dataclass
class SampleStream:
    mechanism: MechanismConfig
    online: OnlineMechanism
    next_index: int
    delivered: list[StreamedSample] = field(default_factory=list)

    def drain(self) -> list[StreamedSample]:
        out, self.delivered = self.delivered, []
        return out


def prepare_source(series: GazeSeries) -> tuple[GazeSeries, list[GazeEvent]]:
    """Label (if needed) and segment a source series."""
    if len(series) >= 2 and np.any(series.e == int(EventLabel.UNLABELED)):
        series = detect_events_ivt(series)
    return series, segment_events(series)


class Session:
    def __init__(
        self,
        source: GazeSeries,
        policy: SessionPolicy | None = None,
        session_id: str = "session",
        events: list[GazeEvent] | None = None,
    ) -> None:
        if events is None:
            source, events = prepare_source(source)
        self.source = source
        self.events = events
        self.policy = policy or SessionPolicy()
        self.session_id = session_id
        self.clock = 0.0
        self._disclosed: set[int] = set()
        self._subscription: EventSubscription | None = None
        self._stream: SampleStream | None = None
        self._pace_origin: float | None = None

    # -------------------------------------------------------------- clock

    def advance_clock(self, by: float | None = None, to: float | None = None) -> list:
        """Move the virtual clock forward and deliver due notices and samples.

        Returns the pushes produced, in time order, as ("event", notice) or
        ("sample", sample) tuples.
        """
        if (by is None) == (to is None):
            raise ValueError("give exactly one of 'by' or 'to'")
        new = self.clock + float(by) if by is not None else float(to)
        if not math.isfinite(new) or new < self.clock:
            raise ValueError(f"clock may not move backwards ({self.clock} -> {new})")
        old, self.clock = self.clock, new
        pushes = []
        if self._subscription is not None:
            for n in self._notices_between(old, new, self._subscription.saccade_phases):
                self._subscription.deliver(n)
                pushes.append((n.t, 0, "event", n))
        if self._stream is not None:
            for s in self._samples_until(new):
                self._stream.delivered.append(s)
                pushes.append((s.t, 1, "sample", s))
        pushes.sort(key=lambda p: (p[0], p[1]))
        return [(kind, item) for _, _, kind, item in pushes]

    def pace(self, speed: float = 1.0, now: float | None = None) -> list:
        """Real-time mode: advance the clock to wall-clock time elapsed since the first call."""
        now = time.monotonic() if now is None else now
        if self._pace_origin is None:
            self._pace_origin = now - self.clock / (1000.0 * speed)
        target = (now - self._pace_origin) * 1000.0 * speed
        return self.advance_clock(to=max(target, self.clock))

    # -------------------------------------------------------------- queries

    def _completed(self, kind: EventLabel) -> Iterable[tuple[int, GazeEvent]]:
        for i, ev in enumerate(self.events):
            if ev.kind == kind and ev.end_ms <= self.clock:
                yield i, ev

    def get_fixations(self, aoi: Aoi) -> list[FixationSummary]:
        if not self.policy.allow_aoi_queries:
            raise PolicyDenied("AOI queries are not allowed for this session")
        out = []
        for i, ev in self._completed(EventLabel.FIXATION):
            if aoi.contains(ev.centroid_x, ev.centroid_y):
                self._disclosed.add(i)
                out.append(FixationSummary(i, ev.centroid_x, ev.centroid_y, ev.start_ms, ev.duration_ms))
        return out

    def get_dwell_time(self, fixation_id: int) -> float:
        if not self.policy.allow_aoi_queries:
            raise PolicyDenied("AOI queries are not allowed for this session")
        if fixation_id not in self._disclosed:
            raise UnknownFixation(f"fixation {fixation_id!r} was not returned by get_fixations in this session")
        return self.events[fixation_id].duration_ms

    def get_saccades(self, aoi: Aoi) -> list[SaccadeSummary]:
        if not self.policy.allow_aoi_queries:
            raise PolicyDenied("AOI queries are not allowed for this session")
        out = []
        for i, ev in self._completed(EventLabel.SACCADE):
            if aoi.contains(ev.landing_x, ev.landing_y):
                out.append(SaccadeSummary(i, ev.landing_x, ev.landing_y, ev.start_ms, ev.duration_ms, ev.amplitude_deg))
        return out

    def get_current_tile(self) -> tuple[int, int]:
        if not self.policy.allow_tile_query or self.policy.tiling is None:
            raise PolicyDenied("tile queries are not allowed for this session")
        i = int(np.searchsorted(self.source.t, self.clock, side="right")) - 1
        if i < 0:
            raise NoData("no gaze sample at or before the session clock")
        return self.policy.tiling.tile_of(float(self.source.x[i]), float(self.source.y[i]))

    # -------------------------------------------------------------- streams

    def subscribe_events(self, listener: Callable[[GazeEventNotice], None] | None = None) -> EventSubscription:
        """Receive a notice for each event that completes after this call.

        With ``saccade_phase_events`` in the policy, saccades produce a
        SaccadeStarted notice at onset and a SaccadeEnded notice instead of
        Completed.
        """
        if not self.policy.allow_event_stream:
            raise PolicyDenied("event stream is not allowed for this session")
        self._subscription = EventSubscription(self.policy.saccade_phase_events, listener)
        return self._subscription

    def stream_samples(self) -> SampleStream:
        """Start streaming privatized samples from the clock onward.

        A sample stamped exactly at the current clock is still pending and is
        delivered by the next advance.
        """
        mech = self.policy.sample_stream
        if mech is None:
            raise PolicyDenied("sample streaming is not allowed for this session")
        online = OnlineMechanism(mech)
        start = int(np.searchsorted(self.source.t, self.clock, side="left"))
        # earlier samples still pass through the mechanism so its state matches batch application
        for s in self._raw(0, start):
            online.push(s)
        self._stream = SampleStream(mech, online, start)
        return self._stream

    def _raw(self, lo: int, hi: int) -> Iterable[GazeSample]:
        src = self.source
        for i in range(lo, hi):
            yield GazeSample(float(src.x[i]), float(src.y[i]), float(src.t[i]), EventLabel(int(src.e[i])))

    def _samples_until(self, clock: float) -> list[StreamedSample]:
        st = self._stream
        hi = int(np.searchsorted(self.source.t, clock, side="right"))
        out = []
        for s in self._raw(st.next_index, hi):
            got = st.online.push(s)
            if got is not None:
                out.append(StreamedSample(got.x, got.y, got.t))
        st.next_index = max(st.next_index, hi)
        return out

    def _notices_between(self, old: float, new: float, phases: bool) -> list[GazeEventNotice]:
        out = []
        for i, ev in enumerate(self.events):
            name = KIND_NAMES.get(ev.kind)
            if name is None:
                continue
            if ev.kind == EventLabel.FIXATION:
                x, y = ev.centroid_x, ev.centroid_y
            else:
                x, y = ev.landing_x, ev.landing_y
            if phases and ev.kind == EventLabel.SACCADE:
                if old < ev.start_ms <= new:
                    out.append((ev.start_ms, i, 0, GazeEventNotice(i, name, NoticePhase.SACCADE_STARTED.value, ev.start_ms, None, None)))
                if old < ev.end_ms <= new:
                    out.append((ev.end_ms, i, 1, GazeEventNotice(i, name, NoticePhase.SACCADE_ENDED.value, ev.end_ms, x, y)))
            elif old < ev.end_ms <= new:
                out.append((ev.end_ms, i, 1, GazeEventNotice(i, name, NoticePhase.COMPLETED.value, ev.end_ms, x, y)))
        out.sort(key=lambda n: n[:3])
        return [n[3] for n in out]

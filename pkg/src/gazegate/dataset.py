"""In-memory dataset: stimuli with their AOIs and one series per (subject, stimulus)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from .core import GazeSeries, point_in_box
from .errors import InvalidAoi


@dataclass(frozen=True)
class Aoi:
    """Axis-aligned box in equirectangular degrees (no horizontal wrap-around)."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    id: str = ""

    def __post_init__(self) -> None:
        if not (0.0 <= self.x_min < self.x_max <= 360.0):
            raise InvalidAoi(f"AOI {self.id!r}: need 0 <= x_min < x_max <= 360, got [{self.x_min}, {self.x_max})")
        if not (0.0 <= self.y_min < self.y_max <= 180.0):
            raise InvalidAoi(f"AOI {self.id!r}: need 0 <= y_min < y_max <= 180, got [{self.y_min}, {self.y_max})")

    def contains(self, x, y):
        return point_in_box(x, y, self.x_min, self.x_max, self.y_min, self.y_max)

    def to_dict(self) -> dict:
        return {"id": self.id, "x_min": self.x_min, "x_max": self.x_max, "y_min": self.y_min, "y_max": self.y_max}

    @classmethod
    def from_dict(cls, d: dict) -> "Aoi":
        try:
            return cls(float(d["x_min"]), float(d["x_max"]), float(d["y_min"]), float(d["y_max"]), str(d.get("id", "")))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidAoi(f"malformed AOI {d!r}") from exc


@dataclass(frozen=True)
class Stimulus:
    id: str
    duration_s: float
    aois: tuple[Aoi, ...] = ()


@dataclass
class Dataset:
    name: str
    rate_hz: float
    subjects: tuple[str, ...]
    stimuli: tuple[Stimulus, ...]
    recordings: dict[tuple[str, str], GazeSeries] = field(default_factory=dict)
    profiles: dict | None = None

    @property
    def stimulus_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.stimuli)

    def stimulus(self, stimulus_id: str) -> Stimulus:
        for s in self.stimuli:
            if s.id == stimulus_id:
                return s
        raise KeyError(stimulus_id)

    def aois(self) -> dict[str, tuple[Aoi, ...]]:
        return {s.id: s.aois for s in self.stimuli}

    def series(self, subject_id: str, stimulus_id: str) -> GazeSeries:
        return self.recordings[(subject_id, stimulus_id)]

    def __iter__(self) -> Iterator[GazeSeries]:
        for key in sorted(self.recordings):
            yield self.recordings[key]

    def map_series(self, fn) -> "Dataset":
        """New dataset with ``fn`` applied to every recording."""
        recs = {key: fn(s) for key, s in self.recordings.items()}
        return Dataset(self.name, self.rate_hz, self.subjects, self.stimuli, recs, self.profiles)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.name == other.name
            and self.rate_hz == other.rate_hz
            and self.subjects == other.subjects
            and self.stimuli == other.stimuli
            and self.recordings.keys() == other.recordings.keys()
            and all(self.recordings[k] == other.recordings[k] for k in self.recordings)
        )

"""Seeded synthetic gaze datasets with per-subject oculomotor signatures.

Each recording alternates fixations and saccades. Fixations hold a landing
point with Ornstein-Uhlenbeck drift; saccades follow a half-sine velocity
profile whose peak obeys the main sequence
``v_peak = vmax * (1 - exp(-amplitude / c))``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.signal import lfilter

from .core import EventLabel, GazeSeries
from .dataset import Aoi, Dataset, Stimulus
from .errors import InvalidConfig

FIX = int(EventLabel.FIXATION)
SAC = int(EventLabel.SACCADE)
PUR = int(EventLabel.SMOOTH_PURSUIT)

Y_BAND = (40.0, 140.0)
DRIFT_TAU_MS = 80.0
AOI_ATTRACTION = 0.015
MIN_FIXATION_MS = 120.0
MIN_AMPLITUDE = 2.0
PURSUIT_PROB = 0.15
PURSUIT_SPEED = 15.0  # deg/s
PRESETS = ("distinct", "overlapping")


@dataclass(frozen=True)
class SubjectProfile:
    fixation_duration_mean: float
    fixation_duration_std: float
    saccade_amplitude_mean: float
    saccade_amplitude_std: float
    main_sequence_vmax: float
    main_sequence_c: float
    vertical_bias: float
    dispersion_scale: float

    def __post_init__(self) -> None:
        for f in fields(self):
            if f.name != "vertical_bias" and not getattr(self, f.name) > 0:
                raise InvalidConfig(f"profile {f.name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


# parameter -> (low, high) spans used by both presets
PROFILE_RANGES = {
    "fixation_duration_mean": (180.0, 360.0),
    "fixation_duration_std": (40.0, 110.0),
    "saccade_amplitude_mean": (4.0, 12.0),
    "saccade_amplitude_std": (1.0, 4.0),
    "main_sequence_vmax": (400.0, 700.0),
    "main_sequence_c": (3.0, 7.0),
    "vertical_bias": (-12.0, 12.0),
    "dispersion_scale": (0.08, 0.35),
}


@dataclass(frozen=True)
class SynthConfig:
    subjects: int = 18
    stimuli: int = 50
    duration_s: float = 25.0
    rate_hz: float = 120.0
    seed: int = 42
    aois_per_stimulus: int = 2
    preset: str = "distinct"
    pursuit: bool = False
    name: str = "synthetic"

    def __post_init__(self) -> None:
        if self.subjects < 2 or self.stimuli < 2:
            raise InvalidConfig("need at least 2 subjects and 2 stimuli")
        if not (self.duration_s > 0 and self.rate_hz > 0):
            raise InvalidConfig("duration_s and rate_hz must be positive")
        if self.aois_per_stimulus < 0:
            raise InvalidConfig("aois_per_stimulus must be >= 0")
        if self.preset not in PRESETS:
            raise InvalidConfig(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer")


def main_sequence_peak(amplitude: float, vmax: float, c: float) -> float:
    return vmax * (1.0 - math.exp(-amplitude / c))


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def make_profiles(n: int, preset: str, seed: int) -> list[SubjectProfile]:
    """``distinct``: every parameter takes ``n`` evenly spaced levels, shuffled
    independently, so any two subjects differ in all parameters.
    ``overlapping``: parameters drawn from a shared normal around mid-range."""
    rng = _rng(seed, 0x5EED)
    cols = {}
    for name, (lo, hi) in PROFILE_RANGES.items():
        if preset == "distinct":
            levels = np.linspace(lo, hi, n)
            cols[name] = levels[rng.permutation(n)]
        else:
            mid, spread = (lo + hi) / 2.0, (hi - lo) / 8.0
            draw = rng.normal(mid, spread, n)
            floor = lo * 0.5 if lo > 0 else lo
            cols[name] = np.clip(draw, floor, hi + (hi - lo) / 4.0)
    return [SubjectProfile(**{k: float(v[i]) for k, v in cols.items()}) for i in range(n)]


def make_aois(rng: np.random.Generator, count: int, stimulus_id: str) -> tuple[Aoi, ...]:
    aois = []
    for j in range(count):
        w = rng.uniform(16.0, 26.0)
        h = rng.uniform(12.0, 20.0)
        x0 = rng.uniform(0.0, 360.0 - w)
        y0 = rng.uniform(65.0, 115.0 - h)
        aois.append(Aoi(round(x0, 3), round(x0 + w, 3), round(y0, 3), round(y0 + h, 3), f"{stimulus_id}-aoi{j}"))
    return tuple(aois)


def saccade_fractions(amplitude: float, peak: float, period_ms: float) -> np.ndarray:
    """Fraction of the path covered at each sample of a half-sine velocity profile.

    The nominal duration ``pi * amplitude / (2 * peak)`` is rounded up to whole
    sample periods so the last sample lands exactly on the target.
    """
    dur_ms = 1000.0 * math.pi * amplitude / (2.0 * peak)
    n = max(1, math.ceil(dur_ms / period_ms))
    tau = np.arange(1, n + 1) / n
    return (1.0 - np.cos(np.pi * tau)) / 2.0


class _Recorder:
    def __init__(self, n: int) -> None:
        self.n = n
        self.xs: list[np.ndarray] = []
        self.ys: list[np.ndarray] = []
        self.es: list[np.ndarray] = []
        self.count = 0

    @property
    def full(self) -> bool:
        return self.count >= self.n

    def add(self, x: np.ndarray, y: np.ndarray, label: int) -> None:
        take = min(len(x), self.n - self.count)
        if take <= 0:
            return
        self.xs.append(x[:take])
        self.ys.append(y[:take])
        self.es.append(np.full(take, label, dtype=np.int8))
        self.count += take


def _reflect_y(y: float) -> float:
    lo, hi = Y_BAND
    if y < lo:
        return 2 * lo - y
    if y > hi:
        return 2 * hi - y
    return y


def generate_series(
    profile: SubjectProfile,
    stimulus: Stimulus,
    rate_hz: float,
    rng: np.random.Generator,
    subject_id: str = "",
    pursuit: bool = False,
) -> GazeSeries:
    period = 1000.0 / rate_hz
    n = max(1, int(round(stimulus.duration_s * rate_hz)))
    rec = _Recorder(n)
    a = math.exp(-period / DRIFT_TAU_MS)
    innov = profile.dispersion_scale * math.sqrt(1.0 - a * a)
    pref = 90.0 + profile.vertical_bias
    x = float(rng.uniform(0.0, 360.0))
    y = float(np.clip(rng.normal(pref, 10.0), *Y_BAND))

    # gamma-distributed durations/amplitudes with the profile's mean and std
    def gamma(mean: float, std: float) -> float:
        shape = (mean / std) ** 2
        return float(rng.gamma(shape, mean / shape))

    while not rec.full:
        dur = max(gamma(profile.fixation_duration_mean, profile.fixation_duration_std), MIN_FIXATION_MS)
        nf = max(1, int(round(dur / period)))
        noise = rng.standard_normal((nf, 2)) * innov
        drift = lfilter([1.0], [1.0, -a], noise, axis=0)
        rec.add((x + drift[:, 0]) % 360.0, np.clip(y + drift[:, 1], 0.0, 179.999), FIX)
        if rec.full:
            break

        if pursuit and rng.random() < PURSUIT_PROB:
            np_ = max(2, int(round(300.0 / period)))
            ang = rng.uniform(0.0, 2.0 * np.pi)
            step = PURSUIT_SPEED * period / 1000.0 * np.arange(1, np_ + 1)
            px = (x + step * math.cos(ang)) % 360.0
            py = np.clip(y - step * math.sin(ang), *Y_BAND)
            rec.add(px, py, PUR)
            x, y = float(px[-1]), float(py[-1])
            if rec.full:
                break

        if stimulus.aois and rng.random() < AOI_ATTRACTION:
            box = stimulus.aois[int(rng.integers(len(stimulus.aois)))]
            mx = 0.1 * (box.x_max - box.x_min)
            my = 0.1 * (box.y_max - box.y_min)
            tx = float(rng.uniform(box.x_min + mx, box.x_max - mx))
            ty = float(rng.uniform(box.y_min + my, box.y_max - my))
            dx = (tx - x + 180.0) % 360.0 - 180.0
            dy = ty - y
            amp = math.hypot(dx, dy)
            if amp < MIN_AMPLITUDE:
                continue
        else:
            amp = max(gamma(profile.saccade_amplitude_mean, profile.saccade_amplitude_std), MIN_AMPLITUDE)
            ang = rng.uniform(0.0, 2.0 * np.pi)
            dx, dy = amp * math.cos(ang), -amp * math.sin(ang)
            ty = y + dy
            if abs(ty - pref) > 25.0:
                dy = -dy
            dy = _reflect_y(y + dy) - y
        peak = main_sequence_peak(amp, profile.main_sequence_vmax, profile.main_sequence_c)
        frac = saccade_fractions(amp, peak, period)
        rec.add((x + frac * dx) % 360.0, np.clip(y + frac * dy, 0.0, 179.999), SAC)
        x = (x + dx) % 360.0
        y = float(np.clip(y + dy, 0.0, 179.999))

    xs = np.concatenate(rec.xs)
    xs = np.where(xs >= 360.0, 0.0, xs)
    return GazeSeries(
        x=xs,
        y=np.concatenate(rec.ys),
        t=np.arange(n) * period,
        e=np.concatenate(rec.es),
        sampling_rate_hz=rate_hz,
        subject_id=subject_id,
        stimulus_id=stimulus.id,
    )


def subject_ids(n: int) -> tuple[str, ...]:
    width = max(2, len(str(n)))
    return tuple(f"s{i + 1:0{width}d}" for i in range(n))


def stimulus_ids(n: int) -> tuple[str, ...]:
    width = max(2, len(str(n)))
    return tuple(f"img{i + 1:0{width}d}" for i in range(n))


def generate_dataset(cfg: SynthConfig | None = None) -> Dataset:
    """Deterministic dataset: profiles, AOIs and one series per subject x stimulus."""
    cfg = cfg or SynthConfig()
    subs = subject_ids(cfg.subjects)
    profiles = dict(zip(subs, make_profiles(cfg.subjects, cfg.preset, cfg.seed)))
    stimuli = []
    for j, sid in enumerate(stimulus_ids(cfg.stimuli)):
        stimuli.append(Stimulus(sid, float(cfg.duration_s), make_aois(_rng(cfg.seed, 0xA01, j), cfg.aois_per_stimulus, sid)))
    recordings = {}
    for i, sub in enumerate(subs):
        for j, stim in enumerate(stimuli):
            rng = _rng(cfg.seed, i, j)
            recordings[(sub, stim.id)] = generate_series(profiles[sub], stim, cfg.rate_hz, rng, sub, cfg.pursuit)
    return Dataset(cfg.name, float(cfg.rate_hz), subs, tuple(stimuli), recordings, profiles)

"""Privacy mechanisms for gaze series: additive Gaussian noise, temporal
downsampling and spatial downsampling (plus identity for baselines)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GazeSample, GazeSeries
from .errors import InvalidFactor, InvalidMechanism

BASE_ROWS = 2160
BASE_COLS = 3840
Y_LIMIT = float(np.nextafter(180.0, 0.0))

KINDS = ("identity", "gaussian", "temporal", "spatial")


def _fmt_number(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


@dataclass(frozen=True)
class MechanismConfig:
    """One privacy transform plus its parameters.

    Build with the classmethods or :meth:`parse`; ``str(cfg)`` gives the
    canonical text form (``identity``, ``gaussian:SIGMA:SEED``,
    ``temporal:K``, ``spatial:L``).
    """

    kind: str = "identity"
    sigma: float = 0.0
    k: int = 1
    l: int = 1  # noqa: E741
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InvalidMechanism(f"unknown mechanism {self.kind!r}")
        if self.kind == "gaussian" and not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidMechanism("gaussian sigma must be a finite positive number")
        if self.kind == "temporal" and (int(self.k) != self.k or self.k < 1):
            raise InvalidMechanism("temporal K must be an integer >= 1")
        if self.kind == "spatial":
            SpatialGrid.from_factor(self.l)
        if not 0 <= int(self.rng_seed) < 2**64:
            raise InvalidMechanism("seed must be a 64-bit unsigned integer")

    @classmethod
    def identity(cls) -> "MechanismConfig":
        return cls("identity")

    @classmethod
    def gaussian(cls, sigma: float, seed: int = 0) -> "MechanismConfig":
        return cls("gaussian", sigma=float(sigma), rng_seed=int(seed))

    @classmethod
    def temporal(cls, k: int) -> "MechanismConfig":
        return cls("temporal", k=int(k))

    @classmethod
    def spatial(cls, l: int) -> "MechanismConfig":  # noqa: E741
        return cls("spatial", l=int(l))

    @classmethod
    def parse(cls, text: str) -> "MechanismConfig":
        parts = text.split(":")
        kind, args = parts[0], parts[1:]
        try:
            if kind == "identity" and not args:
                return cls.identity()
            if kind == "gaussian" and len(args) == 2:
                return cls.gaussian(float(args[0]), int(args[1]))
            if kind == "temporal" and len(args) == 1:
                return cls.temporal(int(args[0]))
            if kind == "spatial" and len(args) == 1:
                return cls.spatial(int(args[0]))
        except ValueError as exc:
            if isinstance(exc, (InvalidFactor, InvalidMechanism)):
                raise
            raise InvalidMechanism(f"bad mechanism parameters in {text!r}") from None
        raise InvalidMechanism(
            f"cannot parse mechanism {text!r}; expected identity, gaussian:SIGMA:SEED, temporal:K or spatial:L"
        )

    def __str__(self) -> str:
        if self.kind == "gaussian":
            return f"gaussian:{_fmt_number(self.sigma)}:{int(self.rng_seed)}"
        if self.kind == "temporal":
            return f"temporal:{int(self.k)}"
        if self.kind == "spatial":
            return f"spatial:{int(self.l)}"
        return "identity"

    def with_seed(self, seed: int) -> "MechanismConfig":
        return MechanismConfig(self.kind, self.sigma, self.k, self.l, int(seed))


@dataclass(frozen=True)
class SpatialGrid:
    """Equirectangular grid obtained by shrinking 3840x2160 by a factor ``L``.

    ``L`` must divide the 3840 column count. The row count ``M = 2160 / L``
    may be fractional (e.g. 33.75 for L=64); the floor formula only needs
    the step sizes, and the last row is then a partial cell.
    """

    L: int
    M: float
    N: int
    delta_x: float
    delta_y: float

    @classmethod
    def from_factor(cls, L: int) -> "SpatialGrid":
        if int(L) != L or L < 1 or BASE_COLS % int(L):
            raise InvalidFactor(f"spatial factor {L} must be a positive integer dividing {BASE_COLS}")
        L = int(L)
        n = BASE_COLS // L
        m = BASE_ROWS // L if BASE_ROWS % L == 0 else BASE_ROWS / L
        return cls(L=L, M=m, N=n, delta_x=360.0 / n, delta_y=180.0 / m)

    @property
    def n_rows(self) -> int:
        return math.ceil(self.M)


def _floor_to_grid(v: np.ndarray, step: float) -> np.ndarray:
    j = np.floor(v / step)
    # repair rounding so that j*step <= v < (j+1)*step holds for the products
    j = np.where(j * step > v, j - 1, j)
    j = np.where((j + 1) * step <= v, j + 1, j)
    return j * step


def quantize(x, y, grid: SpatialGrid):
    return _floor_to_grid(np.asarray(x, float), grid.delta_x), _floor_to_grid(np.asarray(y, float), grid.delta_y)


def _wrap_x(x: np.ndarray) -> np.ndarray:
    out = np.mod(x, 360.0)
    return np.where(out >= 360.0, 0.0, out)


def _clamp_y(y: np.ndarray) -> np.ndarray:
    return np.clip(y, 0.0, Y_LIMIT)


def noise_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def apply_gaussian(series: GazeSeries, sigma: float, seed: int) -> GazeSeries:
    """Add independent N(0, sigma) noise to both axes; x wraps, y clamps.

    Draws are taken in sample order, x before y, from a PCG64 stream keyed
    by ``seed`` so online and batch application agree.
    """
    if sigma < 0:
        raise InvalidMechanism("sigma must be >= 0")
    if sigma == 0 or len(series) == 0:
        return series.replace()
    noise = noise_rng(seed).standard_normal((len(series), 2)) * sigma
    return series.replace(x=_wrap_x(series.x + noise[:, 0]), y=_clamp_y(series.y + noise[:, 1]))


def apply_temporal(series: GazeSeries, k: int) -> GazeSeries:
    """Keep samples 1, K+1, 2K+1, ... (1-based) and divide the rate by K."""
    if int(k) != k or k < 1:
        raise InvalidMechanism("K must be an integer >= 1")
    k = int(k)
    if k == 1:
        return series.replace()
    return series.replace(
        x=series.x[::k],
        y=series.y[::k],
        t=series.t[::k],
        e=series.e[::k],
        sampling_rate_hz=series.sampling_rate_hz / k,
    )


def apply_spatial(series: GazeSeries, l: int) -> GazeSeries:  # noqa: E741
    """Snap each sample to the lower-left corner of its grid cell."""
    grid = SpatialGrid.from_factor(l)
    qx, qy = quantize(series.x, series.y, grid)
    return series.replace(x=qx, y=qy)


def apply_mechanism(series: GazeSeries, cfg: MechanismConfig) -> GazeSeries:
    if cfg.kind == "gaussian":
        return apply_gaussian(series, cfg.sigma, cfg.rng_seed)
    if cfg.kind == "temporal":
        return apply_temporal(series, cfg.k)
    if cfg.kind == "spatial":
        return apply_spatial(series, cfg.l)
    return series.replace()


class OnlineMechanism:
    """Sample-at-a-time version of a mechanism, for streaming.

    Emits exactly the samples (and values) that the batch function would
    produce for the same series.
    """

    def __init__(self, cfg: MechanismConfig) -> None:
        self.cfg = cfg
        self._index = 0
        self._rng = noise_rng(cfg.rng_seed) if cfg.kind == "gaussian" else None
        self._grid = SpatialGrid.from_factor(cfg.l) if cfg.kind == "spatial" else None

    def push(self, s: GazeSample) -> GazeSample | None:
        i = self._index
        self._index += 1
        kind = self.cfg.kind
        if kind == "temporal":
            return s if i % self.cfg.k == 0 else None
        if kind == "spatial":
            qx, qy = quantize(s.x, s.y, self._grid)
            return GazeSample(float(qx), float(qy), s.t, s.e)
        if kind == "gaussian":
            n = self._rng.standard_normal(2) * self.cfg.sigma
            x = float(_wrap_x(np.array(s.x + n[0])))
            y = float(_clamp_y(np.array(s.y + n[1])))
            return GazeSample(x, y, s.t, s.e)
        return s

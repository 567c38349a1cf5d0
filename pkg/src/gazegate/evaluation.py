"""Privacy and utility evaluation.

Privacy is the identification rate of the RBF biometric under a random
stimulus split, with the mechanism applied to both training and testing
data. Utility is measured as AOI dwell-time RMSE, saliency-map KL
divergence and the change in constant-velocity gaze-prediction error.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .biometric import DEFAULT_K, RbfNetwork, classify_features, feature_columns, fuse_scores, train_network
from .core import (
    EventLabel,
    GazeEvent,
    GazeSeries,
    IvtParams,
    angular_distance_arrays,
    event_table,
    relabel,
    wrap_delta,
)
from .dataset import Aoi, Dataset
from .errors import EmptyInput, IndexMismatch, ShapeMismatch, TooFewStimuli, TooShort
from .privacy import MechanismConfig, apply_mechanism

log = logging.getLogger(__name__)

FIX = int(EventLabel.FIXATION)
TRAIN_PRESETS = (0.75, 0.50, 0.25)
CSV_COLUMNS = ("mechanism", "run", "ir", "chance", "dwell_rmse_s", "kl", "pred_err_deg")
DEFAULT_CELL_DEG = 1.0
DEFAULT_SMOOTHING_DEG = 2.0
DEFAULT_HORIZON_MS = 100.0


@dataclass(frozen=True)
class EvalConfig:
    train_fraction: float = 0.75
    runs: int = 10
    seed: int = 0
    k_clusters: int = DEFAULT_K
    mechanism: MechanismConfig = field(default_factory=MechanismConfig.identity)
    relabel_after_mechanism: bool = True
    comparison: str = "stream"  # "stream": one per (subject, test stimulus); "subject": one per subject
    utility: bool = True
    workers: int = 1
    ivt: IvtParams = field(default_factory=IvtParams)

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.comparison not in ("stream", "subject"):
            raise ValueError("comparison must be 'stream' or 'subject'")


@dataclass
class EvalReport:
    mechanism: str
    per_run_ir: list[float]
    chance_rate: float
    per_run_dwell_rmse_s: list[float | None] = field(default_factory=list)
    per_run_kl: list[float | None] = field(default_factory=list)
    per_run_pred_err_deg: list[float | None] = field(default_factory=list)
    per_run_comparisons: list[int] = field(default_factory=list)
    per_run_dropped: list[list[str]] = field(default_factory=list)

    @property
    def ir_mean(self) -> float:
        return float(np.mean(self.per_run_ir))

    @property
    def ir_std(self) -> float:
        if len(self.per_run_ir) < 2:
            return 0.0
        return float(np.std(self.per_run_ir, ddof=1))

    @staticmethod
    def _mean(values) -> float | None:
        vals = [v for v in values if v is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def dwell_rmse_s(self) -> float | None:
        return self._mean(self.per_run_dwell_rmse_s)

    @property
    def kl_divergence(self) -> float | None:
        return self._mean(self.per_run_kl)

    @property
    def prediction_error_deg(self) -> float | None:
        return self._mean(self.per_run_pred_err_deg)

    def rows(self) -> list[dict]:
        out = []
        for r, ir in enumerate(self.per_run_ir):
            out.append(
                {
                    "mechanism": self.mechanism,
                    "run": r,
                    "ir": ir,
                    "chance": self.chance_rate,
                    "dwell_rmse_s": _pick(self.per_run_dwell_rmse_s, r),
                    "kl": _pick(self.per_run_kl, r),
                    "pred_err_deg": _pick(self.per_run_pred_err_deg, r),
                }
            )
        return out

    def summary(self) -> str:
        def fmt(v, unit=""):
            return "n/a" if v is None else f"{v:.4f}{unit}"

        dropped = sum(len(d) for d in self.per_run_dropped)
        return (
            f"mechanism {self.mechanism}: IR {self.ir_mean:.4f} +/- {self.ir_std:.4f} "
            f"over {len(self.per_run_ir)} runs (chance {self.chance_rate:.4f}); "
            f"dwell RMSE {fmt(self.dwell_rmse_s, ' s')}, KL {fmt(self.kl_divergence)}, "
            f"prediction error delta {fmt(self.prediction_error_deg, ' deg')}; "
            f"dropped subject-runs {dropped}"
        )


def _pick(values: list, i: int):
    return values[i] if i < len(values) else None


def _fmt_csv(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.10g}"


def reports_to_csv(reports: Iterable[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        for row in rep.rows():
            w.writerow([_fmt_csv(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def reports_to_text(reports: Iterable[EvalReport]) -> str:
    return "".join(rep.summary() + "\n" for rep in reports)


# ---------------------------------------------------------------- protocol pieces


def split_stimuli(stimulus_ids: Sequence[str], train_fraction: float, seed: int) -> tuple[list[str], list[str]]:
    """Random train/test split of stimuli; both sides keep the input order."""
    ids = list(stimulus_ids)
    if len(ids) < 2:
        raise TooFewStimuli(f"need at least 2 stimuli to split, got {len(ids)}")
    n_train = int(math.floor(train_fraction * len(ids) + 0.5))
    n_train = min(max(n_train, 1), len(ids) - 1)
    order = np.random.default_rng(seed).permutation(len(ids))
    chosen = set(order[:n_train].tolist())
    train = [s for i, s in enumerate(ids) if i in chosen]
    test = [s for i, s in enumerate(ids) if i not in chosen]
    return train, test


def identification_rate(predictions: Sequence[tuple]) -> float:
    if not predictions:
        raise EmptyInput("no comparisons")
    correct = sum(1 for pred, truth in predictions if pred == truth)
    return correct / len(predictions)


def run_seeds(seed: int, run: int) -> dict[str, int]:
    """Independent sub-seeds for one run, derived from (master seed, run index)."""
    state = np.random.SeedSequence([int(seed), int(run)]).generate_state(3, np.uint64)
    return {"split": int(state[0]), "kmeans": int(state[1]), "noise": int(state[2])}


def series_seed(noise_seed: int, subject_index: int, stimulus_index: int) -> int:
    ss = np.random.SeedSequence([int(noise_seed), int(subject_index), int(stimulus_index)])
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------- per-series processing


@dataclass
class SeriesSummary:
    fix_features: np.ndarray
    sacc_features: np.ndarray
    fix_cx: np.ndarray
    fix_cy: np.ndarray
    fix_dur: np.ndarray
    pred_errors: np.ndarray | None = None


def label_series(series: GazeSeries, relabel_after: bool, params: IvtParams) -> GazeSeries:
    if relabel_after or np.any(series.e == int(EventLabel.UNLABELED)):
        return relabel(series, params)
    return series


def summarize(series: GazeSeries, relabel_after: bool, params: IvtParams, with_prediction: bool) -> SeriesSummary:
    labeled = label_series(series, relabel_after, params)
    if len(labeled) == 0:
        empty = np.zeros((0, 6))
        z = np.zeros(0)
        return SeriesSummary(empty, empty, z, z, z, z if with_prediction else None)
    tab = event_table(labeled)
    fix = tab["kind"] == FIX
    errs = None
    if with_prediction:
        errs = _cv_errors(series, DEFAULT_HORIZON_MS) if len(series) >= 3 else np.zeros(0)
    return SeriesSummary(
        feature_columns(tab, EventLabel.FIXATION),
        feature_columns(tab, EventLabel.SACCADE),
        tab["centroid_x"][fix],
        tab["centroid_y"][fix],
        tab["duration_ms"][fix],
        errs,
    )


def _privatize(series: GazeSeries, mech: MechanismConfig, noise_seed: int, si: int, ti: int) -> GazeSeries:
    if mech.kind == "gaussian":
        mech = mech.with_seed(series_seed(noise_seed ^ mech.rng_seed, si, ti))
    return apply_mechanism(series, mech)


def summarize_dataset(
    dataset: Dataset,
    mech: MechanismConfig,
    noise_seed: int,
    relabel_after: bool,
    params: IvtParams,
    with_prediction: bool,
) -> dict[tuple[str, str], SeriesSummary]:
    sub_index = {s: i for i, s in enumerate(dataset.subjects)}
    stim_index = {s: i for i, s in enumerate(dataset.stimulus_ids)}
    out = {}
    for key in sorted(dataset.recordings):
        series = dataset.recordings[key]
        priv = _privatize(series, mech, noise_seed, sub_index[key[0]], stim_index[key[1]])
        out[key] = summarize(priv, relabel_after, params, with_prediction)
    return out


# ---------------------------------------------------------------- identification


def _train(summaries, subjects, stimuli, attr: str, kind, k: int, seed: int) -> RbfNetwork | None:
    feats = {}
    for sub in subjects:
        rows = [getattr(summaries[(sub, st)], attr) for st in stimuli]
        feats[sub] = np.vstack(rows) if rows else np.zeros((0, 6))
    smallest = min(v.shape[0] for v in feats.values())
    if smallest == 0:
        log.info("no %s vectors for at least one subject; network omitted", EventLabel(kind).name.lower())
        return None
    k_eff = min(k, smallest)
    if k_eff < k:
        log.info("reducing k from %d to %d for %s network", k, k_eff, EventLabel(kind).name.lower())
    return train_network(feats, kind, k_eff, seed)


def _predict(fix_net, sacc_net, classes, fix_raw, sacc_raw):
    if fix_raw.shape[0] + sacc_raw.shape[0] == 0:
        return None
    if fix_net is not None and sacc_net is not None:
        return classify_features(fix_net, sacc_net, fix_raw, sacc_raw).predicted
    c = len(classes)
    sums = []
    for net, raw in ((fix_net, fix_raw), (sacc_net, sacc_raw)):
        if net is None or raw.shape[0] == 0:
            sums.append(np.zeros(c))
        else:
            sums.append(net.score_matrix(net.norm_stats.apply(raw)).sum(axis=0))
    return fuse_scores(sums[0], sums[1], classes).predicted


@dataclass
class RunResult:
    ir: float
    comparisons: int
    dropped: list[str]
    dwell_rmse_s: float | None = None
    kl: float | None = None
    pred_err_deg: float | None = None


def _identify(dataset: Dataset, summaries, cfg: EvalConfig, seeds: dict) -> tuple[float, int, list[str]]:
    train_st, test_st = split_stimuli(dataset.stimulus_ids, cfg.train_fraction, seeds["split"])
    needed = train_st + test_st
    subjects = [s for s in dataset.subjects if all((s, st) in summaries for st in needed)]
    dropped = [s for s in dataset.subjects if s not in subjects]
    if len(subjects) < 2:
        raise EmptyInput("fewer than two subjects have data for every sampled stimulus")
    classes = tuple(subjects)
    fix_net = _train(summaries, subjects, train_st, "fix_features", EventLabel.FIXATION, cfg.k_clusters, seeds["kmeans"])
    sacc_net = _train(summaries, subjects, train_st, "sacc_features", EventLabel.SACCADE, cfg.k_clusters, seeds["kmeans"] + 1)
    if fix_net is None and sacc_net is None:
        raise EmptyInput("no fixation or saccade features in the training set")
    preds = []
    for sub in subjects:
        streams = [test_st] if cfg.comparison == "subject" else [[st] for st in test_st]
        for group in streams:
            fix_raw = np.vstack([summaries[(sub, st)].fix_features for st in group])
            sacc_raw = np.vstack([summaries[(sub, st)].sacc_features for st in group])
            preds.append((_predict(fix_net, sacc_net, classes, fix_raw, sacc_raw), sub))
    return identification_rate(preds), len(preds), dropped


# ---------------------------------------------------------------- utility metrics


def dwell_time(fixations: Sequence[GazeEvent], aoi: Aoi) -> float:
    """Total duration (ms) of fixations whose centroid lies in ``aoi``."""
    total = 0.0
    for ev in fixations:
        if ev.kind == EventLabel.FIXATION and aoi.contains(ev.centroid_x, ev.centroid_y):
            total += ev.duration_ms
    return total


def _dwell_arrays(cx, cy, dur, aoi: Aoi) -> float:
    return float(dur[aoi.contains(cx, cy)].sum())


def dwell_rmse(original: Mapping, privatized: Mapping, aois: Mapping[str, Sequence[Aoi]]) -> float:
    """RMSE in seconds over all (subject, stimulus, AOI) dwell-time pairs.

    ``original``/``privatized`` map (subject, stimulus) to fixation event lists.
    """
    if set(original) != set(privatized):
        raise IndexMismatch("original and privatized cover different (subject, stimulus) pairs")
    diffs = []
    for key in sorted(original):
        for aoi in aois.get(key[1], ()):
            diffs.append(dwell_time(original[key], aoi) - dwell_time(privatized[key], aoi))
    if not diffs:
        return 0.0
    d = np.asarray(diffs) / 1000.0
    return float(np.sqrt(np.mean(d * d)))


def _dwell_rmse_summaries(orig, priv, aois) -> float:
    if set(orig) != set(priv):
        raise IndexMismatch("original and privatized cover different (subject, stimulus) pairs")
    diffs = []
    for key in sorted(orig):
        a, b = orig[key], priv[key]
        for aoi in aois.get(key[1], ()):
            diffs.append(_dwell_arrays(a.fix_cx, a.fix_cy, a.fix_dur, aoi) - _dwell_arrays(b.fix_cx, b.fix_cy, b.fix_dur, aoi))
    if not diffs:
        return 0.0
    d = np.asarray(diffs) / 1000.0
    return float(np.sqrt(np.mean(d * d)))


@dataclass
class SaliencyMap:
    grid: np.ndarray
    cell_deg: float


def _check_cell(cell_deg: float) -> tuple[int, int]:
    rows, cols = 180.0 / cell_deg, 360.0 / cell_deg
    if cell_deg <= 0 or abs(rows - round(rows)) > 1e-9 or abs(cols - round(cols)) > 1e-9:
        raise ShapeMismatch(f"cell size {cell_deg} must divide 180 and 360")
    return int(round(rows)), int(round(cols))


def saliency_from_arrays(cx, cy, dur, cell_deg: float = DEFAULT_CELL_DEG, smoothing_sigma_deg: float = DEFAULT_SMOOTHING_DEG) -> SaliencyMap:
    rows, cols = _check_cell(cell_deg)
    cx = np.asarray(cx, dtype=float)
    cy = np.asarray(cy, dtype=float)
    dur = np.asarray(dur, dtype=float)
    if cx.size == 0 or not dur.sum() > 0:
        raise EmptyInput("no fixation mass to build a saliency map from")
    r = np.minimum((cy // cell_deg).astype(np.int64), rows - 1)
    c = np.minimum((cx // cell_deg).astype(np.int64), cols - 1)
    grid = np.bincount(r * cols + c, weights=dur, minlength=rows * cols).reshape(rows, cols)
    if smoothing_sigma_deg > 0:
        grid = gaussian_filter(grid, smoothing_sigma_deg / cell_deg, mode=("nearest", "wrap"), truncate=4.0)
    return SaliencyMap(grid / grid.sum(), cell_deg)


def build_saliency_map(
    fixations: Iterable[GazeEvent],
    cell_deg: float = DEFAULT_CELL_DEG,
    smoothing_sigma_deg: float = DEFAULT_SMOOTHING_DEG,
) -> SaliencyMap:
    """Duration-weighted fixation density, Gaussian-smoothed and normalized to 1.

    Smoothing wraps horizontally and clamps vertically.
    """
    fx = [ev for ev in fixations if ev.kind == EventLabel.FIXATION]
    return saliency_from_arrays(
        [e.centroid_x for e in fx], [e.centroid_y for e in fx], [e.duration_ms for e in fx], cell_deg, smoothing_sigma_deg
    )


def kl_divergence(P, Q, eps: float = 1e-12) -> float:
    """sum_i P_i * ln((P_i + eps) / (Q_i + eps)) in nats."""
    p = np.asarray(P.grid if isinstance(P, SaliencyMap) else P, dtype=float)
    q = np.asarray(Q.grid if isinstance(Q, SaliencyMap) else Q, dtype=float)
    if p.shape != q.shape:
        raise ShapeMismatch(f"maps differ in shape: {p.shape} vs {q.shape}")
    return float(np.sum(p * np.log((p + eps) / (q + eps))))


def _kl_summaries(orig, priv, dataset: Dataset) -> float | None:
    values = []
    for st in dataset.stimulus_ids:
        keys = [k for k in orig if k[1] == st]
        if not keys:
            continue
        def stack(src, attr):
            return np.concatenate([getattr(src[k], attr) for k in keys])
        try:
            p = saliency_from_arrays(stack(orig, "fix_cx"), stack(orig, "fix_cy"), stack(orig, "fix_dur"))
            q = saliency_from_arrays(stack(priv, "fix_cx"), stack(priv, "fix_cy"), stack(priv, "fix_dur"))
        except EmptyInput:
            continue
        values.append(kl_divergence(p, q))
    return float(np.mean(values)) if values else None


def _cv_errors(series: GazeSeries, horizon_ms: float) -> np.ndarray:
    pred_x, pred_y, tx, ty = _cv_pairs(series, horizon_ms)
    return angular_distance_arrays(pred_x, pred_y, tx, ty)


def _cv_pairs(series: GazeSeries, horizon_ms: float):
    if horizon_ms <= 0:
        raise ValueError("horizon_ms must be positive")
    if len(series) < 3:
        raise TooShort("gaze prediction needs at least 3 samples")
    x, y, t = series.x, series.y, series.t
    dt = np.diff(t)
    vx = wrap_delta(np.diff(x)) / dt
    vy = np.diff(y) / dt
    px = (x[1:] + vx * horizon_ms) % 360.0
    px = np.where(px >= 360.0, 0.0, px)
    py = np.clip(y[1:] + vy * horizon_ms, 0.0, float(np.nextafter(180.0, 0.0)))
    target = t[1:] + horizon_ms
    j = np.clip(np.searchsorted(t, target), 1, len(t) - 1)
    nearer_left = np.abs(t[j - 1] - target) <= np.abs(t[j] - target)
    j = np.where(nearer_left, j - 1, j)
    ok = np.abs(t[j] - target) <= series.period_ms / 2.0
    return px[ok], py[ok], x[j[ok]], y[j[ok]]


def predict_gaze_cv(series: GazeSeries, horizon_ms: float = DEFAULT_HORIZON_MS) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Constant-velocity extrapolation from each pair of consecutive samples.

    Returns (predicted, truth) point pairs; truth is the sample nearest to
    ``t + horizon_ms`` and pairs without one within half a period are skipped.
    """
    px, py, tx, ty = _cv_pairs(series, horizon_ms)
    return [((a, b), (c, d)) for a, b, c, d in zip(px.tolist(), py.tolist(), tx.tolist(), ty.tolist())]


def prediction_error(pairs: Sequence) -> float:
    if len(pairs) == 0:
        raise EmptyInput("no prediction pairs")
    arr = np.asarray(pairs, dtype=float).reshape(len(pairs), 4)
    return float(angular_distance_arrays(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]).mean())


def _pred_err_summaries(summaries) -> float | None:
    errs = [s.pred_errors for s in summaries.values() if s.pred_errors is not None and s.pred_errors.size]
    return float(np.concatenate(errs).mean()) if errs else None


# ---------------------------------------------------------------- driver


_WORKER_STATE: dict = {}


def _run_one(dataset: Dataset, cfg: EvalConfig, run: int, baseline, cache: dict) -> RunResult:
    seeds = run_seeds(cfg.seed, run)
    mech = cfg.mechanism
    key = _cache_key(mech, cfg, cfg.utility) if mech.kind != "gaussian" else None
    summaries = cache.get(key) if key is not None else None
    if summaries is None:
        summaries = summarize_dataset(dataset, mech, seeds["noise"], cfg.relabel_after_mechanism, cfg.ivt, cfg.utility)
        if key is not None:
            cache[key] = summaries
    ir, n, dropped = _identify(dataset, summaries, cfg, seeds)
    res = RunResult(ir, n, dropped)
    if cfg.utility and baseline is not None:
        res.dwell_rmse_s = _dwell_rmse_summaries(baseline, summaries, dataset.aois())
        res.kl = _kl_summaries(baseline, summaries, dataset)
        a, b = _pred_err_summaries(summaries), _pred_err_summaries(baseline)
        res.pred_err_deg = None if a is None or b is None else a - b
    return res


def _cache_key(mech: MechanismConfig, cfg: EvalConfig, with_prediction: bool) -> tuple:
    return (str(mech), cfg.relabel_after_mechanism, cfg.ivt, with_prediction)


def _baseline(dataset: Dataset, cfg: EvalConfig, cache: dict):
    if not cfg.utility:
        return None
    key = _cache_key(MechanismConfig.identity(), cfg, True)
    if key not in cache:
        cache[key] = summarize_dataset(dataset, MechanismConfig.identity(), 0, cfg.relabel_after_mechanism, cfg.ivt, True)
    return cache[key]


def _worker_init(dataset: Dataset, cfg: EvalConfig) -> None:
    _WORKER_STATE.clear()
    _WORKER_STATE.update(dataset=dataset, cfg=cfg, cache={})


def _worker_run(run: int) -> RunResult:
    ds, cfg, cache = _WORKER_STATE["dataset"], _WORKER_STATE["cfg"], _WORKER_STATE["cache"]
    return _run_one(ds, cfg, run, _baseline(ds, cfg, cache), cache)


def run_identification(dataset: Dataset, cfg: EvalConfig, cache: dict | None = None) -> EvalReport:
    """Repeat the split/train/classify protocol ``cfg.runs`` times.

    ``cache`` may be shared between calls on the same dataset to reuse
    deterministic per-series work (baseline and non-noise mechanisms).
    """
    cache = {} if cache is None else cache
    if cfg.workers > 1 and cfg.runs > 1:
        import multiprocessing as mp

        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(cfg.workers, mp_context=ctx, initializer=_worker_init, initargs=(dataset, cfg)) as pool:
            results = list(pool.map(_worker_run, range(cfg.runs)))
    else:
        base = _baseline(dataset, cfg, cache)
        results = [_run_one(dataset, cfg, r, base, cache) for r in range(cfg.runs)]
    for r, res in enumerate(results):
        log.info("%s run %d: IR %.4f over %d comparisons", cfg.mechanism, r, res.ir, res.comparisons)
    return EvalReport(
        mechanism=str(cfg.mechanism),
        per_run_ir=[r.ir for r in results],
        chance_rate=1.0 / len(dataset.subjects),
        per_run_dwell_rmse_s=[r.dwell_rmse_s for r in results],
        per_run_kl=[r.kl for r in results],
        per_run_pred_err_deg=[r.pred_err_deg for r in results],
        per_run_comparisons=[r.comparisons for r in results],
        per_run_dropped=[r.dropped for r in results],
    )


def evaluate_mechanisms(dataset: Dataset, mechanisms: Sequence[MechanismConfig], base: EvalConfig) -> list[EvalReport]:
    cache: dict = {}
    reports = []
    for mech in mechanisms:
        cfg = EvalConfig(**{**base.__dict__, "mechanism": mech})
        reports.append(run_identification(dataset, cfg, cache))
    return reports


@dataclass(frozen=True)
class UtilityReport:
    dwell_rmse_s: float
    kl: float | None
    pred_err_deg: float | None

    def to_dict(self) -> dict:
        return {"dwell_rmse_s": self.dwell_rmse_s, "kl": self.kl, "pred_err_deg": self.pred_err_deg}


def compare_utility(original: Dataset, privatized: Dataset, relabel_after: bool = True, params: IvtParams | None = None) -> UtilityReport:
    """Utility loss of ``privatized`` relative to ``original`` (same subjects, stimuli and AOIs)."""
    params = params or IvtParams()
    if set(original.recordings) != set(privatized.recordings):
        raise IndexMismatch("datasets cover different (subject, stimulus) pairs")
    ident = MechanismConfig.identity()
    # both sides go through the same labelling so identical inputs give zero loss
    a = summarize_dataset(original, ident, 0, relabel_after, params, True)
    b = summarize_dataset(privatized, ident, 0, relabel_after, params, True)
    pa, pb = _pred_err_summaries(a), _pred_err_summaries(b)
    return UtilityReport(
        _dwell_rmse_summaries(a, b, original.aois()),
        _kl_summaries(a, b, original),
        None if pa is None or pb is None else pb - pa,
    )


def privatize_dataset(dataset: Dataset, mech: MechanismConfig, noise_seed: int = 0) -> Dataset:
    """Apply ``mech`` to every recording, seeding Gaussian noise per series as the evaluation does."""
    sub_index = {s: i for i, s in enumerate(dataset.subjects)}
    stim_index = {s: i for i, s in enumerate(dataset.stimulus_ids)}
    recs = {
        key: _privatize(series, mech, noise_seed, sub_index[key[0]], stim_index[key[1]])
        for key, series in sorted(dataset.recordings.items())
    }
    rate = dataset.rate_hz / mech.k if mech.kind == "temporal" else dataset.rate_hz
    return Dataset(dataset.name, rate, dataset.subjects, dataset.stimuli, recs, dataset.profiles)

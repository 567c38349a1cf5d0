"""Fixation/saccade RBF-network biometric.

Each event becomes a small feature vector; per-subject k-means prototypes
define Gaussian hidden nodes; output weights are the minimum-norm least
squares solution against one-hot identity labels. A stream of events is
classified by summing per-event scores within each network and averaging
the fixation and saccade sums.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import EventLabel, GazeEvent
from .errors import (
    ClassMismatch,
    DegenerateEvent,
    DimensionMismatch,
    KindMismatch,
    ModelFormatError,
    NoEvents,
    NonFinite,
    SubjectTooSparse,
    TooFewVectors,
    UntrainedNetwork,
)

FIXATION_FEATURES = ("duration_ms", "centroid_x", "centroid_y", "dispersion_deg", "mean_velocity", "velocity_std")
SACCADE_FEATURES = ("duration_ms", "amplitude_deg", "mean_velocity", "peak_velocity", "direction_deg", "peak_mean_ratio")
FEATURE_NAMES = {EventLabel.FIXATION: FIXATION_FEATURES, EventLabel.SACCADE: SACCADE_FEATURES}

DEFAULT_K = 16
MAX_ITER = 100
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    kind: EventLabel
    subject_id: str = ""
    stimulus_id: str = ""

    def __post_init__(self) -> None:
        if not all(np.isfinite(self.values)):
            raise NonFinite("feature values must be finite")

    def asarray(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def _kind(kind) -> EventLabel:
    kind = EventLabel(kind)
    if kind not in FEATURE_NAMES:
        raise KindMismatch(f"no biometric features for {kind.name}")
    return kind


def _ratio(peak, mean):
    peak = np.asarray(peak, dtype=float)
    mean = np.asarray(mean, dtype=float)
    safe = np.where(mean > 0, mean, 1.0)
    return np.where(mean > 0, peak / safe, 1.0)


def feature_columns(table: Mapping[str, np.ndarray], kind) -> np.ndarray:
    """Feature matrix (events x 6) for all usable events of ``kind`` in an event table."""
    kind = _kind(kind)
    sel = (table["kind"] == int(kind)) & (table["n_samples"] >= 2)
    if kind == EventLabel.FIXATION:
        cols = [table[name][sel] for name in FIXATION_FEATURES]
    else:
        cols = [table[name][sel] for name in SACCADE_FEATURES[:-1]]
        cols.append(_ratio(table["peak_velocity"][sel], table["mean_velocity"][sel]))
    if not cols[0].size:
        return np.zeros((0, len(FEATURE_NAMES[kind])))
    return np.column_stack(cols)


def extract_features(event: GazeEvent, kind, subject_id: str = "", stimulus_id: str = "") -> FeatureVector:
    kind = _kind(kind)
    if event.kind != kind:
        raise KindMismatch(f"event is {event.kind.name}, expected {kind.name}")
    if event.n_samples < 2:
        raise DegenerateEvent(f"{kind.name.lower()} event has {event.n_samples} sample(s); need 2")
    if kind == EventLabel.FIXATION:
        values = (
            event.duration_ms,
            event.centroid_x,
            event.centroid_y,
            event.dispersion_deg,
            event.mean_velocity,
            event.velocity_std,
        )
    else:
        values = (
            event.duration_ms,
            event.amplitude_deg,
            event.mean_velocity,
            event.peak_velocity,
            event.direction_deg,
            float(_ratio(event.peak_velocity, event.mean_velocity)),
        )
    return FeatureVector(tuple(float(v) for v in values), kind, subject_id, stimulus_id)


# ---------------------------------------------------------------- normalization


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.mean.shape[0]:
            raise DimensionMismatch(f"expected {self.mean.shape[0]} features, got {values.shape[-1]}")
        return (values - self.mean) / self.std


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        return np.atleast_2d(np.asarray(features, dtype=float))
    rows = [f.asarray() if isinstance(f, FeatureVector) else np.asarray(f, dtype=float) for f in features]
    return np.vstack(rows) if rows else np.zeros((0, 0))


def fit_norm_stats(features) -> NormStats:
    X = _as_matrix(features)
    if X.shape[0] == 0:
        raise TooFewVectors("cannot normalize an empty feature set")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return NormStats(mean, std)


def normalize(features) -> tuple[np.ndarray, NormStats]:
    """Z-score each feature with population statistics of ``features``."""
    stats = fit_norm_stats(features)
    return stats.apply(_as_matrix(features)), stats


# ---------------------------------------------------------------- k-means


@dataclass
class Cluster:
    centroid: np.ndarray
    members: np.ndarray
    sigma_avg: float


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] + (C * C).sum(1)[None, :] - 2.0 * X @ C.T
    return np.maximum(d, 0.0)


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    idx = [int(rng.integers(n))]
    d2 = ((X - X[idx[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.integers(n))
        idx.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(1))
    return X[idx].copy()


def kmeans(vectors, k: int, seed: int = 0, max_iter: int = MAX_ITER) -> list[Cluster]:
    """Lloyd's algorithm with k-means++ seeding.

    Stops at an assignment fixed point or after ``max_iter`` iterations.
    An emptied cluster is re-seeded with the point farthest from the
    centroid of the currently largest cluster.
    """
    X = _as_matrix(vectors)
    n = X.shape[0]
    if k < 1 or n < k:
        raise TooFewVectors(f"k-means with k={k} needs at least {k} vectors, got {n}")
    rng = np.random.default_rng(seed)
    C = _kmeans_pp(X, k, rng)
    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        new = np.argmin(_sq_dists(X, C), axis=1)
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            big = int(np.argmax(counts))
            members = np.flatnonzero(new == big)
            far = members[np.argmax(((X[members] - C[big]) ** 2).sum(1))]
            new[far] = j
            counts = np.bincount(new, minlength=k)
        if np.array_equal(new, assign):
            break
        assign = new
        for j in range(k):
            C[j] = X[assign == j].mean(axis=0)
    clusters = []
    for j in range(k):
        members = np.flatnonzero(assign == j)
        dist = np.sqrt(((X[members] - C[j]) ** 2).sum(1))
        clusters.append(Cluster(C[j].copy(), members, float(dist.mean())))
    return clusters


# ---------------------------------------------------------------- network


@dataclass(frozen=True)
class HiddenNode:
    mu: np.ndarray
    beta: float


@dataclass
class RbfNetwork:
    kind: EventLabel
    centers: np.ndarray  # m x p
    betas: np.ndarray  # m
    classes: tuple[str, ...]
    norm_stats: NormStats
    weights: np.ndarray | None = None  # m x c
    k: int = DEFAULT_K

    @property
    def hidden(self) -> list[HiddenNode]:
        return [HiddenNode(mu, float(b)) for mu, b in zip(self.centers, self.betas)]

    @property
    def m(self) -> int:
        return len(self.betas)

    @property
    def c(self) -> int:
        return len(self.classes)

    @property
    def trained(self) -> bool:
        return self.weights is not None

    def activation_matrix(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.centers.shape[1]:
            raise DimensionMismatch(f"expected {self.centers.shape[1]} features, got {X.shape[1]}")
        return np.exp(-self.betas[None, :] * _sq_dists(X, self.centers))

    def score_matrix(self, X) -> np.ndarray:
        if self.weights is None:
            raise UntrainedNetwork("network weights have not been trained")
        return self.activation_matrix(X) @ self.weights


def _beta_from_sigmas(sigmas: np.ndarray) -> np.ndarray:
    pos = sigmas[sigmas > 0]
    floor = pos.min() if pos.size else 1.0
    return 1.0 / (2.0 * np.where(sigmas > 0, sigmas, floor))


def subject_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def build_network(
    train: Mapping[str, np.ndarray],
    k: int = DEFAULT_K,
    seed: int = 0,
    kind=EventLabel.FIXATION,
    norm_stats: NormStats | None = None,
) -> RbfNetwork:
    """Hidden layer from per-subject k-means on already normalized features.

    ``train`` maps subject id to an (n_s x p) matrix; classes follow the
    mapping's iteration order.
    """
    kind = _kind(kind)
    classes = tuple(train)
    centers, sigmas = [], []
    for i, sid in enumerate(classes):
        X = _as_matrix(train[sid])
        if X.shape[0] < k:
            raise SubjectTooSparse(sid, X.shape[0], k)
        for cl in kmeans(X, k, subject_seed(seed, i)):
            centers.append(cl.centroid)
            sigmas.append(cl.sigma_avg)
    centers = np.vstack(centers)
    if norm_stats is None:
        p = centers.shape[1]
        norm_stats = NormStats(np.zeros(p), np.ones(p))
    return RbfNetwork(kind, centers, _beta_from_sigmas(np.asarray(sigmas)), classes, norm_stats, None, k)


def activations(net: RbfNetwork, x) -> np.ndarray:
    """Gaussian activations exp(-beta_i * ||x - mu_i||^2) for one normalized vector."""
    x = x.asarray() if isinstance(x, FeatureVector) else np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != net.centers.shape[1]:
        raise DimensionMismatch(f"expected a vector of {net.centers.shape[1]} features")
    d2 = ((net.centers - x[None, :]) ** 2).sum(1)
    return np.exp(-net.betas * d2)


def score(net: RbfNetwork, x) -> np.ndarray:
    """Class scores sum_i w[i, c] * phi_i(x), in ``net.classes`` order."""
    if net.weights is None:
        raise UntrainedNetwork("network weights have not been trained")
    return activations(net, x) @ net.weights


@dataclass
class TrainMatrices:
    A: np.ndarray
    Y: np.ndarray


def one_hot(labels: Sequence[int], c: int) -> np.ndarray:
    Y = np.zeros((len(labels), c))
    Y[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)] = 1.0
    return Y


def train_matrices(net: RbfNetwork, train: Mapping[str, np.ndarray]) -> TrainMatrices:
    blocks, labels = [], []
    for i, sid in enumerate(net.classes):
        X = _as_matrix(train[sid])
        blocks.append(X)
        labels.extend([i] * X.shape[0])
    A = net.activation_matrix(np.vstack(blocks))
    return TrainMatrices(A, one_hot(labels, net.c))


def train_weights(A, Y) -> np.ndarray:
    """Minimum-norm least-squares W for A @ W = Y via the SVD pseudoinverse.

    Singular values below max(n, m) * eps * s_max are treated as zero.
    """
    A = np.asarray(A, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if A.ndim != 2 or Y.ndim != 2 or A.shape[0] != Y.shape[0]:
        raise DimensionMismatch(f"A {A.shape} and Y {Y.shape} need equal row counts")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(Y))):
        raise NonFinite("A and Y must be finite")
    n, m = A.shape
    if n == 0 or m == 0:
        return np.zeros((m, Y.shape[1]))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    tol = max(n, m) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    keep = s > tol
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return Vt.T @ (s_inv[:, None] * (U.T @ Y))


def train_network(
    features: Mapping[str, np.ndarray],
    kind,
    k: int = DEFAULT_K,
    seed: int = 0,
) -> RbfNetwork:
    """Normalize raw per-subject features, build prototypes and fit weights."""
    kind = _kind(kind)
    mats = {sid: _as_matrix(v) for sid, v in features.items()}
    stats = fit_norm_stats(np.vstack([v for v in mats.values() if v.size]))
    normed = {sid: stats.apply(v) for sid, v in mats.items()}
    net = build_network(normed, k, seed, kind, stats)
    tm = train_matrices(net, normed)
    net.weights = train_weights(tm.A, tm.Y)
    return net


# ---------------------------------------------------------------- stream classification


@dataclass
class StreamResult:
    predicted: str
    scores: np.ndarray
    tie: bool = False
    n_fixations: int = 0
    n_saccades: int = 0
    classes: tuple[str, ...] = field(default_factory=tuple)


def _summed(net: RbfNetwork, raw: np.ndarray) -> np.ndarray:
    if raw.shape[0] == 0:
        return np.zeros(net.c)
    return net.score_matrix(net.norm_stats.apply(raw)).sum(axis=0)


def fuse_scores(fix_sum: np.ndarray, sacc_sum: np.ndarray, classes: Sequence[str]) -> StreamResult:
    fused = (np.asarray(fix_sum, dtype=float) + np.asarray(sacc_sum, dtype=float)) / 2.0
    best = int(np.argmax(fused))
    tie = int(np.count_nonzero(fused == fused[best])) > 1
    return StreamResult(classes[best], fused, tie, classes=tuple(classes))


def classify_features(fix_net: RbfNetwork, sacc_net: RbfNetwork, fix_raw, sacc_raw) -> StreamResult:
    """Fused decision for a stream given raw (unnormalized) feature matrices."""
    if tuple(fix_net.classes) != tuple(sacc_net.classes):
        raise ClassMismatch("fixation and saccade networks have different class lists")
    p_f = fix_net.centers.shape[1]
    p_s = sacc_net.centers.shape[1]
    fix_raw = np.asarray(fix_raw, dtype=float).reshape(-1, p_f)
    sacc_raw = np.asarray(sacc_raw, dtype=float).reshape(-1, p_s)
    if fix_raw.shape[0] + sacc_raw.shape[0] == 0:
        raise NoEvents("stream has no usable fixation or saccade events")
    res = fuse_scores(_summed(fix_net, fix_raw), _summed(sacc_net, sacc_raw), fix_net.classes)
    res.n_fixations = fix_raw.shape[0]
    res.n_saccades = sacc_raw.shape[0]
    return res


def classify_stream(fix_net: RbfNetwork, sacc_net: RbfNetwork, events: Sequence[GazeEvent]) -> StreamResult:
    """Identify the viewer behind a list of events.

    Smooth-pursuit and single-sample events carry no features and are skipped.
    """
    fix, sacc = [], []
    for ev in events:
        if ev.n_samples < 2:
            continue
        if ev.kind == EventLabel.FIXATION:
            fix.append(extract_features(ev, EventLabel.FIXATION).values)
        elif ev.kind == EventLabel.SACCADE:
            sacc.append(extract_features(ev, EventLabel.SACCADE).values)
    return classify_features(fix_net, sacc_net, np.array(fix, dtype=float), np.array(sacc, dtype=float))


# ---------------------------------------------------------------- model files


def save_network(net: RbfNetwork, path) -> None:
    """Write a trained network to a ``.npz`` model file (format version 1)."""
    if net.weights is None:
        raise UntrainedNetwork("refusing to save an untrained network")
    meta = {"format_version": MODEL_FORMAT_VERSION, "kind": net.kind.code, "classes": list(net.classes), "k": net.k}
    with open(path, "wb") as fh:
        np.savez(
            fh,
            meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
            centers=net.centers,
            betas=net.betas,
            weights=net.weights,
            norm_mean=net.norm_stats.mean,
            norm_std=net.norm_stats.std,
        )


def load_network(path) -> RbfNetwork:
    try:
        with np.load(Path(path), allow_pickle=False) as z:
            meta = json.loads(z["meta"].tobytes().decode("utf-8"))
            arrays = {name: z[name].copy() for name in ("centers", "betas", "weights", "norm_mean", "norm_std")}
    except (OSError, KeyError, ValueError) as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    if meta.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {meta.get('format_version')!r}")
    return RbfNetwork(
        kind=EventLabel.from_code(meta["kind"]),
        centers=arrays["centers"],
        betas=arrays["betas"],
        classes=tuple(meta["classes"]),
        norm_stats=NormStats(arrays["norm_mean"], arrays["norm_std"]),
        weights=arrays["weights"],
        k=int(meta["k"]),
    )

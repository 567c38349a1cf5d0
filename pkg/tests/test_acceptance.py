"""Acceptance criteria 1-12.

Every test prints one ``criterion NN: PASS|FAIL`` line (inline and again in
the terminal summary). Criteria 5-8 share one evaluation sweep over the
standard synthetic dataset.

Regenerate the gatekeeper golden transcript with GAZEGATE_UPDATE_GOLDEN=1.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, GENERATION_SECONDS, make_series
from gazegate.biometric import activations, build_network, score, train_weights
from gazegate.cli import run as cli_run
from gazegate.core import EventLabel
from gazegate.dataset import Aoi
from gazegate.evaluation import EvalConfig, evaluate_mechanisms, kl_divergence
from gazegate.gatekeeper import GatekeeperClient, GatekeeperServer, SessionPolicy, Tiling, prepare_source
from gazegate.privacy import MechanismConfig, SpatialGrid, apply_spatial, apply_temporal
from gazegate.synth import SynthConfig, generate_dataset

from test_biometric import hand_network, ridge_limit

GOLDEN = Path(__file__).parent / "golden" / "gatekeeper_session.txt"
WORKERS = max(1, min(4, os.cpu_count() or 1))
_T0: list[float] = []


@pytest.fixture(scope="module", autouse=True)
def _suite_clock():
    _T0.append(time.perf_counter())
    yield


@pytest.fixture
def verdict(capsys):
    def record(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n:02d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


# ------------------------------------------------------------- criterion 1


def brute_force_cells(values: np.ndarray, step: float, count: int) -> np.ndarray:
    """Exhaustive search over every cell [j*step, (j+1)*step); the last cell is open-ended."""
    lo = np.arange(count) * step
    hi = np.append(lo[1:], np.inf)
    out = np.empty_like(values)
    for start in range(0, len(values), 256):
        v = values[start : start + 256, None]
        hit = (lo[None, :] <= v) & (v < hi[None, :])
        assert np.all(hit.sum(axis=1) == 1)
        out[start : start + 256] = lo[hit.argmax(axis=1)]
    return out


def test_criterion_01_spatial_quantization_oracle(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    n_random = 10_000
    mismatches = 0
    for L in (1, 2, 4, 8, 16, 64):
        g = SpatialGrid.from_factor(L)
        sx, sy = 360.0 / g.N, 180.0 / g.M
        # random samples plus the awkward ones: cell corners and their float neighbours
        jx = rng.integers(0, g.N, 200) * sx
        jy = rng.integers(0, g.n_rows, 200) * sy
        xs = np.concatenate([rng.uniform(0, 360, n_random), jx, np.nextafter(jx, 0), [0.0, np.nextafter(360.0, 0)]])
        ys = np.concatenate([rng.uniform(0, 180, n_random), jy, np.nextafter(jy, 0), [0.0, np.nextafter(180.0, 0)]])
        out = apply_spatial(make_series(xs, ys, t=np.arange(len(xs), dtype=float)), L)
        mismatches += int(np.sum(out.x != brute_force_cells(xs, sx, g.N)))
        mismatches += int(np.sum(out.y != brute_force_cells(ys, sy, g.n_rows)))
    g2 = SpatialGrid.from_factor(2)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and (g2.M, g2.N) == (1080, 1920) and elapsed < 10.0
    verdict(1, ok, f"mismatches={mismatches}, L=2 grid M={g2.M} N={g2.N}, {elapsed:.1f}s")


# ------------------------------------------------------------- criterion 2


def test_criterion_02_temporal_indexing(verdict):
    bad = []
    for G in range(1, 101):
        s = make_series(np.full(G, 10.0), np.full(G, 90.0), t=np.arange(1, G + 1, dtype=float))
        for K in range(1, 11):
            kept = [int(t) for t in apply_temporal(s, K).t]  # t holds the 1-based index
            if kept != list(range(1, G + 1, K)):
                bad.append((G, K))
    example = [int(t) for t in apply_temporal(make_series([1.0] * 7, [1.0] * 7, t=np.arange(1, 8.0)), 3).t]
    verdict(2, not bad and example == [1, 4, 7], f"bad (G,K) pairs={len(bad)}, G=7 K=3 keeps {example}")


# ------------------------------------------------------------- criterion 3


def test_criterion_03_pseudoinverse_training(verdict):
    rng = np.random.default_rng(33)
    worst_full = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 21))
        A = rng.normal(size=(n, n))
        Y = rng.normal(size=(n, int(rng.integers(1, 6))))
        worst_full = max(worst_full, float(np.abs(A @ train_weights(A, Y) - Y).max()))
    worst_def = 0.0
    for _ in range(50):
        n, m = int(rng.integers(2, 21)), int(rng.integers(2, 21))
        r = int(rng.integers(1, min(n, m)))
        A = rng.normal(size=(n, r)) @ rng.normal(size=(r, m))
        Y = rng.normal(size=(n, 3))
        res = A @ train_weights(A, Y) - Y
        res_oracle = A @ ridge_limit(A, Y) - Y
        worst_def = max(worst_def, float(np.abs(res - res_oracle).max()))
    ok = worst_full < 1e-8 and worst_def < 1e-6
    verdict(3, ok, f"full-rank max residual={worst_full:.2e}, rank-deficient residual gap={worst_def:.2e}")


# ------------------------------------------------------------- criterion 4


def test_criterion_04_rbf_formula_oracle(verdict):
    rng = np.random.default_rng(44)
    worst = 0.0
    for _ in range(200):
        p = int(rng.integers(1, 6))
        centers = rng.normal(size=(2, p))
        betas = rng.uniform(0.05, 2.0, 2)
        weights = rng.normal(size=(2, 3))
        net = hand_network(centers, betas, weights, ("a", "b", "c"))
        x = rng.normal(size=p)
        # direct evaluation with scalar arithmetic
        phi = [math.exp(-betas[i] * sum((x[j] - centers[i][j]) ** 2 for j in range(p))) for i in range(2)]
        sc = [sum(weights[i][c] * phi[i] for i in range(2)) for c in range(3)]
        worst = max(worst, float(np.abs(activations(net, x) - phi).max()), float(np.abs(score(net, x) - sc).max()))
    pts = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 3.0], [0.0, -3.0]])  # centroid distances 1, 1, 3, 3
    beta = float(build_network({"a": pts}, k=1).betas[0])
    verdict(4, worst <= 1e-12 and beta == 0.25, f"max deviation={worst:.1e}, beta={beta!r}")


# --------------------------------------------------------- criteria 5 to 8

MECHS = {
    "identity": MechanismConfig.identity(),
    "temporal": MechanismConfig.temporal(3),
    "spatial": MechanismConfig.spatial(64),
    "gaussian": MechanismConfig.gaussian(10.0, 0),
}


@pytest.fixture(scope="module")
def sweep(standard_dataset):
    cfg = EvalConfig(runs=10, seed=0, train_fraction=0.75, workers=WORKERS)
    start = time.perf_counter()
    (identity,) = evaluate_mechanisms(standard_dataset, [MECHS["identity"]], cfg)
    identity_s = time.perf_counter() - start
    others = evaluate_mechanisms(standard_dataset, [MECHS[k] for k in ("temporal", "spatial", "gaussian")], cfg)
    reports = dict(zip(MECHS, [identity, *others]))
    return reports, identity_s


def test_criterion_05_baseline_signal(verdict, sweep):
    reports, seconds = sweep
    ir = reports["identity"].ir_mean
    chance = reports["identity"].chance_rate
    ok = ir >= 0.50 and ir >= 9 * chance and seconds < 180.0
    verdict(5, ok, f"identity ir_mean={ir:.3f} (chance {chance:.3f}), {seconds:.0f}s")


def test_criterion_06_mechanism_ordering(verdict, sweep):
    r, _ = sweep
    g, s, t, i = (r[k] for k in ("gaussian", "spatial", "temporal", "identity"))

    def separated(lo, hi):
        return hi.ir_mean - lo.ir_mean > max(lo.ir_std, hi.ir_std)

    ok = separated(g, s) and separated(s, t) and t.ir_mean <= i.ir_mean
    detail = " < ".join(f"{k}={r[k].ir_mean:.3f}+/-{r[k].ir_std:.3f}" for k in ("gaussian", "spatial", "temporal", "identity"))
    verdict(6, ok, detail)


def test_criterion_07_gaussian_effect(verdict, sweep):
    r, _ = sweep
    g, i = r["gaussian"].ir_mean, r["identity"].ir_mean
    verdict(7, g <= 0.6 * i, f"gaussian={g:.3f} <= 0.6*identity={0.6 * i:.3f}")


def test_criterion_08_utility_orderings(verdict, sweep):
    r, _ = sweep
    t, s, i = r["temporal"], r["spatial"], r["identity"]
    ok = (
        t.dwell_rmse_s < s.dwell_rmse_s
        and t.kl_divergence < s.kl_divergence
        and i.dwell_rmse_s == 0.0
        and i.kl_divergence == 0.0
    )
    detail = (
        f"dwell_rmse temporal={t.dwell_rmse_s:.4f}s spatial={s.dwell_rmse_s:.4f}s identity={i.dwell_rmse_s!r}; "
        f"kl temporal={t.kl_divergence:.4f} spatial={s.kl_divergence:.4f} identity={i.kl_divergence!r}"
    )
    verdict(8, ok, detail)


# ------------------------------------------------------------- criterion 9


def test_criterion_09_kl(verdict):
    hand = kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5]), eps=1e-12)
    rng = np.random.default_rng(99)
    lowest = math.inf
    for k in range(1000):
        shape = (18, 36) if k % 2 else (180, 360)
        p = rng.dirichlet(np.full(shape[0] * shape[1], 0.3)).reshape(shape)
        if k % 4 == 0:
            q = p.copy()  # identical maps
        elif k % 4 == 1:
            q = np.abs(p + rng.normal(0, 1e-9, shape))  # near-identical
            q /= q.sum()
        else:
            q = rng.dirichlet(np.full(p.size, 0.3)).reshape(shape)
            q[rng.random(shape) < 0.2] = 0.0  # sparse support
            q /= q.sum()
        lowest = min(lowest, kl_divergence(p, q))
    ok = abs(hand - 0.6931) <= 1e-3 and lowest >= 0.0
    verdict(9, ok, f"KL((1,0)||(0.5,0.5))={hand:.6f}, min over 1000 pairs={lowest:.3e}")


# ------------------------------------------------------------ criterion 10

WHOLE = {"x_min": 0.0, "x_max": 360.0, "y_min": 0.0, "y_max": 180.0}
SUMMARY_COORDS = {"centroid_x", "centroid_y", "landing_x", "landing_y"}
KEYSETS = {
    "fixation": {"event_id", "centroid_x", "centroid_y", "start_ms", "duration_ms"},
    "saccade": {"event_id", "landing_x", "landing_y", "start_ms", "duration_ms", "amplitude_deg"},
    "event": {"event_id", "kind", "phase", "t", "x", "y"},
    "sample": {"x", "y", "t"},
}


def gatekeeper_fixture():
    ds = generate_dataset(SynthConfig(subjects=2, stimuli=2, duration_s=2.0, seed=11))
    policy = SessionPolicy(
        saccade_phase_events=True,
        allow_tile_query=True,
        tiling=Tiling(4, 4),
        sample_stream=MechanismConfig.spatial(64),
    )
    return ds, policy


def scripted_session(client: GatekeeperClient, barrier: threading.Barrier | None = None) -> list[str]:
    client.call("open_session", {"source": {"subject_id": "s01", "stimulus_id": "img01"}})
    client.call("subscribe_events")
    if barrier is not None:
        barrier.wait()
    client.call("advance_clock", {"to": 600.0})
    _, fx = client.call("get_fixations", {"aoi": WHOLE})
    client.call("get_dwell_time", {"fixation_id": fx["ok"]["fixations"][0]["event_id"]})
    client.call("get_saccades", {"aoi": WHOLE})
    client.call("get_current_tile")
    client.call("stream_samples")
    client.call("advance_clock", {"by": 50.0})
    client.call("get_fixations", {"aoi": {"x_min": 0.0, "x_max": 180.0, "y_min": 0.0, "y_max": 180.0}})
    client.call("get_dwell_time", {"fixation_id": 9999})
    client.send_line("this is not json")
    client.read_frame()
    client.call("close")
    return list(client.transcript)


def schema_violations(transcript: list[str], series, events) -> list[str]:
    raw = set(series.x.tolist()) | set(series.y.tolist())
    grid = SpatialGrid.from_factor(64)
    problems = []

    def walk(obj, key=None, where=""):
        if isinstance(obj, dict):
            for k, v in obj.items():
                walk(v, k, f"{where}.{k}")
        elif isinstance(obj, list):
            for v in obj:
                walk(v, key, where)
        elif isinstance(obj, float) and obj in raw and key not in SUMMARY_COORDS | {"x", "y"}:
            problems.append(f"raw coordinate {obj} in {where}")

    for line in transcript:
        if not line.startswith("<"):
            continue
        frame = json.loads(line[1:])
        walk(frame)
        if "sample" in frame:
            s = frame["sample"]
            if set(s) != KEYSETS["sample"]:
                problems.append(f"sample keys {sorted(s)}")
            if s["x"] != round(s["x"] / grid.delta_x) * grid.delta_x or s["y"] != round(s["y"] / grid.delta_y) * grid.delta_y:
                problems.append(f"sample not quantized: {s}")
        elif "event" in frame:
            n = frame["event"]
            ev = events[n["event_id"]]
            expect = (ev.centroid_x, ev.centroid_y) if ev.kind == EventLabel.FIXATION else (ev.landing_x, ev.landing_y)
            if set(n) != KEYSETS["event"] or (n["x"], n["y"]) not in (expect, (None, None)):
                problems.append(f"event notice carries more than a summary point: {n}")
        elif "ok" in frame:
            ok = frame["ok"]
            for name in ("fixation", "saccade"):
                for item in ok.get(name + "s", []) if isinstance(ok, dict) else []:
                    if set(item) != KEYSETS[name]:
                        problems.append(f"{name} keys {sorted(item)}")
            if isinstance(ok, dict) and ({"x", "y"} & set(ok)):
                problems.append(f"response exposes x/y: {ok}")
    return problems


def test_criterion_10_gatekeeper_conformance(verdict):
    start = time.perf_counter()
    ds, policy = gatekeeper_fixture()
    series, events = prepare_source(ds.series("s01", "img01"))
    with GatekeeperServer(ds, policy).start() as srv:
        with GatekeeperClient(*srv.address) as c:
            transcript = scripted_session(c)

        barrier = threading.Barrier(2)
        results: dict[int, list[str]] = {}

        def worker(i):
            with GatekeeperClient(*srv.address) as c:
                results[i] = scripted_session(c, barrier)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=30)

    text = "\n".join(transcript) + "\n"
    if os.environ.get("GAZEGATE_UPDATE_GOLDEN") == "1":
        GOLDEN.parent.mkdir(exist_ok=True)
        GOLDEN.write_bytes(text.encode("utf-8"))
    golden_match = GOLDEN.is_file() and GOLDEN.read_bytes() == text.encode("utf-8")
    problems = schema_violations(transcript, series, events)
    # streamed frames must equal batch quantization of the source over the streamed window
    batch = apply_spatial(series, 64)
    window = (batch.t >= 600.0) & (batch.t <= 650.0)
    expected = [{"x": x, "y": y, "t": t} for x, y, t in zip(batch.x[window], batch.y[window], batch.t[window])]
    streamed = [json.loads(line[1:])["sample"] for line in transcript if line.startswith('<{"sample"')]
    if streamed != expected:
        problems.append("streamed samples differ from batch spatial quantization")
    concurrent_equal = len(results) == 2 and results[0] == results[1] == transcript
    elapsed = time.perf_counter() - start
    ok = golden_match and not problems and concurrent_equal and elapsed < 30.0
    detail = (
        f"golden={'match' if golden_match else 'MISMATCH'} ({len(transcript)} lines), "
        f"schema violations={len(problems)}, concurrent clients identical={concurrent_equal}, {elapsed:.1f}s"
    )
    verdict(10, ok, detail + ("" if not problems else f"; first: {problems[0]}"))


# ------------------------------------------------------------ criterion 11


def test_criterion_11_determinism(verdict, tmp_path):
    base = ["evaluate", "--mechanism", "identity,temporal:3,gaussian:10:1", "--runs", "10", "--seed", "7"]
    base += ["--subjects", "5", "--stimuli", "8", "--duration", "6", "--k", "8"]
    runs = {
        "serial_a": base + ["--out", str(tmp_path / "a")],
        "serial_b": base + ["--out", str(tmp_path / "b")],
        "parallel": base + ["--workers", "4", "--out", str(tmp_path / "p")],
    }
    codes = {name: cli_run(argv) for name, argv in runs.items()}
    same = all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / d / f).read_bytes()
        for d in ("b", "p")
        for f in ("report.csv", "report.txt")
    ) if set(codes.values()) == {0} else False
    verdict(11, same, f"exit codes={sorted(set(codes.values()))}, repeated and parallel reports byte-identical={same}")


# ------------------------------------------------------------ criterion 12


def test_criterion_12_budget(verdict):
    elapsed = time.perf_counter() - _T0[0] + GENERATION_SECONDS.get("standard", 0.0)
    verdict(12, elapsed < 600.0, f"acceptance suite {elapsed:.0f}s incl. dataset generation (budget 600s, {os.cpu_count()} cpu)")

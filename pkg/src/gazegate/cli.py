"""``gazegate`` command line.

Exit codes: 0 success, 1 domain error (bad data, invalid mechanism, ...),
2 usage error. Set GAZEGATE_LOG to off, info or debug for log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import signal
import sys
import threading
from pathlib import Path

import numpy as np

from .core import EventLabel, IvtParams, detect_events_ivt, segment_events
from .data_io import load_dataset, read_recording, write_dataset
from .dataset import Dataset
from .errors import GazeGateError
from .evaluation import EvalConfig, compare_utility, evaluate_mechanisms, privatize_dataset, reports_to_csv, reports_to_text
from .privacy import MechanismConfig
from .synth import PRESETS, SynthConfig, generate_dataset

log = logging.getLogger("gazegate")
LOG_LEVELS = {"off": None, "info": logging.INFO, "debug": logging.DEBUG}


def _configure_logging() -> None:
    name = os.environ.get("GAZEGATE_LOG", "").strip().lower()
    root = logging.getLogger("gazegate")
    if name == "off":
        root.disabled = True
        return
    level = LOG_LEVELS.get(name)
    if level is not None:
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        root.setLevel(level)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _synth_config(args) -> SynthConfig:
    return SynthConfig(
        subjects=args.subjects,
        stimuli=args.stimuli,
        duration_s=args.duration,
        rate_hz=args.rate,
        seed=args.synth_seed if hasattr(args, "synth_seed") else args.seed,
        aois_per_stimulus=args.aois,
        preset=args.preset,
        pursuit=args.pursuit,
    )


def _dataset(args) -> Dataset:
    if args.data is not None:
        return load_dataset(args.data)
    return generate_dataset(_synth_config(args))


def _mechanisms(values: list[str]) -> list[MechanismConfig]:
    out = []
    for v in values:
        out.extend(MechanismConfig.parse(part.strip()) for part in v.split(",") if part.strip())
    return out


# ---------------------------------------------------------------- subcommands


def cmd_synth(args) -> int:
    ds = generate_dataset(_synth_config(args))
    manifest = write_dataset(ds, args.out)
    print(f"wrote {len(ds.recordings)} recordings to {manifest}")
    return 0


def cmd_privatize(args) -> int:
    mech = MechanismConfig.parse(args.mechanism)
    ds = load_dataset(args.data)
    manifest = write_dataset(privatize_dataset(ds, mech, args.seed), args.out)
    print(f"applied {mech} to {len(ds.recordings)} recordings; wrote {manifest}")
    return 0


EVENT_COLUMNS = ("subject_id", "stimulus_id", "event_id", "kind", "start_ms", "end_ms", "duration_ms",
                 "centroid_x", "centroid_y", "amplitude_deg", "peak_velocity")


def cmd_detect(args) -> int:
    ds = load_dataset(args.data)
    params = IvtParams(velocity_threshold=args.threshold)
    labeled = ds.map_series(lambda s: detect_events_ivt(s, params) if len(s) >= 2 else s)
    write_dataset(labeled, args.out)
    rows = []
    for (sub, stim), series in sorted(labeled.recordings.items()):
        for i, ev in enumerate(segment_events(series)):
            rows.append([sub, stim, i, ev.kind.code, ev.start_ms, ev.end_ms, ev.duration_ms,
                         ev.centroid_x, ev.centroid_y, ev.amplitude_deg, ev.peak_velocity])
    out = Path(args.out) / "events.csv"
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        w.writerows([[f"{v:.10g}" if isinstance(v, float) else v for v in r] for r in rows])
    print(f"relabelled {len(labeled.recordings)} recordings, {len(rows)} events; wrote {out}")
    return 0


def cmd_evaluate(args) -> int:
    mechs = _mechanisms(args.mechanism or ["identity"])
    ds = _dataset(args)
    base = EvalConfig(
        train_fraction=args.train_fraction,
        runs=args.runs,
        seed=args.seed,
        k_clusters=args.k,
        relabel_after_mechanism=not args.keep_labels,
        comparison=args.comparison,
        utility=not args.no_utility,
        workers=args.workers,
    )
    reports = evaluate_mechanisms(ds, mechs, base)
    out = Path(args.out)
    _write(out / "report.csv", reports_to_csv(reports))
    text = reports_to_text(reports)
    _write(out / "report.txt", text)
    sys.stdout.write(text)
    return 0


def cmd_utility(args) -> int:
    a = load_dataset(args.original)
    b = load_dataset(args.privatized)
    rep = compare_utility(a, b, relabel_after=not args.keep_labels)
    _write(Path(args.out) / "utility.json", json.dumps(rep.to_dict(), indent=2) + "\n")
    fmt = lambda v: "n/a" if v is None else f"{v:.6g}"  # noqa: E731
    print(f"dwell RMSE {fmt(rep.dwell_rmse_s)} s, KL {fmt(rep.kl)}, prediction error delta {fmt(rep.pred_err_deg)} deg")
    return 0


def _policy(text: str | None):
    from .gatekeeper import SessionPolicy

    if text is None:
        return SessionPolicy()
    p = Path(text)
    doc = json.loads(p.read_text(encoding="utf-8") if p.is_file() else text)
    if not isinstance(doc, dict):
        raise ValueError("--policy must be a JSON object")
    return SessionPolicy.from_dict(doc)


def cmd_serve(args) -> int:
    from .gatekeeper import serve

    policy = _policy(args.policy)
    ds = _dataset(args)
    server = serve(args.listen, ds, policy)
    host, port = server.address
    print(f"listening on {host}:{port}", flush=True)
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    while not stop.wait(0.5):
        pass
    server.stop()
    print("server stopped", flush=True)
    return 0


def _series_stats(series) -> dict:
    counts = {lab.code: int(np.sum(series.e == int(lab))) for lab in EventLabel}
    return {
        "subject_id": series.subject_id,
        "stimulus_id": series.stimulus_id,
        "samples": len(series),
        "rate_hz": series.sampling_rate_hz,
        "duration_ms": float(series.t[-1] - series.t[0]) if len(series) else 0.0,
        "labels": counts,
        "irregular_gaps": int(series.irregular_gaps().size),
    }


def cmd_inspect(args) -> int:
    if args.recording is not None:
        info = _series_stats(read_recording(args.recording))
        lines = [f"{k}: {v}" for k, v in info.items()]
    else:
        ds = load_dataset(args.data)
        per = [_series_stats(s) for s in ds]
        total = sum(p["samples"] for p in per)
        info = {
            "name": ds.name,
            "rate_hz": ds.rate_hz,
            "subjects": len(ds.subjects),
            "stimuli": len(ds.stimuli),
            "recordings": len(ds.recordings),
            "aois": sum(len(s.aois) for s in ds.stimuli),
            "samples": total,
            "labels": {lab.code: sum(p["labels"][lab.code] for p in per) for lab in EventLabel},
        }
        lines = [f"{k}: {v}" for k, v in info.items()]
    print("\n".join(lines))
    if args.out is not None:
        _write(Path(args.out) / "inspect.json", json.dumps(info, indent=2, sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------- parser


def _add_synth_flags(p: argparse.ArgumentParser, seed_flag: str) -> None:
    g = p.add_argument_group("synthetic dataset")
    g.add_argument("--subjects", type=int, default=18)
    g.add_argument("--stimuli", type=int, default=50)
    g.add_argument("--duration", type=float, default=25.0, help="seconds per recording")
    g.add_argument("--rate", type=float, default=120.0, help="sampling rate in Hz")
    g.add_argument("--aois", type=int, default=2, help="AOIs per stimulus")
    g.add_argument("--preset", choices=PRESETS, default="distinct")
    g.add_argument("--pursuit", action="store_true", help="insert smooth-pursuit segments")
    g.add_argument(seed_flag, type=int, default=42, dest=seed_flag.lstrip("-").replace("-", "_"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazegate", description="Gaze privacy pipeline: synthesize, privatize, evaluate and serve.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_synth_flags(p, "--seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("privatize", help="apply a privacy mechanism to a dataset")
    p.add_argument("--data", required=True, help="dataset directory or manifest")
    p.add_argument("--mechanism", required=True, help="identity | gaussian:SIGMA:SEED | temporal:K | spatial:L")
    p.add_argument("--seed", type=int, default=0, help="mixed into per-recording noise seeds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_privatize)

    p = sub.add_parser("detect", help="relabel events with I-VT")
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=70.0, help="velocity threshold, deg/s")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="re-identification rate and utility per mechanism")
    p.add_argument("--data", help="dataset directory (default: synthesize one)")
    p.add_argument("--mechanism", action="append", help="mechanism string; repeat or comma-separate")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.75)
    p.add_argument("--k", type=int, default=16, help="clusters per subject")
    p.add_argument("--comparison", choices=("stream", "subject"), default="stream")
    p.add_argument("--keep-labels", action="store_true", help="do not re-run I-VT after the mechanism")
    p.add_argument("--no-utility", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    _add_synth_flags(p, "--synth-seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("utility", help="utility loss between an original and a privatized dataset")
    p.add_argument("--original", required=True)
    p.add_argument("--privatized", required=True)
    p.add_argument("--keep-labels", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_utility)

    p = sub.add_parser("serve", help="run the gatekeeper server")
    p.add_argument("--listen", default="127.0.0.1:0", help="HOST:PORT (port 0 picks a free port)")
    p.add_argument("--policy", help="default session policy as JSON text or a JSON file")
    p.add_argument("--data", help="dataset directory (default: synthesize one)")
    _add_synth_flags(p, "--synth-seed")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("inspect", help="print dataset or recording statistics")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data")
    src.add_argument("--recording")
    p.add_argument("--out")
    p.set_defaults(func=cmd_inspect)
    return parser


def run(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (GazeGateError, ValueError, OSError) as exc:
        print(f"gazegate {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

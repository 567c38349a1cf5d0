"""Line-oriented JSON wire protocol for the Gatekeeper, served over TCP.

Each request is one UTF-8 JSON object per line::

    {"op": "get_fixations", "args": {"aoi": {...}}, "req_id": 3}

and gets exactly one response line echoing ``req_id`` with either
``{"ok": result}`` or ``{"err": {"code", "msg"}}``. Event notices and
streamed samples are pushed as ``{"event": ...}`` / ``{"sample": ...}``
lines ahead of the ``advance_clock`` response that produced them.
"""

from __future__ import annotations

import json
import logging
import math
import socket
import socketserver
import threading
from typing import Any

from ..core import GazeEvent, GazeSeries
from ..data_io import format_real
from ..dataset import Aoi, Dataset
from ..errors import BindFailure, GazeGateError, InvalidAoi, NoData, PolicyDenied, SourceNotFound, UnknownFixation
from .session import Session, SessionPolicy, prepare_source

log = logging.getLogger(__name__)

MAX_LINE = 1 << 20
ERROR_CODES = {PolicyDenied: "POLICY_DENIED", UnknownFixation: "UNKNOWN_FIXATION", InvalidAoi: "INVALID_AOI", NoData: "NO_DATA"}


def encode(obj: Any) -> str:
    """Compact JSON with floats as plain decimals (shortest round-trip, no exponent)."""
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(int(obj))
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError("non-finite number cannot be serialized")
        return format_real(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k), ensure_ascii=False)}:{encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(encode(v) for v in obj) + "]"
    if hasattr(obj, "item"):
        return encode(obj.item())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class BadRequest(GazeGateError, ValueError):
    pass


class SourceCatalog:
    """Immutable replay sources shared read-only by all connections."""

    def __init__(self, dataset: Dataset) -> None:
        if not dataset.recordings:
            raise SourceNotFound("dataset has no recordings to serve")
        self.dataset = dataset
        self.default_key = min(dataset.recordings)
        self._prepared: dict[tuple[str, str], tuple[GazeSeries, list[GazeEvent]]] = {}
        self._lock = threading.Lock()

    def get(self, key: tuple[str, str] | None = None) -> tuple[tuple[str, str], GazeSeries, list[GazeEvent]]:
        key = self.default_key if key is None else key
        if key not in self.dataset.recordings:
            raise SourceNotFound(f"no recording for subject {key[0]!r}, stimulus {key[1]!r}")
        with self._lock:
            if key not in self._prepared:
                self._prepared[key] = prepare_source(self.dataset.recordings[key])
            series, events = self._prepared[key]
        return key, series, events


def _aoi(args: dict) -> Aoi:
    raw = args.get("aoi")
    if not isinstance(raw, dict):
        raise InvalidAoi("missing 'aoi' object")
    return Aoi.from_dict(raw)


def _number(args: dict, name: str) -> float | None:
    v = args.get(name)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise BadRequest(f"'{name}' must be a number")
    return float(v)


class Connection:
    """Protocol state for one client: at most one open session at a time."""

    def __init__(self, catalog: SourceCatalog, default_policy: SessionPolicy) -> None:
        self.catalog = catalog
        self.default_policy = default_policy
        self.session: Session | None = None
        self.opened = 0
        self.closed = False

    def handle_line(self, line: str) -> list[str]:
        """Frames (without newlines) answering one request line."""
        req_id = None
        try:
            try:
                req = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BadRequest(f"malformed JSON: {exc.msg}") from None
            if not isinstance(req, dict):
                raise BadRequest("request must be a JSON object")
            rid = req.get("req_id")
            if isinstance(rid, int) and not isinstance(rid, bool):
                req_id = rid
            else:
                raise BadRequest("'req_id' must be an integer")
            op = req.get("op")
            args = req.get("args", {})
            if not isinstance(op, str):
                raise BadRequest("'op' must be a string")
            if not isinstance(args, dict):
                raise BadRequest("'args' must be an object")
            handler = getattr(self, f"op_{op}", None)
            if handler is None:
                raise BadRequest(f"unknown op {op!r}")
            pushes, result = handler(args)
        except Exception as exc:  # every failure becomes a structured error
            code = next((c for t, c in ERROR_CODES.items() if isinstance(exc, t)), "BAD_REQUEST")
            if code == "BAD_REQUEST" and not isinstance(exc, (GazeGateError, ValueError, TypeError, KeyError)):
                log.exception("unexpected error handling request")
            return [encode({"req_id": req_id, "err": {"code": code, "msg": str(exc)}})]
        return [encode(p) for p in pushes] + [encode({"req_id": req_id, "ok": result})]

    # ------------------------------------------------------------------ ops

    def _need_session(self) -> Session:
        if self.session is None:
            raise BadRequest("no open session; call open_session first")
        return self.session

    def op_open_session(self, args: dict):
        if self.session is not None:
            raise BadRequest("a session is already open on this connection")
        src = args.get("source")
        key = None
        if src is not None:
            if not isinstance(src, dict) or not {"subject_id", "stimulus_id"} <= set(src):
                raise BadRequest("'source' needs subject_id and stimulus_id")
            key = (str(src["subject_id"]), str(src["stimulus_id"]))
        try:
            key, series, events = self.catalog.get(key)
        except SourceNotFound as exc:
            raise BadRequest(str(exc)) from None
        request = args.get("policy")
        if request is not None and not isinstance(request, dict):
            raise BadRequest("'policy' must be an object")
        policy = self.default_policy.narrow(request)
        self.opened += 1
        sid = f"{key[0]}/{key[1]}#{self.opened}"
        self.session = Session(series, policy, sid, events)
        return [], {
            "session_id": sid,
            "source": {"subject_id": key[0], "stimulus_id": key[1]},
            "policy": policy.to_dict(),
            "clock_ms": self.session.clock,
        }

    def op_advance_clock(self, args: dict):
        s = self._need_session()
        pushes = s.advance_clock(by=_number(args, "by"), to=_number(args, "to"))
        frames = [{kind: item.to_dict()} for kind, item in pushes]
        return frames, {"clock_ms": s.clock}

    def op_get_fixations(self, args: dict):
        s = self._need_session()
        return [], {"fixations": [f.to_dict() for f in s.get_fixations(_aoi(args))]}

    def op_get_dwell_time(self, args: dict):
        s = self._need_session()
        fid = args.get("fixation_id")
        if isinstance(fid, bool) or not isinstance(fid, int):
            raise UnknownFixation(f"fixation id {fid!r} was not returned by get_fixations in this session")
        return [], {"fixation_id": fid, "dwell_ms": s.get_dwell_time(fid)}

    def op_get_saccades(self, args: dict):
        s = self._need_session()
        return [], {"saccades": [v.to_dict() for v in s.get_saccades(_aoi(args))]}

    def op_subscribe_events(self, args: dict):
        s = self._need_session()
        sub = s.subscribe_events()
        return [], {"subscribed": True, "saccade_phases": sub.saccade_phases}

    def op_get_current_tile(self, args: dict):
        s = self._need_session()
        row, col = s.get_current_tile()
        return [], {"row": row, "col": col, "clock_ms": s.clock}

    def op_stream_samples(self, args: dict):
        s = self._need_session()
        stream = s.stream_samples()
        return [], {"streaming": True, "mechanism": str(stream.mechanism)}

    def op_close(self, args: dict):
        sid = self.session.session_id if self.session is not None else None
        self.session = None
        self.closed = True
        return [], {"closed": True, "session_id": sid}


class _Handler(socketserver.StreamRequestHandler):
    server: "GatekeeperServer"

    def handle(self) -> None:
        conn = Connection(self.server.catalog, self.server.default_policy)
        self.server._track(self.request, True)
        try:
            while not conn.closed:
                raw = self.rfile.readline(MAX_LINE + 1)
                if not raw:
                    break
                if len(raw) > MAX_LINE and not raw.endswith(b"\n"):
                    self._send([encode({"req_id": None, "err": {"code": "BAD_REQUEST", "msg": "request line too long"}})])
                    break
                try:
                    line = raw.decode("utf-8").strip()
                except UnicodeDecodeError:
                    self._send([encode({"req_id": None, "err": {"code": "BAD_REQUEST", "msg": "request is not UTF-8"}})])
                    continue
                if not line:
                    continue
                self._send(conn.handle_line(line))
        except (ConnectionError, OSError):
            pass
        finally:
            self.server._track(self.request, False)

    def _send(self, frames: list[str]) -> None:
        self.wfile.write(("".join(f + "\n" for f in frames)).encode("utf-8"))
        self.wfile.flush()


class GatekeeperServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    """One thread per connection; sources are shared read-only."""

    allow_reuse_address = True
    daemon_threads = False
    block_on_close = True

    def __init__(self, dataset: Dataset, policy: SessionPolicy | None = None, host: str = "127.0.0.1", port: int = 0) -> None:
        self.catalog = SourceCatalog(dataset)
        self.default_policy = policy or SessionPolicy()
        self._conns: set[socket.socket] = set()
        self._conns_lock = threading.Lock()
        self._thread: threading.Thread | None = None
        try:
            super().__init__((host, port), _Handler)
        except OSError as exc:
            raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.server_address[:2]
        return host, port

    def _track(self, sock: socket.socket, add: bool) -> None:
        with self._conns_lock:
            (self._conns.add if add else self._conns.discard)(sock)

    def start(self) -> "GatekeeperServer":
        self._thread = threading.Thread(target=self.serve_forever, name="gatekeeper", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        """Stop accepting, let in-flight requests finish, then close every connection."""
        self.shutdown()
        with self._conns_lock:
            conns = list(self._conns)
        for sock in conns:
            try:
                sock.shutdown(socket.SHUT_RD)
            except OSError:
                pass
        self.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self) -> "GatekeeperServer":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def parse_listen(listen: str) -> tuple[str, int]:
    host, sep, port = listen.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"listen address must look like HOST:PORT, got {listen!r}")
    return host or "127.0.0.1", int(port)


def serve(listen: str, dataset: Dataset, policy: SessionPolicy | None = None) -> GatekeeperServer:
    """Bind ``listen`` (``HOST:PORT``; port 0 picks a free one) and serve in a background thread."""
    host, port = parse_listen(listen)
    return GatekeeperServer(dataset, policy, host, port).start()

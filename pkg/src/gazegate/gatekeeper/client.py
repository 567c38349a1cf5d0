"""Minimal blocking client for the Gatekeeper wire protocol."""

from __future__ import annotations

import json
import socket


class GatekeeperClient:
    def __init__(self, host: str, port: int, timeout: float = 10.0) -> None:
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._reader = self.sock.makefile("rb")
        self._next_id = 1
        self.transcript: list[str] = []

    def send_line(self, line: str) -> None:
        self.transcript.append(">" + line)
        self.sock.sendall((line + "\n").encode("utf-8"))

    def read_frame(self) -> dict:
        raw = self._reader.readline()
        if not raw:
            raise ConnectionError("server closed the connection")
        text = raw.decode("utf-8").rstrip("\n")
        self.transcript.append("<" + text)
        return json.loads(text)

    def call(self, op: str, args: dict | None = None) -> tuple[list[dict], dict]:
        """Send one request; returns (pushed frames, response frame)."""
        rid = self._next_id
        self._next_id += 1
        self.send_line(json.dumps({"op": op, "args": args or {}, "req_id": rid}, separators=(",", ":")))
        pushes = []
        while True:
            frame = self.read_frame()
            if "req_id" in frame:
                return pushes, frame
            pushes.append(frame)

    def close(self) -> None:
        try:
            self._reader.close()
            self.sock.close()
        except OSError:
            pass

    def __enter__(self) -> "GatekeeperClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

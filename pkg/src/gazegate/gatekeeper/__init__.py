"""Gatekeeper: summary-level gaze queries, event notices and privatized sample streams."""

from .client import GatekeeperClient
from .server import Connection, GatekeeperServer, SourceCatalog, encode, parse_listen, serve
from .session import (
    EventSubscription,
    FixationSummary,
    GazeEventNotice,
    NoticePhase,
    SaccadeSummary,
    SampleStream,
    Session,
    SessionPolicy,
    StreamedSample,
    Tiling,
    exposes_raw,
    prepare_source,
)

__all__ = [
    "Connection",
    "EventSubscription",
    "FixationSummary",
    "GatekeeperClient",
    "GatekeeperServer",
    "GazeEventNotice",
    "NoticePhase",
    "SaccadeSummary",
    "SampleStream",
    "Session",
    "SessionPolicy",
    "SourceCatalog",
    "StreamedSample",
    "Tiling",
    "encode",
    "exposes_raw",
    "parse_listen",
    "prepare_source",
    "serve",
]

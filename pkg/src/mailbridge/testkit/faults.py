from __future__ import annotations

import socket
import threading
from dataclasses import dataclass
from typing import Callable

PHASES = ("after_forward", "after_state_write")


@dataclass(frozen=True)
class FaultPlan:
    """Failure behaviour for a mock server; applies to every connection.

    ``malformed_at_step`` counts server replies: 0 is the greeting, k the
    reply to the k-th client command (mail servers only).
    """

    close_on_accept: bool = False
    close_after_banner: bool = False
    close_after_octets: int | None = None
    malformed_at_step: int | None = None
    stream_error: str | None = None
    drop_after_messages: int | None = None


class SimulatedCrash(BaseException):
    """Raised by crash_hook; derives from BaseException so nothing swallows it."""


def crash_hook(phase: str, occurrence: int = 1) -> Callable[[str], None]:
    """Hook for run_once that dies the ``occurrence``-th time ``phase`` is reached."""
    if phase not in PHASES:
        raise ValueError(f"unknown phase {phase!r}")
    seen = 0
    lock = threading.Lock()

    def hook(current: str) -> None:
        nonlocal seen
        if current != phase:
            return
        with lock:
            seen += 1
            hit = seen == occurrence
        if hit:
            raise SimulatedCrash(phase)

    return hook


def unused_port() -> int:
    """A loopback port with nothing listening on it (connections are refused)."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]

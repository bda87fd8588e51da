from __future__ import annotations

import time
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Mapping, Optional

import orjson

from .errors import DerivationCancelled


def sse_event(payload: Mapping[str, Any], event: Optional[str] = None) -> bytes:
    """One Server-Sent Events frame carrying payload as JSON."""
    head = b"event: " + event.encode("utf-8") + b"\n" if event else b""
    return head + b"data: " + orjson.dumps(dict(payload)) + b"\n\n"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class CancelToken:
    """Cooperative cancellation checked between derivation steps."""

    deadline: Optional[float] = None

    @classmethod
    def after(cls, seconds: Optional[float]) -> "CancelToken":
        if seconds is None:
            return cls()
        return cls(deadline=time.monotonic() + seconds)

    @property
    def expired(self) -> bool:
        return self.deadline is not None and time.monotonic() >= self.deadline

    def check(self) -> None:
        if self.expired:
            raise DerivationCancelled("derivation cancelled: timeout reached")


def check_cancel(token: Optional[CancelToken]) -> None:
    if token is not None:
        token.check()

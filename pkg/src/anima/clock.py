"""Clock abstraction.

Everything time-related in the engine (message timestamps, latency
measurement, trace offsets) goes through a ``Clock`` so that deterministic
runs can freeze time: with a ``FixedClock`` two runs of the same scripted
conversation produce byte-identical transcript and trace files.
"""

from __future__ import annotations

import time
from datetime import datetime, timezone

ISO_MS = "%Y-%m-%dT%H:%M:%S.%f"


def truncate_ms(dt: datetime) -> datetime:
    """Truncate a datetime to millisecond precision."""
    return dt.replace(microsecond=(dt.microsecond // 1000) * 1000)


def format_ts(dt: datetime) -> str:
    """Render a UTC datetime as ISO-8601 with millisecond precision."""
    dt = truncate_ms(dt)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def parse_ts(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1]
    return datetime.strptime(text, ISO_MS).replace(tzinfo=timezone.utc)


class SystemClock:
    """Real wall-clock time."""

    def now(self) -> datetime:
        return truncate_ms(datetime.now(timezone.utc))

    def monotonic(self) -> float:
        return time.monotonic()


class FixedClock:
    """A clock frozen at a single instant.

    Used for deterministic replay: all timestamps collapse to the epoch and
    all measured durations are zero, so ordering falls back to message ids,
    which are deterministic counters.
    """

    def __init__(self, epoch: datetime | None = None):
        self.epoch = truncate_ms(epoch or datetime(2026, 1, 1, tzinfo=timezone.utc))

    def now(self) -> datetime:
        return self.epoch

    def monotonic(self) -> float:
        return 0.0

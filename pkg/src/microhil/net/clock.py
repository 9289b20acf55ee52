"""Fixed-rate tick scheduling with jitter accounting.

Deadlines are absolute (start + k * ts), so individual sleep errors do
not accumulate and the mean period stays pinned to ts. Overruns are
counted and logged, never silently skipped: the loop catches up while
keeping every tick index.
"""

from __future__ import annotations

import logging
import time

log = logging.getLogger(__name__)

MODE_REALTIME = "realtime"
MODE_ACCELERATED = "accelerated"


class LoopClock:
    """Paces a tick loop at ts seconds per tick.

    In accelerated mode ticks fire back to back with identical indexing
    semantics. Jitter beyond 0.2 * ts and overruns are recorded in the
    stats the services expose after a run.
    """

    def __init__(self, ts: float = 0.1, mode: str = MODE_REALTIME):
        if ts <= 0:
            raise ValueError("ts must be positive")
        if mode not in (MODE_REALTIME, MODE_ACCELERATED):
            raise ValueError(f"unknown clock mode {mode!r}")
        self.ts = ts
        self.mode = mode
        self.tick_count = 0
        self.overruns = 0
        self.jitter_events = 0
        self.tick_times: list[float] = []
        self._start: float | None = None

    def start(self) -> None:
        self._start = time.monotonic()
        self.tick_count = 0

    def wait_tick(self) -> int:
        """Block until the next tick deadline; returns the tick index."""
        if self._start is None:
            self.start()
        index = self.tick_count
        self.tick_count += 1
        if self.mode == MODE_ACCELERATED:
            return index
        deadline = self._start + index * self.ts
        now = time.monotonic()
        lag = now - deadline
        if lag > 0.2 * self.ts and index > 0:
            self.jitter_events += 1
            if lag > self.ts:
                self.overruns += 1
                log.warning("tick %d overran by %.1f ms", index, lag * 1e3)
        if lag < 0:
            time.sleep(-lag)
        self.tick_times.append(time.monotonic())
        return index

    def mean_period(self) -> float:
        """Mean achieved tick period in seconds (realtime runs only)."""
        if len(self.tick_times) < 2:
            return float("nan")
        return (self.tick_times[-1] - self.tick_times[0]) / (len(self.tick_times) - 1)

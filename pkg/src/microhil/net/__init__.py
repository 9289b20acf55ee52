"""Runtime services: tick loops, delay injection, records, TCP endpoints."""

from .delay import DelayLine
from .clock import LoopClock

__all__ = ["DelayLine", "LoopClock"]

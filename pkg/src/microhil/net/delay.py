"""Deterministic step-delay FIFO for injected measurement/command latency."""

from __future__ import annotations

from collections import deque


class DelayLine:
    """Fixed-depth FIFO: the payload pushed at tick k emerges at tick
    k + depth. Depth 0 passes straight through; until the line fills,
    stepping yields None."""

    def __init__(self, depth: int):
        if depth < 0:
            raise ValueError("delay depth must be >= 0")
        self.depth = depth
        self._fifo: deque = deque()

    def step(self, payload):
        if self.depth == 0:
            return payload
        self._fifo.append(payload)
        if len(self._fifo) > self.depth:
            return self._fifo.popleft()
        return None

    def __len__(self) -> int:
        return len(self._fifo)

"""Sender-uplink bandwidth model.

Each node pushes bytes onto the wire through a single FIFO uplink.  A send
starts when the uplink is free, occupies it for ``ceil(size / uplink)``
ticks and arrives ``latency`` (+ jitter) ticks after transmission ends.
Deliveries on one directed link never overtake each other.
"""

from __future__ import annotations

import random
from dataclasses import dataclass


@dataclass(frozen=True)
class NetworkModel:
    uplink: tuple  # bytes per tick, indexed by node id
    latency: int = 0
    jitter: int = 0
    loss: float = 0.0

    def __post_init__(self):
        if any(u <= 0 for u in self.uplink):
            raise ValueError("uplink must be positive")
        if self.latency < 0 or self.jitter < 0:
            raise ValueError("latency and jitter must be non-negative")
        if not 0.0 <= self.loss < 1.0:
            raise ValueError("loss must lie in [0, 1)")

    def transmit_ticks(self, sender: int, nbytes: int) -> int:
        return -(-nbytes // self.uplink[sender])


class Links:
    """Mutable per-run link state for a :class:`NetworkModel`."""

    def __init__(self, model: NetworkModel, rng: random.Random):
        n = len(model.uplink)
        self.model = model
        self.rng = rng
        self.uplink_free = [0] * n
        self.busy = [0] * n  # total transmit ticks per sender
        self._last = {}

    def send(self, sender: int, dest: int, nbytes: int, now: int):
        """Schedule one transmission; return ``(deliver_time, dropped)``."""
        m = self.model
        start = max(now, self.uplink_free[sender])
        tx = m.transmit_ticks(sender, nbytes)
        done = start + tx
        self.uplink_free[sender] = done
        self.busy[sender] += tx
        delay = m.latency
        if m.jitter:
            delay += self.rng.randint(0, m.jitter)
        dropped = bool(m.loss) and self.rng.random() < m.loss
        at = done + delay
        key = (sender, dest)
        prev = self._last.get(key, 0)
        if at < prev:
            at = prev
        self._last[key] = at
        return at, dropped

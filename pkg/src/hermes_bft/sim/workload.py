"""Deterministic client transaction stream.

Transaction ``k`` is a pure function of the workload seed and ``k``.  The
stream is shared read-only by every node (it stands in for the clients'
broadcast to all replicas) and is materialised lazily.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Optional

from ..crypto import sha256
from ..encoding import size
from ..messages import Transaction

N_CLIENTS = 64


class Workload:
    """Open-loop stream of fixed-size transactions.

    ``rate`` is transactions per tick; ``None`` means every transaction is
    available from tick 0 (saturated clients).
    """

    def __init__(self, seed: bytes, tx_size: int = 128, rate=None):
        self.seed = seed
        self.rate = None if rate is None else Fraction(rate)
        self._txs: list[Transaction] = []
        probe = Transaction(0, 0, b"")
        overhead = size(probe)
        if tx_size < overhead:
            raise ValueError(f"tx_size must be at least {overhead}")
        self.op_len = tx_size - overhead
        self.tx_bytes = tx_size

    def arrival(self, k: int) -> int:
        if self.rate is None:
            return 0
        return int(k / self.rate)

    def _make(self, k: int) -> Transaction:
        chunk = sha256(self.seed + k.to_bytes(8, "big"))
        reps = self.op_len // 32 + 1
        op = (chunk * reps)[:self.op_len]
        return Transaction(k % N_CLIENTS, self.arrival(k), op)

    def get(self, k: int, now: int) -> Optional[Transaction]:
        """Transaction ``k`` if it has arrived by ``now``."""
        if self.arrival(k) > now:
            return None
        txs = self._txs
        while len(txs) <= k:
            txs.append(self._make(len(txs)))
        return txs[k]

from __future__ import annotations

from collections import deque

import pytest

from hermes_bft.crypto import KeyRing
from hermes_bft.encoding import digest
from hermes_bft.messages import Block, BlockHeader, Payload, Transaction, signing_digest
from hermes_bft.node import _NOSIG, Config, Node, Send
from hermes_bft.sim.workload import Workload

SEED = bytes(range(32))

# view 0: primary 0, committee {1,2}; view 1: primary 3, committee {1,2}
T4_ASSIGNMENTS = ((0, 0, (1, 2)), (1, 3, (1, 2)))


def t4_config(**kw) -> Config:
    kw.setdefault("fixed_assignments", T4_ASSIGNMENTS)
    kw.setdefault("block_size", 512)
    return Config(4, 1, 2, run_seed=SEED, **kw)


def signed_header(keys: KeyRing, signer: int, v: int, s: int, payload: Payload,
                  d: bytes) -> BlockHeader:
    tmp = BlockHeader(v, s, digest(payload), d, _NOSIG)
    return BlockHeader(v, s, tmp.h, d, keys.signer(signer).sign(signing_digest(tmp)))


def make_block(keys: KeyRing, signer: int, v: int, s: int, d: bytes,
               txs=(), o=()) -> Block:
    payload = Payload(tuple(txs))
    return Block(signed_header(keys, signer, v, s, payload, d), tuple(o), payload)


def tx(k: int, size: int = 16) -> Transaction:
    return Transaction(k, k, bytes([k % 256]) * size)


def sends(outputs, kind=None):
    """Flatten Send outputs into ``(dests, msg)`` pairs, optionally by type."""
    return [(o.dests, o.msg) for o in outputs
            if isinstance(o, Send) and (kind is None or isinstance(o.msg, kind))]


def events(outputs, kind):
    return [o for o in outputs if isinstance(o, kind)]


class Cluster:
    """In-memory router for a handful of nodes.

    Messages are delivered one at a time in FIFO order with no clock; timers
    only fire when a test calls :meth:`fire`.
    """

    def __init__(self, cfg: Config, workload=True):
        self.cfg = cfg
        self.keys = KeyRing(cfg.run_seed, cfg.n)
        wl = Workload(cfg.run_seed, 128) if workload else None
        self.nodes = [Node(i, cfg, self.keys, wl) for i in range(cfg.n)]
        self.queue: deque = deque()
        self.log: list = []  # (node, output) in emission order
        self.down: set = set()
        self.drop = None  # predicate (sender, dest, msg) -> bool
        self.now = 0

    def _absorb(self, i: int, outputs):
        for o in outputs:
            self.log.append((i, o))
            if isinstance(o, Send):
                for d in o.dests:
                    self.queue.append((d, o.msg, i))

    def start(self, ids=None):
        for i in ids if ids is not None else range(self.cfg.n):
            if i not in self.down:
                self._absorb(i, self.nodes[i].start(self.now))

    def deliver(self, limit: int = 100_000) -> int:
        count = 0
        while self.queue and count < limit:
            d, msg, src = self.queue.popleft()
            count += 1
            if d in self.down or src in self.down:
                continue
            if self.drop is not None and self.drop(src, d, msg):
                continue
            self._absorb(d, self.nodes[d].handle(msg, src, self.now))
        return count

    def inject(self, dest: int, msg, sender: int):
        self._absorb(dest, self.nodes[dest].handle(msg, sender, self.now))

    def fire(self, ids=None):
        """Expire the current block timer at each listed node."""
        for i in ids if ids is not None else range(self.cfg.n):
            if i in self.down:
                continue
            node = self.nodes[i]
            self._absorb(i, node.on_timer(node.timer_token, self.now))

    def outputs_of(self, i: int, kind=None):
        return [o for j, o in self.log if j == i
                and (kind is None or isinstance(o, kind))]

    def heights(self):
        return [n.tip_s for n in self.nodes]


@pytest.fixture
def t4():
    return Cluster(t4_config())


# -- acceptance reporting -------------------------------------------------------------

_criteria: dict = {}  # number -> [title, passed, details]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    num, title = marker.args
    entry = _criteria.setdefault(num, [title, True, []])
    if not rep.passed:
        entry[1] = False
    if rep.when == "call":
        entry[2].extend(v for k, v in item.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, ok, details = _criteria[num]
        line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {title}"
        if details:
            line += "  [" + "; ".join(details) + "]"
        terminalreporter.write_line(line)

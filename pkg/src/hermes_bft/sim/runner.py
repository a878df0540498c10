"""Discrete-event loop driving a set of nodes over the network model."""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass
from typing import Optional

from ..baseline import BaselineNode, BCert, BPropose, BVote
from ..crypto import KeyRing
from ..encoding import size
from ..messages import (
    Approval, Confirm, PrePrepare, PreProposal, Proposal, signing_digest,
)
from ..node import (
    BlacklistEvidence, Committed, Config, Node, Proposed, Revoked, Send,
    SetTimer, ToClients, ViewChangeStarted, ViewInstalled,
)
from .adversary import Out, adversary_step
from .network import Links, NetworkModel
from .trace import (
    RAccept, RBlacklist, RCommit, REnd, RHeader, RPropose, RRevoke, RSend,
    RView, Trace,
)
from .workload import Workload

_DELIVER, _TIMER, _START = 0, 1, 2
STARVED_MARGIN = 8


class InvalidScenario(ValueError):
    pass


def run_seed(seed: int) -> bytes:
    return hashlib.sha256(b"hermes-run" + seed.to_bytes(8, "big")).digest()


def msg_height(msg) -> int:
    """Block height a message is about (0 for view-level messages)."""
    t = type(msg)
    if t is PrePrepare:
        return msg.block.s
    if t is PreProposal or t is Confirm or t is BVote:
        return msg.s
    if t is Proposal:
        return msg.beta.rho.s
    if t is Approval:
        return msg.cert.s
    if t is BPropose:
        return msg.block.s
    if t is BCert:
        return msg.cert.s
    return 0


@dataclass
class _Client:
    """Virtual clients: accept a block once 2f+1 nodes answered for it."""
    quorum: int
    keys: KeyRing

    def __post_init__(self):
        self.votes: dict = {}
        self.accepted: set = set()

    def on_response(self, resp) -> Optional[tuple]:
        key = (resp.s, resp.h)
        if key in self.accepted:
            return None
        voters = self.votes.setdefault(key, set())
        if resp.i in voters or resp.sig.signer != resp.i:
            return None
        voters.add(resp.i)
        if len(voters) >= self.quorum:
            self.accepted.add(key)
            del self.votes[key]
            return key
        return None


class Simulation:
    def __init__(self, sc, protocol: Optional[str] = None,
                 keep_sends: bool = True):
        protocol = protocol or sc.protocol
        if protocol not in ("hermes", "baseline"):
            raise InvalidScenario("protocol must be hermes or baseline for a run")
        if len(sc.byzantine) > sc.f:
            raise InvalidScenario("more than f byzantine nodes")
        self.sc = sc
        self.protocol = protocol
        seed = run_seed(sc.seed)
        fixed = ()
        if sc.committee is not None:
            fixed = ((0, sc.primary, tuple(sc.committee)),)
        self.cfg = Config(sc.n, sc.f, sc.c, timeout_base=sc.timeout_base,
                          backoff=sc.backoff, pipelined=sc.pipelined,
                          pipeline_depth=sc.pipeline_depth,
                          block_size=sc.block_size, run_seed=seed,
                          fixed_assignments=fixed)
        self.keys = KeyRing(seed, sc.n)
        self.workload = Workload(seed, sc.tx_size, sc.tx_rate)
        self.primary0 = self.cfg.assignment(0).primary
        uplink = [sc.uplink] * sc.n
        if sc.primary_uplink is not None:
            uplink[self.primary0] = sc.primary_uplink
        for node, bw in sc.uplinks:
            uplink[node] = bw
        self.net = NetworkModel(tuple(uplink), sc.latency, sc.jitter, sc.loss)
        self.rng = random.Random(seed)
        self.links = Links(self.net, self.rng)
        self.byzantine = frozenset(sc.byzantine)
        self.honest = tuple(i for i in range(sc.n) if i not in self.byzantine)
        if protocol == "hermes":
            self.nodes = [Node(i, self.cfg, self.keys, self.workload)
                          for i in range(sc.n)]
            for i in self.byzantine:
                spec = sc.strategy_of(i)
                if spec is not None and spec.name == "equivocate":
                    self.nodes[i].equivocating = True
        else:
            self.nodes = [BaselineNode(i, sc.n, sc.f, self.keys, self.primary0,
                                       sc.block_size, self.workload)
                          for i in range(sc.n)]
        self.client = _Client(2 * sc.f + 1, self.keys)
        self.trace = Trace(RHeader(protocol, sc.n, sc.f, sc.c, sc.seed,
                                   tuple(sorted(self.byzantine)), sc.tick_us,
                                   sc.epochs), keep_sends=keep_sends)
        self._queue: list = []
        self._seq = 0
        self.now = 0
        self.heights = [0] * sc.n
        self.crashed: set = set()
        self.sent_msgs = 0
        self.sent_bytes = 0
        self.accepted_height = 0

    # -- event queue ------------------------------------------------------------

    def _push(self, time: int, kind: int, a, b=None, c=None):
        self._seq += 1
        heapq.heappush(self._queue, (time, self._seq, kind, a, b, c))

    def _done(self) -> bool:
        target = self.sc.epochs
        if self.accepted_height >= target + STARVED_MARGIN:
            # honest stragglers the adversary keeps starving do not hold the run
            return True
        return all(self.heights[i] >= target for i in self.honest)

    def run(self) -> Trace:
        for i in range(self.sc.n):
            self._push(0, _START, i)
        reason = "drained"
        max_ticks = self.sc.max_ticks
        while self._queue:
            time, _, kind, a, b, c = heapq.heappop(self._queue)
            if time > max_ticks:
                reason = "max_ticks"
                self.now = max_ticks
                break
            self.now = time
            if kind == _DELIVER:
                node = self.nodes[a]
                if a in self.crashed:
                    continue
                outputs = node.handle(b, c, time)
            elif kind == _TIMER:
                if a in self.crashed:
                    continue
                outputs = self.nodes[a].on_timer(b, time)
            else:
                outputs = self.nodes[a].start(time)
            self._apply(a, outputs)
            if self._done():
                reason = "target"
                break
        self.trace.add(REnd(self.now, reason))
        self.end_reason = reason
        return self.trace

    # -- outputs ------------------------------------------------------------------

    def _apply(self, i: int, outputs: list):
        now = self.now
        byz = i in self.byzantine
        spec = self.sc.strategy_of(i) if byz else None
        if spec is not None:
            if spec.name == "crash" and now >= spec.at:
                self.crashed.add(i)
                return
            sends = adversary_step(spec, self.nodes[i], outputs, now,
                                   self.byzantine)
        else:
            sends = [Out(o.dests, o.msg) for o in outputs if isinstance(o, Send)]
        trace = self.trace
        for o in outputs:
            t = type(o)
            if t is Send:
                continue
            if t is SetTimer:
                self._push(o.deadline, _TIMER, i, o.token)
            elif t is Committed:
                if o.s > self.heights[i]:
                    self.heights[i] = o.s
                trace.add(RCommit(now, i, o.s, o.h, o.v, o.ntx, o.signers))
            elif t is Revoked:
                self.heights[i] = min(self.heights[i], o.s - 1)
                trace.add(RRevoke(now, i, o.s, o.h))
            elif t is Proposed:
                trace.add(RPropose(now, i, o.s, o.h, o.ntx))
            elif t is ToClients:
                resp = o.msg
                if self.keys.verify_sig(resp.sig, signing_digest(resp)):
                    key = self.client.on_response(resp)
                    if key is not None:
                        self.accepted_height = max(self.accepted_height, resp.s)
                        trace.add(RAccept(now, resp.s, resp.h, resp.ntx))
            elif t is BlacklistEvidence:
                trace.add(RBlacklist(now, i, o.signers))
            elif t is ViewChangeStarted:
                trace.add(RView(now, i, o.v, False))
            elif t is ViewInstalled:
                trace.add(RView(now, i, o.v, True))
        for o in sends:
            self._transmit(i, o)

    def _transmit(self, i: int, o: Out):
        msg = o.msg
        nbytes = size(msg)
        kind = type(msg).__name__
        height = msg_height(msg)
        start = self.now + o.delay
        links = self.links
        trace = self.trace
        for d in o.dests:
            at, dropped = links.send(i, d, nbytes, start)
            trace.add(RSend(self.now, i, d, kind, height, nbytes, at, dropped))
            self.sent_msgs += 1
            self.sent_bytes += nbytes
            if not dropped:
                self._push(at, _DELIVER, d, msg, i)


def simulate(sc, protocol: Optional[str] = None, keep_sends: bool = True):
    sim = Simulation(sc, protocol, keep_sends)
    sim.run()
    return sim

"""Fixed-leader star-broadcast BFT comparator.

The leader sends every block to all other nodes.  Each node votes back to
the leader, which broadcasts the first-round certificate; a second vote
round and certificate follow, and nodes commit on the second certificate.
The leader proposes the next block as soon as the first-round certificate
of the previous one exists.

Only the bandwidth-relevant shape is modelled: no leader rotation, no
timeouts and no fork handling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .crypto import KeyRing, Signature
from .encoding import digest as obj_digest, wire
from .messages import (
    ApprovalCert, Block, BlockHeader, ClientResponse, Payload, signing_digest,
    vote_digest,
)
from .node import GENESIS, Committed, Proposed, Send, ToClients, _NOSIG


@wire(60)
@dataclass(frozen=True)
class BPropose:
    block: Block


@wire(61)
@dataclass(frozen=True)
class BVote:
    phase: int
    s: int
    h: bytes
    j: int
    sig: Signature

    VOTE_FIELDS = ("phase", "s", "h")


@wire(62)
@dataclass(frozen=True)
class BCert:
    phase: int
    cert: ApprovalCert


def bvote_digest(phase: int, s: int, h: bytes) -> bytes:
    return vote_digest(BVote, phase=phase, s=s, h=h)


class BaselineNode:
    def __init__(self, node_id: int, n: int, f: int, keys: KeyRing, leader: int,
                 block_size: int, workload=None):
        self.id = node_id
        self.n = n
        self.f = f
        self.keys = keys
        self.signer = keys.signer(node_id)
        self.leader = leader
        self.block_size = block_size
        self.workload = workload
        self.blocks = [GENESIS]
        self.known = {GENESIS.digest: GENESIS}
        self.head = GENESIS  # last proposed (leader) or received block
        self.pending_commit: dict[int, ApprovalCert] = {}
        self.tally: dict[tuple, dict] = {}
        self.certified: set = set()
        self.mp_cursor = 0
        self._out: list = []

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1

    @property
    def tip_s(self) -> int:
        return len(self.blocks) - 1

    def _others(self):
        return tuple(i for i in range(self.n) if i != self.id)

    def _sign(self, d: bytes) -> Signature:
        return self.signer.sign(d)

    def start(self, now: int = 0) -> list:
        self.now = now
        self._out = []
        if self.id == self.leader:
            self._propose()
        return self._out

    def on_timer(self, token: int, now: int) -> list:
        return []

    def handle(self, msg, sender: int, now: int) -> list:
        self.now = now
        self._out = []
        if isinstance(msg, BPropose):
            self._on_propose(msg.block, sender)
        elif isinstance(msg, BVote):
            self._on_vote(msg)
        elif isinstance(msg, BCert):
            self._on_cert(msg)
        return self._out

    # -- leader ---------------------------------------------------------------

    def _take_txs(self):
        wl = self.workload
        if wl is None:
            return ()
        out = []
        budget = self.block_size
        i = self.mp_cursor
        while budget >= wl.tx_bytes:
            tx = wl.get(i, self.now)
            if tx is None:
                break
            out.append(tx)
            budget -= wl.tx_bytes
            i += 1
        self.mp_cursor = i
        return tuple(out)

    def _propose(self):
        payload = Payload(self._take_txs())
        parent = self.head
        tmp = BlockHeader(0, parent.s + 1, obj_digest(payload), parent.digest, _NOSIG)
        header = BlockHeader(0, parent.s + 1, tmp.h, parent.digest,
                             self._sign(signing_digest(tmp)))
        block = Block(header, (), payload)
        self.known[block.digest] = block
        self.head = block
        self._out.append(Proposed(block.s, block.digest, len(block.txs)))
        self._out.append(Send(self._others(), BPropose(block)))
        self._vote(1, block.s, block.digest)

    def _on_vote(self, msg: BVote):
        if self.id != self.leader or msg.sig.signer != msg.j:
            return
        key = (msg.phase, msg.s, msg.h)
        if key in self.certified:
            return
        if not self.keys.verify_sig(msg.sig, bvote_digest(*key)):
            return
        tally = self.tally.setdefault(key, {})
        tally[msg.j] = msg.sig
        if len(tally) < self.quorum:
            return
        self.certified.add(key)
        agg = self.keys.aggregate(tally.values(), bvote_digest(*key), self.quorum)
        del self.tally[key]
        cert = BCert(msg.phase, ApprovalCert(msg.phase, msg.s, msg.h, agg))
        self._out.append(Send(self._others(), cert))
        self._on_cert(cert)
        if msg.phase == 1 and msg.s == self.head.s:
            self._propose()

    # -- replicas -----------------------------------------------------------------

    def _vote(self, phase: int, s: int, h: bytes):
        vote = BVote(phase, s, h, self.id, self._sign(bvote_digest(phase, s, h)))
        if self.id == self.leader:
            self._on_vote(vote)
        else:
            self._out.append(Send((self.leader,), vote))

    def _on_propose(self, block: Block, sender: int):
        hdr = block.header
        if sender != self.leader or hdr.proposer != self.leader:
            return
        if hdr.d != self.head.digest or hdr.s != self.head.s + 1:
            return
        if obj_digest(block.m) != hdr.h:
            return
        self.known[block.digest] = block
        self.head = block
        self._vote(1, block.s, block.digest)

    def _on_cert(self, bc: BCert):
        cert = bc.cert
        if not self.keys.verify_aggregate(
                cert.sigma, bvote_digest(bc.phase, cert.s, cert.h), self.quorum):
            return
        if bc.phase == 1:
            self._vote(2, cert.s, cert.h)
            return
        self.pending_commit[cert.s] = cert
        while self.tip_s + 1 in self.pending_commit:
            c = self.pending_commit.pop(self.tip_s + 1)
            block = self.known.get(c.h)
            if block is None or block.header.d != self.blocks[-1].digest:
                self.pending_commit[c.s] = c
                break
            self.blocks.append(block)
            self._out.append(Committed(block.s, block.digest, 0, len(block.txs),
                                        c.sigma.signers))
            tmp = ClientResponse(block.s, 0, block.digest, len(block.txs), self.id,
                                 _NOSIG)
            resp = ClientResponse(block.s, 0, block.digest, len(block.txs), self.id,
                                  self._sign(signing_digest(tmp)))
            self._out.append(ToClients(resp))

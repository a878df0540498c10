"""Per-node Hermes state machine.

A :class:`Node` consumes one input at a time (a delivered message, a timer
expiry, or ``start``) and returns an ordered list of outputs: ``Send`` with
explicit destination ids, ``SetTimer``, ``ToClients`` and harness events.
Given the same state and input it always produces the same outputs.

Messages a node addresses to itself are never put on the wire; they are
queued locally and handled inside the same step, after the input that
produced them.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .committee import CommitteeAssignment, select_committee
from .crypto import KeyRing, Signature
from .encoding import digest as obj_digest
from .messages import (
    AbsenceProof, Approval, ApprovalCert, ApproveV, Block, BlockHeader,
    ClientResponse, Complaint, Confirm, ConfV, Evidence, EvidenceKind,
    ExplicitComplaint, HistoryBundle, MsgKind, NegativeResponse, Payload,
    PrePrepare, PreProposal, PrimaryTimeout, Proof, Proposal, ProposalCert,
    Ready, ReadyBundle, SyncBlocks, SyncEntry, Transaction, ViewChange,
    confirm_digest, confv_digest, negative_digest, preproposal_digest,
    signing_digest,
)

MAX_OP = 512
MAX_SYNC = 64
NORMAL = "normal"
VIEWCHANGE = "viewchange"

_NOSIG = Signature(0, b"")


def genesis_block() -> Block:
    empty = Payload(())
    header = BlockHeader(0, 0, obj_digest(empty), bytes(32),
                         Signature(0, b"genesis"))
    return Block(header, (), empty)


GENESIS = genesis_block()


# -- errors -------------------------------------------------------------------

class ValidationError(Exception):
    pass


class WrongView(ValidationError):
    pass


class WrongSequence(ValidationError):
    pass


class BadParent(ValidationError):
    pass


class BadPayloadDigest(ValidationError):
    pass


class BadSignature(ValidationError):
    pass


class InvalidTx(ValidationError):
    pass


class MissingRecovery(ValidationError):
    pass


class BadCert(ValidationError):
    pass


class InvalidProof(ValidationError):
    pass


class ShortBundle(ValidationError):
    pass


# -- configuration and outputs --------------------------------------------------

@dataclass(frozen=True)
class Config:
    n: int
    f: int
    c: int
    timeout_base: int = 1000
    backoff: int = 2
    pipelined: bool = False
    pipeline_depth: int = 4
    block_size: int = 4096
    run_seed: bytes = bytes(32)
    cache_limit: int = 64
    # (view, primary, members) triples overriding the seeded selection
    fixed_assignments: tuple = ()

    def __post_init__(self):
        if self.n != 3 * self.f + 1:
            raise ValueError(f"n must equal 3f+1 (n={self.n}, f={self.f})")
        if not 1 <= self.c <= self.n - 1:
            raise ValueError("need 1 <= c <= n-1")
        if self.timeout_base <= 0 or self.backoff < 1:
            raise ValueError("timeout_base must be > 0 and backoff >= 1")
        object.__setattr__(self, "_asg", {})

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1

    @property
    def weak_quorum(self) -> int:
        return self.f + 1

    @property
    def committee_quorum(self) -> int:
        return self.c // 2 + 1

    def assignment(self, view: int) -> CommitteeAssignment:
        cache = self.__dict__["_asg"]
        asg = cache.get(view)
        if asg is None:
            for v, primary, members in self.fixed_assignments:
                if v == view:
                    asg = CommitteeAssignment(view, frozenset(members), primary)
                    break
            else:
                asg = select_committee(self.run_seed, view, self.n, self.c)
            cache[view] = asg
        return asg


@dataclass(frozen=True)
class Send:
    dests: tuple
    msg: object


@dataclass(frozen=True)
class SetTimer:
    token: int
    deadline: int


@dataclass(frozen=True)
class ToClients:
    msg: ClientResponse


@dataclass(frozen=True)
class Committed:
    s: int
    h: bytes
    v: int
    ntx: int
    signers: tuple = ()


@dataclass(frozen=True)
class Revoked:
    s: int
    h: bytes


@dataclass(frozen=True)
class Proposed:
    s: int
    h: bytes
    ntx: int


@dataclass(frozen=True)
class BlacklistEvidence:
    signers: tuple


@dataclass(frozen=True)
class ViewChangeStarted:
    v: int


@dataclass(frozen=True)
class ViewInstalled:
    v: int


@dataclass
class _Cursor:
    """Head of the chain a node extends within the current view."""
    s: int
    h: bytes
    rec_active: bool = False


@dataclass
class RecoveryPlan:
    tip_s: int
    tip_h: bytes
    tip_cert: Optional[ApprovalCert]
    # height -> block digest -> beta (highest certifying view kept)
    candidates: dict = field(default_factory=dict)

    def at(self, s: int, parent: bytes) -> list[ProposalCert]:
        """Candidates at height s extending ``parent``, in preference order."""
        cands = [b for b in self.candidates.get(s, {}).values()
                 if b.rho.d == parent]
        cands.sort(key=lambda b: (-b.v, b.rho.digest))
        return cands


class Node:
    """Hermes replica."""

    def __init__(self, node_id: int, cfg: Config, keys: KeyRing,
                 workload=None):
        self.id = node_id
        self.cfg = cfg
        self.keys = keys
        self.signer = keys.signer(node_id)
        self.workload = workload
        self.equivocating = False  # colluding byzantine behaviour

        self.view = 0
        self.mode = NORMAL
        self.asg = cfg.assignment(0)
        self.blocks: list[Block] = [GENESIS]
        self.certs: list[Optional[ApprovalCert]] = [None]
        self.txid_height: dict[bytes, int] = {}
        self.known: dict[bytes, Block] = {GENESIS.digest: GENESIS}
        self.betas: dict[bytes, ProposalCert] = {}
        self.served_to: dict[int, int] = {}
        self.vc_consecutive = 0
        self.fires = 0
        self.timer_token = 0
        self.mp_cursor = 0
        self.blacklisted: set[bytes] = set()
        self.now = 0

        self._out: list = []
        self._local: deque = deque()
        self._future: list = []
        self._neg_digest: dict[bytes, bytes] = {}
        self.plan: Optional[RecoveryPlan] = None
        self._reset_view_state(GENESIS.s, GENESIS.digest)
        self._reset_target_state()

    # -- small helpers ----------------------------------------------------------

    @property
    def tip_s(self) -> int:
        return len(self.blocks) - 1

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def is_primary(self) -> bool:
        return self.asg.primary == self.id

    @property
    def is_member(self) -> bool:
        return self.id in self.asg.members

    def _all_others(self):
        return [i for i in range(self.cfg.n) if i != self.id]

    def _regulars(self):
        return self.asg.regulars(self.cfg.n)

    def _send(self, dests, msg):
        dests = sorted(set(dests))
        if self.id in dests:
            self._local.append(msg)
            dests.remove(self.id)
        if dests:
            self._out.append(Send(tuple(dests), msg))

    def _emit(self, event):
        self._out.append(event)

    def _signed(self, cls, **fields):
        sig_field = getattr(cls, "SIG_FIELD", "sig")
        tmp = cls(**fields, **{sig_field: _NOSIG})
        sig = self.signer.sign(signing_digest(tmp))
        return cls(**fields, **{sig_field: sig})

    def _sig_ok(self, msg, signer: int) -> bool:
        sig = getattr(msg, getattr(msg, "SIG_FIELD", "sig"))
        return (sig.signer == signer
                and self.keys.verify_sig(sig, signing_digest(msg)))

    def _timeout(self) -> int:
        k = min(self.vc_consecutive + self.fires, 16)
        return self.cfg.timeout_base * self.cfg.backoff ** k

    def _arm_timer(self):
        self.timer_token += 1
        self._emit(SetTimer(self.timer_token, self.now + self._timeout()))

    def _neg(self, beta: ProposalCert) -> bytes:
        key = obj_digest(beta)
        d = self._neg_digest.get(key)
        if d is None:
            d = self._neg_digest[key] = negative_digest(beta)
        return d

    def _reset_view_state(self, s: int, h: bytes):
        self.pp = _Cursor(s, h)
        self.cf = _Cursor(s, h)
        self.pp_sent: dict[int, bytes] = {}
        self.cf_sent: dict[int, bytes] = {}
        # height -> block digest -> signer -> signature
        self.pp_tally: dict[int, dict] = {}
        self.confirm_tally: dict[int, dict] = {}
        self.beta_formed: set[bytes] = set()
        self.approved: set[int] = set()
        self.held_certs: dict[int, ApprovalCert] = {}
        self.cached_props: dict[int, list] = {}
        self.cached_pps: dict[int, list] = {}
        self.gap_complained: set[int] = set()
        self.proposed = (s, h)
        self.rec_done = True
        self.rec_requested: set[bytes] = set()
        self.rec_neg: dict[bytes, dict] = {}
        self.rec_absent: dict[bytes, AbsenceProof] = {}
        self.gp_forwarded: set[bytes] = set()
        self.gp_relay: set[bytes] = set()
        self.gp_answered: set[bytes] = set()

    def _reset_target_state(self):
        self.complaints: dict[int, Complaint] = {}
        self.proof: Optional[Proof] = None
        self.confv_sent = False
        self.confv_tally: dict[int, Signature] = {}
        self.approvev_sent = False
        self.halted = False
        self.vc_msgs: dict[int, ViewChange] = {}
        self.q_sent = False
        self.q_seen: Optional[HistoryBundle] = None
        self.q_forwarded = False
        self.ready_sent = False
        self.ready_tally: dict[int, Ready] = {}
        self.p_sent = False
        self.p_forwarded = False
        self.sync_requested = False

    # -- entry points -------------------------------------------------------------

    def start(self, now: int = 0) -> list:
        self.now = now
        self._out = []
        self._arm_timer()
        if self.is_primary:
            self._maybe_propose()
        self._drain()
        return self._out

    def handle(self, msg, sender: int, now: int) -> list:
        self.now = now
        self._out = []
        self._dispatch(msg, sender)
        self._drain()
        return self._out

    def on_timer(self, token: int, now: int) -> list:
        self.now = now
        self._out = []
        if token == self.timer_token:
            self.on_block_timeout()
            self._drain()
        return self._out

    def _drain(self):
        while self._local:
            self._dispatch(self._local.popleft(), self.id)

    def _dispatch(self, msg, sender):
        handler = _HANDLERS.get(type(msg))
        if handler is None:
            return
        try:
            handler(self, msg, sender)
        except ValidationError:
            pass

    def _buffer(self, msg, sender):
        if len(self._future) < 4096:
            self._future.append((msg, sender))

    def _replay_future(self):
        pending, self._future = self._future, []
        for msg, sender in pending:
            self._dispatch(msg, sender)

    def _current(self, v: int, msg, sender) -> bool:
        """Gate for normal-mode messages tagged with view ``v``."""
        if v < self.view:
            return False
        if v > self.view or self.mode != NORMAL:
            self._buffer(msg, sender)
            return False
        return True

    # -- block validation -------------------------------------------------------

    def _pending_txids(self, cursor_h: bytes, floor_s: int) -> set:
        out = set()
        b = self.known.get(cursor_h)
        while b is not None and b.s > floor_s:
            if b.s <= self.tip_s and self.blocks[b.s].digest == b.digest:
                break
            out.update(tx.id for tx in b.txs)
            b = self.known.get(b.header.d)
        return out

    def _candidate_check(self, block: Block, cursor: _Cursor) -> bool:
        """Recovery obligation.  True if ``block`` re-proposes a candidate."""
        if not cursor.rec_active or self.plan is None:
            return False
        cands = self.plan.at(block.s, cursor.h)
        if not cands:
            return False
        if any(b.rho.digest == block.digest for b in cands):
            return True
        covered = set()
        for ap in block.o:
            if self._absence_ok(ap):
                covered.add(ap.beta.rho.digest)
        if all(b.rho.digest in covered for b in cands):
            return False
        raise MissingRecovery(block.s)

    def _absence_ok(self, ap: AbsenceProof) -> bool:
        return (self._beta_ok(ap.beta)
                and self.keys.verify_aggregate(ap.responses, self._neg(ap.beta),
                                               self.cfg.quorum))

    def validate_block(self, block: Block, cursor: _Cursor) -> bool:
        """Check ``block`` as the next block after ``cursor``.

        Returns True when the block is a recovery re-proposal.  Raises a
        :class:`ValidationError` subclass otherwise-invalid blocks.
        """
        hdr = block.header
        if hdr.s != cursor.s + 1:
            raise WrongSequence(hdr.s)
        if hdr.d != cursor.h:
            raise BadParent(hdr.s)
        if obj_digest(block.m) != hdr.h:
            raise BadPayloadDigest(hdr.s)
        reproposal = self._candidate_check(block, cursor)
        if not reproposal:
            if hdr.v != self.view:
                raise WrongView(hdr.v)
            if not self._sig_ok(hdr, self.asg.primary):
                raise BadSignature("header")
        committed_here = (hdr.s <= self.tip_s
                          and self.blocks[hdr.s].digest == block.digest)
        if not committed_here:
            self._check_txs(block, cursor)
        return reproposal

    def _check_txs(self, block: Block, cursor: _Cursor):
        seen = set()
        pending = None
        for tx in block.txs:
            if len(tx.op) > MAX_OP:
                raise InvalidTx("oversized op")
            tid = tx.id
            if tid in seen:
                raise InvalidTx("duplicate in block")
            seen.add(tid)
            height = self.txid_height.get(tid)
            if height is not None and height < block.s:
                raise InvalidTx("already committed")
            if pending is None:
                pending = self._pending_txids(cursor.h, self.tip_s)
            if tid in pending:
                raise InvalidTx("already pending")

    def validate_pre_prepare(self, block: Block) -> None:
        self.validate_block(block, self.pp)

    @staticmethod
    def _intrinsically_invalid(block: Block) -> bool:
        if obj_digest(block.m) != block.header.h:
            return True
        return any(len(tx.op) > MAX_OP for tx in block.txs)

    def _beta_ok(self, beta: ProposalCert) -> bool:
        asg = self.cfg.assignment(beta.v)
        return self.keys.verify_aggregate(
            beta.sigma_r, preproposal_digest(beta.v, beta.rho.s, beta.rho.digest),
            self.cfg.committee_quorum, asg.members)

    def _cert_ok(self, cert: ApprovalCert) -> bool:
        return self.keys.verify_aggregate(
            cert.sigma, confirm_digest(cert.v, cert.s, cert.h), self.cfg.quorum)

    # -- primary ------------------------------------------------------------------

    def _maybe_propose(self):
        if not (self.mode == NORMAL and self.is_primary and not self.halted):
            return
        if self.plan is not None and self.tip_s < self.plan.tip_s:
            return
        if not self.rec_done:
            self._recovery_step()
            if not self.rec_done:
                return
        while True:
            ps, ph = self.proposed
            if not self._is_committed(ps, ph):
                if not self.cfg.pipelined:
                    return
                if ps - self.tip_s >= self.cfg.pipeline_depth:
                    return
                if ph not in self.betas:
                    return
            self.propose_block()

    def _is_committed(self, s: int, h: bytes) -> bool:
        return s <= self.tip_s and self.blocks[s].digest == h

    def _take_txs(self, floor_h: bytes) -> tuple[Transaction, ...]:
        wl = self.workload
        if wl is None:
            return ()
        i = self.mp_cursor
        while True:
            tx = wl.get(i, self.now)
            if tx is None or tx.id not in self.txid_height:
                break
            i += 1
        self.mp_cursor = i
        pending = self._pending_txids(floor_h, self.tip_s)
        budget = self.cfg.block_size
        out = []
        while True:
            tx = wl.get(i, self.now)
            if tx is None:
                break
            i += 1
            tid = tx.id
            if tid in self.txid_height or tid in pending:
                continue
            cost = wl.tx_bytes
            if cost > budget:
                break
            budget -= cost
            out.append(tx)
        return tuple(out)

    def propose_block(self, o: tuple = ()):
        ps, ph = self.proposed
        payload = Payload(self._take_txs(ph))
        header = self._signed(BlockHeader, v=self.view, s=ps + 1,
                              h=obj_digest(payload), d=ph)
        self._send_preprepare(Block(header, o, payload))

    def _send_preprepare(self, block: Block):
        self.known[block.digest] = block
        self.proposed = (block.s, block.digest)
        msg = self._signed(PrePrepare, v=self.view, block=block)
        self._emit(Proposed(block.s, block.digest, len(block.txs)))
        self._send(self.asg.members, msg)

    def begin_view(self):
        self.rec_done = False
        self._maybe_propose()

    def _recovery_step(self):
        """Drive the recovery obligation for the next height."""
        ps, ph = self.proposed
        cands = self.plan.at(ps + 1, ph) if self.plan else []
        if not cands:
            self.rec_done = True
            return
        if not self._is_committed(ps, ph):
            if not self.cfg.pipelined or ph not in self.betas:
                return
        for beta in cands:
            key = beta.rho.digest
            if key in self.rec_absent:
                continue
            block = self.known.get(key)
            if block is not None:
                self._send_preprepare(block)
                self._recovery_step()
                return
            if key not in self.rec_requested:
                self.rec_requested.add(key)
                gp = self._signed(PrimaryTimeout, v=self.view, beta=beta,
                                  p=self.id)
                self._send(self.asg.members, gp)
                self._negative(beta, self.id)
            return
        # every candidate proven absent: fresh block carrying the proofs
        proofs = tuple(self.rec_absent[b.rho.digest] for b in cands)
        self.rec_done = True
        self.propose_block(o=proofs)

    def _negative(self, beta: ProposalCert, sender: int,
                  sig: Optional[Signature] = None):
        key = beta.rho.digest
        if sig is None:
            sig = self.signer.sign(self._neg(beta))
        tally = self.rec_neg.setdefault(key, {})
        tally[sender] = sig
        if key not in self.rec_absent and len(tally) >= self.cfg.quorum:
            agg = self.keys.aggregate(tally.values(), self._neg(beta),
                                      self.cfg.quorum)
            self.rec_absent[key] = AbsenceProof(beta, agg)
            self._maybe_propose()

    # -- committee member: pre-prepare and pre-proposal ------------------------------

    def on_pre_prepare(self, msg: PrePrepare, sender: int):
        if not self._current(msg.v, msg, sender):
            return
        if not self.is_member or self.halted:
            return
        if not self._sig_ok(msg, self.asg.primary):
            raise BadSignature("pre-prepare")
        block = msg.block
        hdr = block.header
        fresh = hdr.v == self.view and hdr.proposer == self.asg.primary
        if fresh and self._intrinsically_invalid(block) \
                and self._sig_ok(hdr, self.asg.primary):
            self._explicit(Evidence(EvidenceKind.INVALID_PROPOSAL, (), (), block))
            return
        prev = self.pp_sent.get(hdr.s)
        if prev is not None:
            if prev != block.digest and not self.equivocating:
                other = self.known.get(prev)
                if (fresh and other is not None and other.header.v == self.view
                        and self._sig_ok(hdr, self.asg.primary)):
                    self._explicit(Evidence(EvidenceKind.EQUIVOCATION,
                                            (other.header, hdr), (), None))
                return
            if prev == block.digest:
                return
            # colluding member signs a second variant at the same height
            self.known[block.digest] = block
            self._preproposal(block)
            return
        if hdr.s > self.pp.s + 1:
            self._cache(self.cached_pps, hdr.s, msg)
            return
        self.validate_block(block, self.pp)
        self._accept_preprepare(block)

    def _accept_preprepare(self, block: Block):
        self.known[block.digest] = block
        self._advance_cursor(self.pp, block)
        self.pp_sent[block.s] = block.digest
        self._preproposal(block)
        self._replay_cached(self.cached_pps, block.s + 1)

    def _advance_cursor(self, cursor: _Cursor, block: Block):
        if cursor.rec_active and self.plan is not None:
            cands = self.plan.at(block.s, cursor.h)
            if not any(b.rho.digest == block.digest for b in cands):
                cursor.rec_active = False
        cursor.s, cursor.h = block.s, block.digest

    def _preproposal(self, block: Block):
        msg = self._signed(PreProposal, v=self.view, s=block.s, h=block.digest,
                           i=self.id)
        self._send(self.asg.members, msg)

    def on_pre_proposal(self, msg: PreProposal, sender: int):
        if not self._current(msg.v, msg, sender):
            return
        if not self.is_member or msg.i not in self.asg.members:
            return
        if not self.keys.verify_sig(msg.sig, preproposal_digest(msg.v, msg.s, msg.h)) \
                or msg.sig.signer != msg.i:
            raise BadSignature("pre-proposal")
        tally = self.pp_tally.setdefault(msg.s, {}).setdefault(msg.h, {})
        if msg.i in tally:
            return
        tally[msg.i] = msg.sig
        self._try_form_beta(msg.s, msg.h)

    def _try_form_beta(self, s: int, h: bytes):
        if h in self.beta_formed or self.halted:
            return
        if self.pp_sent.get(s) != h and not (
                self.equivocating and h in self.known):
            return
        tally = self.pp_tally.get(s, {}).get(h, {})
        if len(tally) < self.cfg.committee_quorum:
            return
        block = self.known[h]
        agg = self.keys.aggregate(tally.values(),
                                  preproposal_digest(self.view, s, h),
                                  self.cfg.committee_quorum)
        beta = ProposalCert(self.view, block.header, agg)
        self.beta_formed.add(h)
        self.betas[h] = beta
        self._send(self._regulars(), Proposal(beta, block))
        self._send([self.asg.primary], Proposal(beta, None))
        self._accept_proposal(beta, block)

    # -- proposals and confirmation ---------------------------------------------------

    def on_proposal(self, msg: Proposal, sender: int):
        beta = msg.beta
        if msg.block is not None and self._recovery_reply(msg, sender):
            return
        if not self._current(beta.v, msg, sender):
            return
        if not self._beta_ok(beta):
            raise BadCert("proposal")
        block = msg.block
        if block is None:
            block = self.known.get(beta.rho.digest)
            if block is None:
                return
        elif block.header != beta.rho:
            raise BadCert("header mismatch")
        self._accept_proposal(beta, block)

    def _recovery_reply(self, msg: Proposal, sender: int) -> bool:
        key = msg.beta.rho.digest
        block = msg.block
        if block.digest != key or obj_digest(block.m) != block.header.h:
            return False
        if self.is_primary and key in self.rec_requested and self.mode == NORMAL:
            if key not in self.known:
                self.known[key] = block
                self._maybe_propose()
            return True
        if self.is_member and key in self.gp_relay:
            self.gp_relay.discard(key)
            self._send([self.asg.primary], msg)
            return True
        return False

    def _accept_proposal(self, beta: ProposalCert, block: Block):
        if self.halted:
            return
        s = block.s
        prev = self.cf_sent.get(s)
        if prev is not None:
            if prev == block.digest:
                return
            if not self.equivocating:
                old = self.betas.get(prev)
                if old is not None and old.v == beta.v:
                    self._explicit(Evidence(EvidenceKind.EQUIVOCATION, (), (old, beta),
                                            None))
                return
            self.betas[block.digest] = beta
            self.known[block.digest] = block
            self._confirm(block)
            return
        if s > self.cf.s + 1:
            self._cache(self.cached_props, s, (beta, block))
            return
        if s <= self.cf.s:
            return
        if self.tip_s < self.cf.s:
            # still syncing to the view's starting point
            self._cache(self.cached_props, s, (beta, block))
            return
        self.validate_block(block, self.cf)
        if s <= self.tip_s and self.blocks[s].digest != block.digest:
            self._revoke_from(s)
        self.known[block.digest] = block
        self.betas[block.digest] = beta
        self._advance_cursor(self.cf, block)
        self.cf_sent[s] = block.digest
        self._confirm(block)
        self._try_commit_held()
        self._replay_cached(self.cached_props, s + 1)
        if self.is_primary:
            self._maybe_propose()

    def _confirm(self, block: Block):
        msg = self._signed(Confirm, v=self.view, s=block.s, h=block.digest,
                           j=self.id)
        self._send(list(self.asg.members) + [self.asg.primary], msg)

    def on_confirm(self, msg: Confirm, sender: int):
        if not self._current(msg.v, msg, sender):
            return
        if not (self.is_member or self.is_primary) or msg.s in self.approved:
            return
        if msg.sig.signer != msg.j or not self.keys.verify_sig(
                msg.sig, confirm_digest(msg.v, msg.s, msg.h)):
            raise BadSignature("confirm")
        tally = self.confirm_tally.setdefault(msg.s, {}).setdefault(msg.h, {})
        if msg.j in tally:
            return
        tally[msg.j] = msg.sig
        if len(tally) < self.cfg.quorum:
            return
        if msg.s <= self.tip_s:
            # a block this node already holds was re-proposed and confirmed
            if self.blocks[msg.s].digest == msg.h:
                self._approve(self._cert_from(msg.s, msg.h))
            return
        self._try_commit_confirms()

    def _cert_from(self, s: int, h: bytes) -> ApprovalCert:
        tally = self.confirm_tally[s][h]
        agg = self.keys.aggregate(tally.values(), confirm_digest(self.view, s, h),
                                  self.cfg.quorum)
        return ApprovalCert(self.view, s, h, agg)

    def _approve(self, cert: ApprovalCert):
        self.approved.add(cert.s)
        if self.is_member:
            self._send(self._regulars(), Approval(cert))

    def _try_commit_confirms(self):
        while True:
            s = self.tip_s + 1
            for h, tally in self.confirm_tally.get(s, {}).items():
                if len(tally) < self.cfg.quorum:
                    continue
                block = self.known.get(h)
                if block is not None and block.header.d == self.tip.digest:
                    cert = self._cert_from(s, h)
                    self._commit(block, cert)
                    self._approve(cert)
                    break
            else:
                return

    def on_approval(self, msg: Approval, sender: int):
        cert = msg.cert
        if not self._current(cert.v, msg, sender):
            return
        if self.is_member or self.is_primary:
            return
        if cert.s <= self.tip_s or cert.s in self.held_certs:
            return
        if not self._cert_ok(cert):
            raise BadCert("approval")
        self.held_certs[cert.s] = cert
        self._try_commit_held()

    def _try_commit_held(self):
        while True:
            s = self.tip_s + 1
            cert = self.held_certs.get(s)
            if cert is None:
                break
            block = self.known.get(cert.h)
            if block is None or block.header.d != self.tip.digest:
                if s not in self.gap_complained:
                    self.gap_complained.add(s)
                    self._complain(MsgKind.APPROVAL, gap=(cert.s, cert.h))
                break
            del self.held_certs[s]
            self._commit(block, cert)
        later = [s for s in self.held_certs if s > self.tip_s + 1]
        if later and self.tip_s + 1 not in self.held_certs:
            first = min(later)
            if first not in self.gap_complained:
                self.gap_complained.add(first)
                cert = self.held_certs[first]
                self._complain(MsgKind.APPROVAL, gap=(cert.s, cert.h))

    # -- commit / revoke -------------------------------------------------------------

    def _commit(self, block: Block, cert: ApprovalCert):
        assert block.s == self.tip_s + 1 and block.header.d == self.tip.digest
        self.blocks.append(block)
        self.certs.append(cert)
        self.known[block.digest] = block
        for tx in block.txs:
            self.txid_height[tx.id] = block.s
        for h in [h for h, b in self.betas.items() if b.rho.s <= block.s]:
            del self.betas[h]
        self.held_certs.pop(block.s, None)
        self.vc_consecutive = 0
        self.fires = 0
        self._emit(Committed(block.s, block.digest, cert.v, len(block.txs),
                             cert.sigma.signers))
        resp = self._signed(ClientResponse, s=block.s, v=cert.v, h=block.digest,
                            ntx=len(block.txs), i=self.id)
        self._emit(ToClients(resp))
        old = block.s - self.cfg.cache_limit
        self.confirm_tally.pop(old, None)
        self.pp_tally.pop(old, None)
        if self.mode == NORMAL:
            self._arm_timer()
            for cursor in (self.cf, self.pp):
                if cursor.s < block.s:
                    self._advance_cursor(cursor, block)
            if self.is_primary:
                if self.proposed[0] < block.s:
                    self.proposed = (block.s, block.digest)
                self._maybe_propose()
        else:
            self._maybe_ready()

    def _revoke_from(self, s: int):
        while self.tip_s >= s:
            block = self.blocks.pop()
            self.certs.pop()
            for tx in block.txs:
                if self.txid_height.get(tx.id) == block.s:
                    del self.txid_height[tx.id]
            self._emit(Revoked(block.s, block.digest))
        self.mp_cursor = 0

    # -- timeouts and synchronization ---------------------------------------------------

    def on_block_timeout(self):
        tau = MsgKind.BLOCK
        if self.mode == VIEWCHANGE:
            tau = MsgKind.P if self.q_seen is not None else MsgKind.Q
        self._complain(tau)
        self.fires += 1
        self._arm_timer()

    def _complain(self, tau: int, gap: Optional[tuple] = None):
        s2, h2 = gap if gap else (None, None)
        msg = self._signed(Complaint, v=self.view, s1=self.tip_s,
                           h1=self.tip.digest, s2=s2, h2=h2, tau=int(tau),
                           j=self.id)
        if self.is_member:
            self._send(self._all_others() + [self.id], msg)
        else:
            self._send(self.asg.members, msg)

    def on_complaint(self, msg: Complaint, sender: int):
        if msg.sig.signer != msg.j or not self._sig_ok(msg, msg.j):
            raise BadSignature("complaint")
        self._serve(msg.j, msg.s1)
        if msg.v != self.view or msg.s2 is not None:
            return
        if not self.is_member:
            return
        if msg.j in self.complaints:
            return
        self.complaints[msg.j] = msg
        if self.proof is None and len(self.complaints) >= self.cfg.weak_quorum:
            chosen = tuple(self.complaints[j]
                           for j in sorted(self.complaints)[:self.cfg.weak_quorum])
            self._on_proof(Proof(self.view, chosen, None))

    def _serve(self, j: int, have_s: int):
        if j == self.id or have_s >= self.tip_s:
            return
        if self.served_to.get(j, -1) > have_s:
            return  # validity condition: already sent j blocks past have_s
        top = min(self.tip_s, have_s + MAX_SYNC)
        entries = tuple(SyncEntry(self.blocks[s], self.certs[s])
                        for s in range(have_s + 1, top + 1))
        self.served_to[j] = top
        self._send([j], SyncBlocks(entries))

    def on_sync_blocks(self, msg: SyncBlocks, sender: int):
        for entry in msg.entries:
            block, cert = entry.block, entry.cert
            s = block.s
            if cert.s != s or cert.h != block.digest:
                return
            if s <= self.tip_s:
                if self.blocks[s].digest == block.digest:
                    continue
                mine = self.certs[s]
                if mine is not None and cert.v <= mine.v:
                    return
                if not self._cert_ok(cert):
                    return
                self._revoke_from(s)
            if s != self.tip_s + 1 or block.header.d != self.tip.digest:
                return
            if obj_digest(block.m) != block.header.h or not self._cert_ok(cert):
                return
            self._commit(block, cert)
        if self.mode == NORMAL:
            self._try_commit_held()
            self._replay_cached(self.cached_props, self.cf.s + 1)
        elif self.plan is not None and self.tip_s < self.plan.tip_s:
            self.sync_requested = False
            self._sync_to_plan()
        else:
            self._maybe_ready()

    # -- complaints, proofs, view change trigger ----------------------------------------

    def _explicit(self, evidence: Evidence):
        msg = self._signed(ExplicitComplaint, v=self.view, evidence=evidence,
                           i=self.id)
        self._send(self._all_others() + [self.id], msg)

    def evidence_signers(self, ev: Evidence, v: int) -> Optional[tuple]:
        """Culprits if ``ev`` is valid self-certifying evidence for view v."""
        primary = self.cfg.assignment(v).primary
        if ev.kind == EvidenceKind.INVALID_PROPOSAL:
            b = ev.block
            if b is None or b.header.v != v or not self._sig_ok(b.header, primary):
                return None
            return (primary,) if self._intrinsically_invalid(b) else None
        if ev.kind != EvidenceKind.EQUIVOCATION:
            return None
        if len(ev.headers) == 2:
            a, b = ev.headers
            if (a.v == b.v == v and a.s == b.s and a.digest != b.digest
                    and self._sig_ok(a, primary) and self._sig_ok(b, primary)):
                return (primary,)
            return None
        if len(ev.certs) == 2:
            a, b = ev.certs
            if not (a.v == b.v == v and a.rho.s == b.rho.s
                    and a.rho.digest != b.rho.digest):
                return None
            if not (self._beta_ok(a) and self._beta_ok(b)):
                return None
            both = set(a.sigma_r.signers) & set(b.sigma_r.signers)
            if (a.rho.v == b.rho.v == v and a.rho.proposer == primary
                    and b.rho.proposer == primary):
                both.add(primary)
            return tuple(sorted(both))
        return None

    def on_explicit(self, msg: ExplicitComplaint, sender: int):
        if not self._sig_ok(msg, msg.i):
            raise BadSignature("explicit complaint")
        culprits = self.evidence_signers(msg.evidence, msg.v)
        if culprits is None:
            raise InvalidProof("evidence")
        key = obj_digest(msg.evidence)
        if key not in self.blacklisted:
            self.blacklisted.add(key)
            self._emit(BlacklistEvidence(culprits))
        if msg.v == self.view and self.proof is None:
            self._on_proof(Proof(msg.v, (), msg))

    def proof_ok(self, proof: Proof) -> bool:
        if proof.explicit is not None:
            e = proof.explicit
            return (e.v == proof.v and self._sig_ok(e, e.i)
                    and self.evidence_signers(e.evidence, e.v) is not None)
        signers = set()
        for g in proof.complaints:
            if g.v != proof.v or g.s2 is not None or g.j in signers:
                return False
            if not self._sig_ok(g, g.j):
                return False
            signers.add(g.j)
        return len(signers) >= self.cfg.weak_quorum

    def on_proof(self, msg: Proof, sender: int):
        if msg.v != self.view or self.proof is not None:
            return
        if not self.proof_ok(msg):
            raise InvalidProof("proof")
        self._on_proof(msg)

    def _on_proof(self, proof: Proof, relay=None):
        self.proof = proof
        if self.is_member:
            self._send(self._all_others(), relay if relay is not None else proof)
        if not self.confv_sent:
            self.confv_sent = True
            msg = self._signed(ConfV, v=self.view, j=self.id, proof=proof)
            self._send(self.asg.members, msg)

    def on_confv(self, msg: ConfV, sender: int):
        if msg.v != self.view:
            if msg.v > self.view:
                self._buffer(msg, sender)
            return
        if msg.sig.signer != msg.j or not self.keys.verify_sig(
                msg.sig, confv_digest(msg.v)):
            raise BadSignature("confv")
        if self.proof is None:
            if not self.proof_ok(msg.proof):
                raise InvalidProof("confv")
            self._on_proof(msg.proof, relay=msg)
        if not self.is_member or msg.j in self.confv_tally:
            return
        self.confv_tally[msg.j] = msg.sig
        if not self.approvev_sent and len(self.confv_tally) >= self.cfg.quorum:
            self.approvev_sent = True
            self.halted = True
            agg = self.keys.aggregate(self.confv_tally.values(),
                                      confv_digest(self.view), self.cfg.quorum)
            av = self._signed(ApproveV, v=self.view, sigma=agg, proof=self.proof,
                              i=self.id)
            self._send(self._all_others() + [self.id], av)

    def on_approvev(self, msg: ApproveV, sender: int):
        if msg.v < self.view:
            return
        if msg.i not in self.cfg.assignment(msg.v).members or not self._sig_ok(msg, msg.i):
            raise BadSignature("approvev")
        if not self.keys.verify_aggregate(msg.sigma, confv_digest(msg.v),
                                          self.cfg.quorum):
            raise BadCert("approvev")
        if msg.proof.v != msg.v or not self.proof_ok(msg.proof):
            raise InvalidProof("approvev")
        self._enter_view_change(msg.v + 1)
        self._send_view_change()

    # -- view change ---------------------------------------------------------------------

    def _enter_view_change(self, w: int):
        self.view = w
        self.mode = VIEWCHANGE
        self.asg = self.cfg.assignment(w)
        self.vc_consecutive += 1
        self.fires = 0
        self._reset_target_state()
        self._emit(ViewChangeStarted(w))
        self._arm_timer()

    def _send_view_change(self):
        betas = tuple(sorted((b for b in self.betas.values()
                              if b.rho.s > self.tip_s),
                             key=lambda b: (b.rho.s, b.v, b.rho.digest)))
        msg = self._signed(ViewChange, v=self.view, s=self.tip_s,
                           h=self.tip.digest, k=self.id,
                           commit=self.certs[-1], betas=betas)
        self._send([self.asg.primary], msg)
        self._replay_future()

    def view_change_ok(self, vc: ViewChange) -> bool:
        if not self._sig_ok(vc, vc.k):
            return False
        if vc.s == 0:
            if vc.h != GENESIS.digest or vc.commit is not None:
                return False
        else:
            c = vc.commit
            if c is None or c.s != vc.s or c.h != vc.h or not self._cert_ok(c):
                return False
        return all(self._beta_ok(b) for b in vc.betas)

    def on_view_change(self, msg: ViewChange, sender: int):
        if msg.v < self.view:
            return
        if msg.v > self.view or self.mode != VIEWCHANGE:
            if msg.v > self.view:
                self._buffer(msg, sender)
            return
        if not self.is_primary or msg.k in self.vc_msgs:
            return
        if not self.view_change_ok(msg):
            raise BadSignature("viewchange")
        self.vc_msgs[msg.k] = msg
        if not self.q_sent and len(self.vc_msgs) >= self.cfg.quorum:
            self.q_sent = True
            q = HistoryBundle(self.view, tuple(self.vc_msgs[k]
                                               for k in sorted(self.vc_msgs)))
            self._send(list(self.asg.members) + [self.id], q)

    def history_ok(self, q: HistoryBundle) -> bool:
        seen = set()
        for vc in q.views:
            if vc.v != q.v or vc.k in seen or not self.view_change_ok(vc):
                return False
            seen.add(vc.k)
        return len(seen) >= self.cfg.quorum

    def on_history(self, msg: HistoryBundle, sender: int):
        if msg.v < self.view or (msg.v == self.view and self.mode == NORMAL):
            return
        if self.q_seen is not None and msg.v == self.view:
            return
        if not self.history_ok(msg):
            raise ShortBundle("history")
        if msg.v > self.view:
            self._enter_view_change(msg.v)
        self.q_seen = msg
        if self.is_member and not self.q_forwarded:
            self.q_forwarded = True
            self._send(self._regulars(), msg)
        self.plan = self._plan_from(msg)
        self._sync_to_plan()
        self._replay_future()

    @staticmethod
    def _plan_from(q: HistoryBundle) -> RecoveryPlan:
        best = max(q.views, key=lambda vc: (vc.s, [-x for x in vc.h]))
        plan = RecoveryPlan(best.s, best.h, best.commit)
        for vc in q.views:
            for beta in vc.betas:
                if beta.rho.s <= plan.tip_s:
                    continue
                slot = plan.candidates.setdefault(beta.rho.s, {})
                key = beta.rho.digest
                if key not in slot or slot[key].v < beta.v:
                    slot[key] = beta
        return plan

    def _sync_to_plan(self):
        plan = self.plan
        if self.tip_s >= plan.tip_s:
            if self.blocks[plan.tip_s].digest != plan.tip_h:
                self._revoke_from(plan.tip_s)
        if self.tip_s == plan.tip_s - 1 and plan.tip_cert is not None:
            block = self.known.get(plan.tip_h)
            if block is not None and block.header.d == self.tip.digest:
                self._commit(block, plan.tip_cert)
        if self.tip_s < plan.tip_s:
            if not self.sync_requested:
                self.sync_requested = True
                holders = {vc.k for vc in self.q_seen.views if vc.s >= plan.tip_s}
                holders |= set(self.asg.members) | {self.asg.primary}
                holders.discard(self.id)
                msg = self._signed(Complaint, v=self.view, s1=self.tip_s,
                                   h1=self.tip.digest, s2=plan.tip_s,
                                   h2=plan.tip_h, tau=int(MsgKind.Q), j=self.id)
                self._send(holders, msg)
            return
        self._maybe_ready()

    def _maybe_ready(self):
        if (self.mode != VIEWCHANGE or self.ready_sent or self.plan is None
                or self.q_seen is None or self.q_seen.v != self.view):
            return
        if self.tip_s < self.plan.tip_s:
            return
        self.ready_sent = True
        msg = self._signed(Ready, v=self.view, s=self.plan.tip_s,
                           h=self.plan.tip_h, k=self.id)
        self._send([self.asg.primary], msg)

    def on_ready(self, msg: Ready, sender: int):
        if msg.v != self.view or self.mode != VIEWCHANGE:
            if msg.v > self.view:
                self._buffer(msg, sender)
            return
        if not self.is_primary or msg.k in self.ready_tally:
            return
        if not self._sig_ok(msg, msg.k):
            raise BadSignature("ready")
        self.ready_tally[msg.k] = msg
        if not self.p_sent and len(self.ready_tally) >= self.cfg.quorum:
            self.p_sent = True
            p = ReadyBundle(self.view, tuple(self.ready_tally[k]
                                             for k in sorted(self.ready_tally)))
            self._send(list(self.asg.members) + [self.id], p)

    def ready_bundle_ok(self, p: ReadyBundle) -> bool:
        seen = set()
        for r in p.readies:
            if r.v != p.v or r.k in seen or not self._sig_ok(r, r.k):
                return False
            seen.add(r.k)
        return len(seen) >= self.cfg.quorum

    def on_ready_bundle(self, msg: ReadyBundle, sender: int):
        if msg.v < self.view or (msg.v == self.view and self.mode == NORMAL):
            return
        if msg.v > self.view or self.q_seen is None:
            self._buffer(msg, sender)
            return
        if not self.ready_bundle_ok(msg):
            raise ShortBundle("ready bundle")
        if self.is_member and not self.p_forwarded:
            self.p_forwarded = True
            self._send(self._regulars(), msg)
        self._install()

    def _install(self):
        plan = self.plan
        self.mode = NORMAL
        self._reset_view_state(plan.tip_s, plan.tip_h)
        self.pp.rec_active = self.cf.rec_active = True
        self.fires = 0
        self._emit(ViewInstalled(self.view))
        self._arm_timer()
        if self.is_primary:
            self.begin_view()
        self._replay_future()

    # -- recovery requests ----------------------------------------------------------------

    def on_primary_timeout(self, msg: PrimaryTimeout, sender: int):
        if not self._current(msg.v, msg, sender):
            return
        if msg.p != self.asg.primary or not self._sig_ok(msg, msg.p):
            raise BadSignature("primary timeout")
        if not self._beta_ok(msg.beta):
            raise BadCert("primary timeout")
        key = msg.beta.rho.digest
        if key in self.gp_answered:
            return
        self.gp_answered.add(key)
        block = self.known.get(key)
        if block is not None:
            reply = Proposal(msg.beta, block)
            if self.is_member:
                self._send([self.asg.primary], reply)
            else:
                self._send(self.asg.members, reply)
            return
        neg = self._signed(NegativeResponse, beta=msg.beta, e=self.id)
        self._send([self.asg.primary], neg)
        if self.is_member and key not in self.gp_forwarded:
            self.gp_forwarded.add(key)
            self.gp_relay.add(key)
            self._send(self._regulars(), msg)

    def on_negative(self, msg: NegativeResponse, sender: int):
        if not self.is_primary or self.mode != NORMAL:
            return
        key = msg.beta.rho.digest
        if key not in self.rec_requested or key in self.rec_absent:
            return
        if msg.sig.signer != msg.e or not self.keys.verify_sig(
                msg.sig, self._neg(msg.beta)):
            raise BadSignature("negative response")
        self._negative(msg.beta, msg.e, msg.sig)

    # -- caches --------------------------------------------------------------------------

    def _cache(self, store: dict, s: int, item):
        if len(store) >= self.cfg.cache_limit and s not in store:
            if s not in self.gap_complained:
                self.gap_complained.add(s)
                self._complain(MsgKind.BLOCK, gap=(s, b""))
            return
        store.setdefault(s, []).append(item)

    def _replay_cached(self, store: dict, s: int):
        items = store.pop(s, None)
        if not items:
            return
        for item in items:
            try:
                if store is self.cached_pps:
                    self.on_pre_prepare(item, self.asg.primary)
                else:
                    self._accept_proposal(*item)
            except ValidationError:
                continue


_HANDLERS = {
    PrePrepare: Node.on_pre_prepare,
    PreProposal: Node.on_pre_proposal,
    Proposal: Node.on_proposal,
    Confirm: Node.on_confirm,
    Approval: Node.on_approval,
    Complaint: Node.on_complaint,
    SyncBlocks: Node.on_sync_blocks,
    ExplicitComplaint: Node.on_explicit,
    Proof: Node.on_proof,
    ConfV: Node.on_confv,
    ApproveV: Node.on_approvev,
    ViewChange: Node.on_view_change,
    HistoryBundle: Node.on_history,
    Ready: Node.on_ready,
    ReadyBundle: Node.on_ready_bundle,
    PrimaryTimeout: Node.on_primary_timeout,
    NegativeResponse: Node.on_negative,
}

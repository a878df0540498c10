"""Wire types: blocks, certificates and every protocol message.

Vote-like messages (``VOTE_FIELDS`` set) are signed over a digest that leaves
out the signer id, so that the individual signatures can be aggregated into a
certificate.  Every other signed message is signed over its own encoding with
the ``sig`` field omitted.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .crypto import AggregateSignature, Signature, sha256
from .encoding import digest, encode, encode_fields, wire

wire(1)(Signature)
wire(2)(AggregateSignature)


class MsgKind(enum.IntEnum):
    """What a timeout complaint says is missing."""
    BLOCK = 0
    Q = 1
    P = 2
    APPROVAL = 3


class EvidenceKind(enum.IntEnum):
    INVALID_PROPOSAL = 0
    EQUIVOCATION = 1


@wire(3)
@dataclass(frozen=True)
class Transaction:
    client: int
    t: int
    op: bytes

    @property
    def id(self) -> bytes:
        return digest(self)


@wire(4)
@dataclass(frozen=True)
class BlockHeader:
    v: int
    s: int
    h: bytes  # payload digest
    d: bytes  # parent block digest
    proposer_sig: Signature

    SIG_FIELD = "proposer_sig"

    @property
    def proposer(self) -> int:
        return self.proposer_sig.signer

    @property
    def digest(self) -> bytes:
        return digest(self)


@wire(5)
@dataclass(frozen=True)
class Payload:
    txs: tuple[Transaction, ...]


@wire(6)
@dataclass(frozen=True)
class ProposalCert:
    """beta: a header plus a committee quorum of Pre-Proposal signatures.

    ``v`` is the view whose committee certified the header.  It differs
    from ``rho.v`` when a block from an earlier view is re-proposed.
    """
    v: int
    rho: BlockHeader
    sigma_r: AggregateSignature


@wire(7)
@dataclass(frozen=True)
class AbsenceProof:
    beta: ProposalCert
    responses: AggregateSignature


@wire(8)
@dataclass(frozen=True)
class Block:
    header: BlockHeader
    o: tuple[AbsenceProof, ...]
    m: Payload

    @property
    def s(self) -> int:
        return self.header.s

    @property
    def digest(self) -> bytes:
        return self.header.digest

    @property
    def txs(self) -> tuple[Transaction, ...]:
        return self.m.txs


@wire(9)
@dataclass(frozen=True)
class ApprovalCert:
    v: int
    s: int
    h: bytes  # block digest
    sigma: AggregateSignature


# -- normal mode ----------------------------------------------------------------

@wire(20)
@dataclass(frozen=True)
class PrePrepare:
    v: int
    block: Block
    sig: Signature

    def signing_digest(self) -> bytes:
        return sha256(bytes((self.TAG,)) + self.v.to_bytes(8, "big")
                      + self.block.digest)


@wire(21)
@dataclass(frozen=True)
class PreProposal:
    v: int
    s: int
    h: bytes
    i: int
    sig: Signature

    VOTE_FIELDS = ("v", "s", "h")


@wire(22)
@dataclass(frozen=True)
class Proposal:
    """Certified proposal.  ``block`` is None when only beta is forwarded."""
    beta: ProposalCert
    block: Optional[Block]


@wire(23)
@dataclass(frozen=True)
class Confirm:
    v: int
    s: int
    h: bytes
    j: int
    sig: Signature

    VOTE_FIELDS = ("v", "s", "h")


@wire(24)
@dataclass(frozen=True)
class Approval:
    cert: ApprovalCert


@wire(25)
@dataclass(frozen=True)
class ClientResponse:
    """One signed response covering every transaction of a committed block."""
    s: int
    v: int
    h: bytes
    ntx: int
    i: int
    sig: Signature


# -- synchronization and complaints ---------------------------------------------

@wire(30)
@dataclass(frozen=True)
class Complaint:
    """Timeout complaint Gamma."""
    v: int
    s1: int
    h1: bytes
    s2: Optional[int]
    h2: Optional[bytes]
    tau: int
    j: int
    sig: Signature


@wire(31)
@dataclass(frozen=True)
class PrimaryTimeout:
    """Gamma_p: the new primary asks for the payload of a pending beta."""
    v: int
    beta: ProposalCert
    p: int
    sig: Signature


@wire(32)
@dataclass(frozen=True)
class Evidence:
    kind: int
    headers: tuple[BlockHeader, ...]
    certs: tuple[ProposalCert, ...]
    block: Optional[Block]


@wire(33)
@dataclass(frozen=True)
class ExplicitComplaint:
    v: int
    evidence: Evidence
    i: int
    sig: Signature


@wire(34)
@dataclass(frozen=True)
class Proof:
    v: int
    complaints: tuple[Complaint, ...]
    explicit: Optional[ExplicitComplaint]


@wire(35)
@dataclass(frozen=True)
class ConfV:
    v: int
    j: int
    sig: Signature
    proof: Proof

    VOTE_FIELDS = ("v",)


@wire(36)
@dataclass(frozen=True)
class ApproveV:
    v: int
    sigma: AggregateSignature
    proof: Proof
    i: int
    sig: Signature


@wire(37)
@dataclass(frozen=True)
class ViewChange:
    v: int  # the view being entered
    s: int  # committed tip height
    h: bytes  # committed tip digest
    k: int
    sig: Signature
    commit: Optional[ApprovalCert]
    betas: tuple[ProposalCert, ...]


@wire(38)
@dataclass(frozen=True)
class HistoryBundle:
    v: int
    views: tuple[ViewChange, ...]


@wire(39)
@dataclass(frozen=True)
class Ready:
    v: int
    s: int
    h: bytes
    k: int
    sig: Signature


@wire(40)
@dataclass(frozen=True)
class ReadyBundle:
    v: int
    readies: tuple[Ready, ...]


@wire(41)
@dataclass(frozen=True)
class NegativeResponse:
    beta: ProposalCert
    e: int
    sig: Signature

    VOTE_FIELDS = ("beta",)


@wire(42)
@dataclass(frozen=True)
class SyncEntry:
    block: Block
    cert: ApprovalCert


@wire(43)
@dataclass(frozen=True)
class SyncBlocks:
    entries: tuple[SyncEntry, ...]


PROTOCOL_MESSAGES = (
    PrePrepare, PreProposal, Proposal, Confirm, Approval, ClientResponse,
    Complaint, PrimaryTimeout, ExplicitComplaint, Proof, ConfV, ApproveV,
    ViewChange, HistoryBundle, Ready, ReadyBundle, NegativeResponse,
    SyncBlocks,
)


def signing_digest(msg) -> bytes:
    """Digest a message's signature is computed over."""
    custom = getattr(msg, "signing_digest", None)
    if custom is not None:
        return custom()
    cached = msg.__dict__.get("_sdigest")
    if cached is not None:
        return cached
    names = getattr(msg, "VOTE_FIELDS", None)
    if names is None:
        sig_field = getattr(msg, "SIG_FIELD", "sig")
        names = [f for f in msg.__dataclass_fields__ if f != sig_field]
    out = sha256(encode_fields(msg, names))
    object.__setattr__(msg, "_sdigest", out)
    return out


def vote_digest(cls, **fields) -> bytes:
    """Signing digest for a vote of type ``cls`` without building the message.

    The returned digest equals ``signing_digest(cls(..., **fields))`` for any
    signer, which is what certificates aggregate over.
    """
    placeholder = {f: 0 for f in cls.__dataclass_fields__ if f not in fields}
    placeholder["sig"] = Signature(0, b"")
    if "proof" in placeholder:
        placeholder["proof"] = Proof(0, (), None)
    msg = cls(**{**placeholder, **fields})
    return signing_digest(msg)


def confirm_digest(v: int, s: int, h: bytes) -> bytes:
    return vote_digest(Confirm, v=v, s=s, h=h)


def preproposal_digest(v: int, s: int, h: bytes) -> bytes:
    return vote_digest(PreProposal, v=v, s=s, h=h)


def confv_digest(v: int) -> bytes:
    return vote_digest(ConfV, v=v)


def negative_digest(beta: ProposalCert) -> bytes:
    return vote_digest(NegativeResponse, beta=beta)


def payload_digest(m: Payload) -> bytes:
    return digest(m)


def kind_name(msg) -> str:
    return type(msg).__name__

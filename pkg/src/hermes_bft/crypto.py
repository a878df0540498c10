"""Signature provider for the simulation.

Every node owns a 256-bit secret derived from the run seed and its id.  An
authenticator is the SHA-256 of ``secret || digest``.  Verification goes
through a :class:`KeyRing`, which plays the role of the public-key directory:
it can check any authenticator but only hands out a signing handle for a
single node, so code holding one node's :class:`Signer` cannot produce tags
for another node.

Aggregates are a signer bitmap plus the individual authenticators, all over
the same digest.  Nothing outside this module knows how a tag is computed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable


class CryptoError(Exception):
    pass


class DuplicateSigner(CryptoError):
    pass


class BadPart(CryptoError):
    pass


class QuorumShort(CryptoError):
    pass


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class Signature:
    signer: int
    tag: bytes


@dataclass(frozen=True)
class AggregateSignature:
    """Signer set and per-signer tags, sorted by signer id."""

    signers: tuple[int, ...]
    tags: tuple[bytes, ...]

    def __post_init__(self):
        if len(self.signers) != len(self.tags):
            raise ValueError("signers and tags differ in length")

    def __len__(self) -> int:
        return len(self.signers)

    def parts(self) -> list[Signature]:
        return [Signature(i, t) for i, t in zip(self.signers, self.tags)]


def node_secret(run_seed: bytes, node_id: int) -> bytes:
    return sha256(run_seed + node_id.to_bytes(8, "big"))


def _tag(secret: bytes, digest: bytes) -> bytes:
    return sha256(secret + digest)


class Signer:
    """Signing handle for one node."""

    __slots__ = ("node_id", "_secret")

    def __init__(self, node_id: int, secret: bytes):
        self.node_id = node_id
        self._secret = secret

    def sign(self, digest: bytes) -> Signature:
        if len(digest) != 32:
            raise ValueError("digest must be 32 bytes")
        return Signature(self.node_id, _tag(self._secret, digest))


class KeyRing:
    """Key directory for a run of ``n`` nodes."""

    def __init__(self, run_seed: bytes, n: int):
        self.n = n
        self._secrets = [node_secret(run_seed, i) for i in range(n)]

    def signer(self, node_id: int) -> Signer:
        return Signer(node_id, self._secrets[node_id])

    def verify(self, signer: int, digest: bytes, tag: bytes) -> bool:
        if not 0 <= signer < self.n or len(digest) != 32:
            return False
        return _tag(self._secrets[signer], digest) == tag

    def verify_sig(self, sig: Signature, digest: bytes) -> bool:
        return self.verify(sig.signer, digest, sig.tag)

    def aggregate(self, parts: Iterable[Signature], digest: bytes,
                  quorum: int) -> AggregateSignature:
        by_signer: dict[int, bytes] = {}
        for p in parts:
            if p.signer in by_signer:
                raise DuplicateSigner(p.signer)
            if not self.verify(p.signer, digest, p.tag):
                raise BadPart(p.signer)
            by_signer[p.signer] = p.tag
        if len(by_signer) < quorum:
            raise QuorumShort(f"{len(by_signer)} < {quorum}")
        ids = tuple(sorted(by_signer))
        return AggregateSignature(ids, tuple(by_signer[i] for i in ids))

    def verify_aggregate(self, agg: AggregateSignature, digest: bytes,
                         quorum: int, eligible=None) -> bool:
        signers = agg.signers
        if len(signers) < quorum:
            return False
        if any(b <= a for a, b in zip(signers, signers[1:])):
            # unsorted or duplicated signer ids
            return False
        if eligible is not None and not all(s in eligible for s in signers):
            return False
        return all(self.verify(s, digest, t) for s, t in zip(signers, agg.tags))

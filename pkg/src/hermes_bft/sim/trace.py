"""Run trace: typed records, running digest and the on-disk format.

File layout::

    magic    4 bytes  b"HTRC"
    version  1 byte   0x01
    record*  4-byte big-endian length, then the record's canonical encoding
    footer   4 zero bytes, then the 32-byte trace digest

The digest is SHA-256 over the concatenated length-prefixed records, so it
can be recomputed from the file alone.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Optional

from ..encoding import DecodeError, decode, encode, wire

MAGIC = b"HTRC"
VERSION = 1
_U32 = struct.Struct(">I")


@wire(80)
@dataclass(frozen=True)
class RHeader:
    protocol: str
    n: int
    f: int
    c: int
    seed: int
    byzantine: tuple[int, ...]
    tick_us: int
    target: int


@wire(81)
@dataclass(frozen=True)
class RSend:
    t: int
    src: int
    dst: int
    kind: str
    s: int  # block height the message is about, 0 if none
    size: int
    deliver: int
    dropped: bool


@wire(82)
@dataclass(frozen=True)
class RCommit:
    t: int
    node: int
    s: int
    h: bytes
    v: int
    ntx: int
    signers: tuple[int, ...]


@wire(83)
@dataclass(frozen=True)
class RRevoke:
    t: int
    node: int
    s: int
    h: bytes


@wire(84)
@dataclass(frozen=True)
class RPropose:
    t: int
    node: int
    s: int
    h: bytes
    ntx: int


@wire(85)
@dataclass(frozen=True)
class RAccept:
    """A virtual client collected 2f+1 responses for block (s, h)."""
    t: int
    s: int
    h: bytes
    ntx: int


@wire(86)
@dataclass(frozen=True)
class RBlacklist:
    t: int
    node: int
    signers: tuple[int, ...]


@wire(87)
@dataclass(frozen=True)
class RView:
    t: int
    node: int
    v: int
    installed: bool


@wire(88)
@dataclass(frozen=True)
class REnd:
    t: int
    reason: str


class Trace:
    def __init__(self, header: RHeader, keep_sends: bool = True):
        self.header = header
        self.records: list = []
        self.keep_sends = keep_sends
        self._hash = hashlib.sha256()
        self._digest: Optional[bytes] = None
        self.add(header)

    def add(self, rec):
        data = encode(rec)
        self._hash.update(_U32.pack(len(data)))
        self._hash.update(data)
        if self.keep_sends or not isinstance(rec, RSend):
            self.records.append(rec)

    @property
    def digest(self) -> bytes:
        return self._hash.copy().digest()

    def of(self, cls) -> list:
        return [r for r in self.records if isinstance(r, cls)]

    def to_bytes(self) -> bytes:
        if not self.keep_sends:
            raise ValueError("trace was recorded without send records")
        parts = [MAGIC, bytes((VERSION,))]
        for rec in self.records:
            data = encode(rec)
            parts.append(_U32.pack(len(data)))
            parts.append(data)
        parts.append(bytes(4))
        parts.append(self.digest)
        return b"".join(parts)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())


class TraceFormatError(ValueError):
    pass


def parse_trace(data: bytes) -> tuple[list, bytes, bytes]:
    """Return ``(records, stored_digest, recomputed_digest)``."""
    if data[:4] != MAGIC or len(data) < 5 or data[4] != VERSION:
        raise TraceFormatError("not a trace file")
    pos = 5
    h = hashlib.sha256()
    records = []
    while True:
        if pos + 4 > len(data):
            raise TraceFormatError("truncated trace")
        (length,) = _U32.unpack_from(data, pos)
        if length == 0:
            stored = data[pos + 4:pos + 36]
            if len(stored) != 32 or pos + 36 != len(data):
                raise TraceFormatError("bad footer")
            return records, stored, h.digest()
        chunk = data[pos + 4:pos + 4 + length]
        if len(chunk) != length:
            raise TraceFormatError("truncated record")
        try:
            records.append(decode(chunk))
        except DecodeError as exc:
            raise TraceFormatError(f"bad record at byte {pos}: {exc}") from None
        h.update(data[pos:pos + 4 + length])
        pos += 4 + length


def load_trace(path) -> tuple[list, bytes, bytes]:
    with open(path, "rb") as fh:
        return parse_trace(fh.read())

"""Canonical binary encoding.

Layout rules:

* a registered dataclass is its 1-byte tag followed by its fields in
  declaration order;
* ``int`` is 8 bytes big-endian unsigned, ``bool`` one byte;
* ``bytes`` and ``str`` (UTF-8) carry a 4-byte big-endian length prefix;
* ``tuple[X, ...]`` is a 4-byte count followed by the items;
* ``Optional[X]`` is a presence byte (0 or 1) followed by ``X`` if present.

Field types are read from the dataclass annotations, so the byte stream is
fully determined by the declared types and decoding is unambiguous.
Encodings are cached on the (frozen) instances.
"""

from __future__ import annotations

import dataclasses
import struct
import typing
from typing import Any, Callable, Optional, Union

from .crypto import sha256

_U64 = struct.Struct(">Q")
_U32 = struct.Struct(">I")

_BY_TAG: dict[int, type] = {}
_ENCODERS: dict[type, list] = {}
_DECODERS: dict[type, list] = {}


class DecodeError(ValueError):
    pass


def wire(tag: int):
    """Register a frozen dataclass under a one-byte tag."""
    def deco(cls):
        if tag in _BY_TAG:
            raise ValueError(f"tag {tag} already used by {_BY_TAG[tag].__name__}")
        if not 0 <= tag < 256:
            raise ValueError("tag must fit in one byte")
        cls.TAG = tag
        _BY_TAG[tag] = cls
        return cls
    return deco


def _enc_int(v, out):
    if v < 0:
        raise ValueError(f"negative integer {v} is not encodable")
    out.append(_U64.pack(v))


def _enc_bool(v, out):
    out.append(b"\x01" if v else b"\x00")


def _enc_bytes(v, out):
    out.append(_U32.pack(len(v)))
    out.append(v)


def _enc_str(v, out):
    _enc_bytes(v.encode("utf-8"), out)


def _enc_obj(v, out):
    out.append(encode(v))


def _encoder_for(tp) -> Callable:
    if tp is int:
        return _enc_int
    if tp is bool:
        return _enc_bool
    if tp is bytes:
        return _enc_bytes
    if tp is str:
        return _enc_str
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is Union:
        inner = [a for a in args if a is not type(None)]
        if len(inner) != 1 or len(args) != 2:
            raise TypeError(f"only Optional[X] unions are encodable: {tp}")
        sub = _encoder_for(inner[0])

        def enc_opt(v, out):
            if v is None:
                out.append(b"\x00")
            else:
                out.append(b"\x01")
                sub(v, out)
        return enc_opt
    if origin is tuple:
        if len(args) != 2 or args[1] is not Ellipsis:
            raise TypeError(f"only homogeneous tuples are encodable: {tp}")
        sub = _encoder_for(args[0])

        def enc_seq(v, out):
            out.append(_U32.pack(len(v)))
            for item in v:
                sub(item, out)
        return enc_seq
    if dataclasses.is_dataclass(tp) and hasattr(tp, "TAG"):
        return _enc_obj
    raise TypeError(f"unsupported field type {tp!r}")


def _fields(cls):
    hints = typing.get_type_hints(cls)
    return [(f.name, hints[f.name]) for f in dataclasses.fields(cls)]


def _plan(cls):
    plan = _ENCODERS.get(cls)
    if plan is None:
        plan = [(name, _encoder_for(tp)) for name, tp in _fields(cls)]
        _ENCODERS[cls] = plan
    return plan


def encode(obj: Any) -> bytes:
    """Canonical bytes of a registered dataclass instance."""
    cached = obj.__dict__.get("_enc")
    if cached is not None:
        return cached
    out = [bytes((obj.TAG,))]
    for name, enc in _plan(type(obj)):
        enc(getattr(obj, name), out)
    data = b"".join(out)
    object.__setattr__(obj, "_enc", data)
    return data


def encode_fields(obj: Any, names) -> bytes:
    """Tag plus the named subset of fields, in declaration order (uncached)."""
    out = [bytes((obj.TAG,))]
    for name, enc in _plan(type(obj)):
        if name in names:
            enc(getattr(obj, name), out)
    return b"".join(out)


def digest(obj: Any) -> bytes:
    cached = obj.__dict__.get("_digest")
    if cached is None:
        cached = sha256(encode(obj))
        object.__setattr__(obj, "_digest", cached)
    return cached


def size(obj: Any) -> int:
    return len(encode(obj))


# -- decoding -----------------------------------------------------------------

class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes, pos: int = 0):
        self.buf = buf
        self.pos = pos

    def take(self, k: int) -> bytes:
        end = self.pos + k
        if end > len(self.buf):
            raise DecodeError("truncated input")
        chunk = self.buf[self.pos:end]
        self.pos = end
        return chunk


def _decoder_for(tp) -> Callable:
    if tp is int:
        return lambda r: _U64.unpack(r.take(8))[0]
    if tp is bool:
        def dec_bool(r):
            b = r.take(1)
            if b not in (b"\x00", b"\x01"):
                raise DecodeError("bad bool byte")
            return b == b"\x01"
        return dec_bool
    if tp is bytes:
        return lambda r: r.take(_U32.unpack(r.take(4))[0])
    if tp is str:
        return lambda r: r.take(_U32.unpack(r.take(4))[0]).decode("utf-8")
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is Union:
        sub = _decoder_for([a for a in args if a is not type(None)][0])

        def dec_opt(r):
            flag = r.take(1)
            if flag == b"\x00":
                return None
            if flag != b"\x01":
                raise DecodeError("bad presence byte")
            return sub(r)
        return dec_opt
    if origin is tuple:
        sub = _decoder_for(args[0])
        return lambda r: tuple(sub(r) for _ in range(_U32.unpack(r.take(4))[0]))
    if dataclasses.is_dataclass(tp):
        return lambda r: _decode_obj(r, tp)
    raise TypeError(f"unsupported field type {tp!r}")


def _decode_obj(r: _Reader, expect: Optional[type] = None):
    tag = r.take(1)[0]
    cls = _BY_TAG.get(tag)
    if cls is None:
        raise DecodeError(f"unknown tag {tag}")
    if expect is not None and cls is not expect:
        raise DecodeError(f"expected {expect.__name__}, got {cls.__name__}")
    plan = _DECODERS.get(cls)
    if plan is None:
        plan = [(name, _decoder_for(tp)) for name, tp in _fields(cls)]
        _DECODERS[cls] = plan
    return cls(**{name: dec(r) for name, dec in plan})


def decode(data: bytes) -> Any:
    r = _Reader(data)
    obj = _decode_obj(r)
    if r.pos != len(data):
        raise DecodeError("trailing bytes")
    return obj


def decode_prefix(data: bytes, pos: int = 0):
    """Decode one object starting at ``pos``; return ``(obj, next_pos)``."""
    r = _Reader(data, pos)
    obj = _decode_obj(r)
    return obj, r.pos

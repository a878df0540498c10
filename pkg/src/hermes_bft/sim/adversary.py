"""Byzantine strategies applied to a node's intended outputs.

Byzantine nodes run the ordinary :class:`~hermes_bft.node.Node` code; a
strategy then suppresses, delays or rewrites what that node tried to send.
A strategy can only sign with its own node's key.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..crypto import sha256
from ..encoding import digest
from ..messages import Block, BlockHeader, Payload, PrePrepare, Transaction
from ..node import Send

STRATEGIES = ("crash", "silent", "withhold", "equivocate", "delay", "invalid")


@dataclass(frozen=True)
class StrategySpec:
    name: str
    args: tuple = ()
    at: int = 0  # tick from which the strategy is active

    def __post_init__(self):
        if self.name not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.name!r}")


@dataclass(frozen=True)
class Out:
    """A send as actually performed: destinations, message, extra delay."""
    dests: tuple
    msg: object
    delay: int = 0


def _resign(node, cls, obj, **changes):
    fields = {k: getattr(obj, k) for k in obj.__dataclass_fields__}
    fields.update(changes)
    sig_field = getattr(cls, "SIG_FIELD", "sig")
    fields.pop(sig_field)
    return node._signed(cls, **fields)


def _variant(node, pp: PrePrepare, j: int) -> PrePrepare:
    block = pp.block
    salt = Transaction(0, 0, b"equivocate" + j.to_bytes(4, "big"))
    payload = Payload(block.m.txs + (salt,))
    header = _resign(node, BlockHeader, block.header, h=digest(payload))
    return _resign(node, PrePrepare, pp, block=Block(header, block.o, payload))


def _corrupt(node, pp: PrePrepare) -> PrePrepare:
    block = pp.block
    header = _resign(node, BlockHeader, block.header, h=sha256(block.header.h))
    return _resign(node, PrePrepare, pp, block=Block(header, block.o, block.m))


def _own_fresh(node, msg) -> bool:
    return (isinstance(msg, PrePrepare) and msg.block.header.v == msg.v
            and msg.block.header.proposer == node.id)


def adversary_step(spec: StrategySpec, node, outputs: list, now: int,
                   byzantine=frozenset()) -> list:
    """Map intended node outputs to the sends a byzantine node performs."""
    sends = [Out(o.dests, o.msg) for o in outputs if isinstance(o, Send)]
    if now < spec.at:
        return sends
    name = spec.name
    if name == "crash":
        return []
    if name == "silent":
        return [o for o in sends if not isinstance(o.msg, PrePrepare)]
    if name == "withhold":
        zeta = set(spec.args)
        out = []
        for o in sends:
            dests = tuple(d for d in o.dests if d not in zeta)
            if dests:
                out.append(Out(dests, o.msg))
        return out
    if name == "delay":
        d = spec.args[0] if spec.args else 0
        return [Out(o.dests, o.msg, d) for o in sends]
    if name == "invalid":
        return [Out(o.dests, _corrupt(node, o.msg)) if _own_fresh(node, o.msg)
                else o for o in sends]
    if name == "equivocate":
        k = spec.args[0] if spec.args else 2
        out = []
        for o in sends:
            if not _own_fresh(node, o.msg):
                out.append(o)
                continue
            colluders = [d for d in o.dests if d in byzantine]
            honest = [d for d in o.dests if d not in byzantine]
            variants = [o.msg] + [_variant(node, o.msg, j) for j in range(1, k)]
            for j, var in enumerate(variants):
                dests = tuple(sorted(colluders + honest[j::k]))
                if dests:
                    out.append(Out(dests, var))
        return out
    raise AssertionError(name)

"""Safety and liveness verdicts computed from trace records alone."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from ..sim.trace import RAccept, RCommit, REnd, RHeader, RRevoke, RSend, RView


class UnscoredTrace(ValueError):
    """The trace lies outside the fault model (more than f byzantine)."""


@dataclass(frozen=True)
class Verdicts:
    r_safe: bool
    s_safe: bool
    client_safe: bool
    certified: bool  # every honest commit carried a 2f+1 certificate

    @property
    def ok(self) -> bool:
        return self.r_safe and self.s_safe and self.client_safe and self.certified


def _header(records) -> RHeader:
    if not records or not isinstance(records[0], RHeader):
        raise ValueError("trace does not start with a header record")
    hdr = records[0]
    if len(set(hdr.byzantine)) > hdr.f:
        raise UnscoredTrace(f"{len(hdr.byzantine)} byzantine nodes exceed f={hdr.f}")
    return hdr


def check_safety(records) -> Verdicts:
    hdr = _header(records)
    byz = set(hdr.byzantine)
    quorum = 2 * hdr.f + 1
    committers = defaultdict(lambda: defaultdict(set))  # s -> h -> nodes
    honest_at = defaultdict(set)  # s -> honest digests ever committed
    accepted = defaultdict(set)
    s_safe = True
    certified = True
    for r in records:
        t = type(r)
        if t is RCommit:
            committers[r.s][r.h].add(r.node)
            if r.node not in byz:
                honest_at[r.s].add(r.h)
                if len(set(r.signers)) < quorum:
                    certified = False
        elif t is RRevoke:
            if r.node not in byz:
                s_safe = False
        elif t is RAccept:
            accepted[r.s].add(r.h)
    r_safe = True
    for s, by_digest in committers.items():
        strong = [h for h, nodes in by_digest.items()
                  if len(nodes) >= quorum or len(nodes - byz) >= hdr.f + 1]
        if len(strong) > 1:
            r_safe = False
    if any(len(hs) > 1 for hs in honest_at.values()):
        s_safe = False
    client_safe = all(len(hs) <= 1 for hs in accepted.values())
    return Verdicts(r_safe, s_safe, client_safe, certified)


def progress_times(records) -> list[int]:
    """Ticks at which the highest honest committed height grew."""
    hdr = _header(records)
    byz = set(hdr.byzantine)
    best = 0
    out = []
    for r in records:
        if type(r) is RCommit and r.node not in byz and r.s > best:
            best = r.s
            out.append(r.t)
    return out


def check_liveness(records, window: int) -> bool:
    _header(records)
    end = records[-1]
    times = [0] + progress_times(records)
    for a, b in zip(times, times[1:]):
        if b - a > window:
            return False
    if isinstance(end, REnd) and end.reason != "target":
        return end.t - times[-1] <= window
    return True


def max_consecutive_view_changes(records) -> int:
    """Longest run of view changes an honest node entered without a commit."""
    hdr = _header(records)
    byz = set(hdr.byzantine)
    run = defaultdict(int)
    worst = 0
    for r in records:
        t = type(r)
        if t is RView and not r.installed and r.node not in byz:
            run[r.node] += 1
            worst = max(worst, run[r.node])
        elif t is RCommit and r.node not in byz:
            run[r.node] = 0
    return worst


def count_messages(records) -> dict:
    """``{kind: {height: count}}`` over every send in the trace."""
    out: dict = defaultdict(lambda: defaultdict(int))
    for r in records:
        if type(r) is RSend:
            out[r.kind][r.s] += 1
    return {k: dict(v) for k, v in out.items()}

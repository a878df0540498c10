"""Per-run metrics and the CSV row format."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields

from ..sim.trace import RAccept, RPropose, RView
from .oracles import check_safety

CSV_COLUMNS = (
    "protocol", "n", "f", "c", "block_size", "seed", "throughput_tps",
    "lat_mean_ticks", "lat_p99_ticks", "msgs_per_block", "bytes_per_block",
    "view_changes", "r_safe", "s_safe", "client_safe",
)


@dataclass(frozen=True)
class MetricsRow:
    protocol: str
    n: int
    f: int
    c: int
    block_size: int
    seed: int
    throughput_tps: float
    lat_mean_ticks: float
    lat_p99_ticks: int
    msgs_per_block: float
    bytes_per_block: float
    view_changes: int
    r_safe: bool
    s_safe: bool
    client_safe: bool

    def csv_values(self) -> list[str]:
        out = []
        for v in astuple(self):
            if isinstance(v, bool):
                out.append("true" if v else "false")
            elif isinstance(v, float):
                out.append(f"{v:.3f}")
            else:
                out.append(str(v))
        return out


assert tuple(f.name for f in fields(MetricsRow)) == CSV_COLUMNS


def nearest_rank(values, q: float):
    """Nearest-rank percentile of a non-empty sequence."""
    ordered = sorted(values)
    k = max(1, math.ceil(q * len(ordered)))
    return ordered[k - 1]


def throughput(accepts, tick_us: int) -> float:
    """Transactions per second between the first and last client acceptance.

    The first block only opens the measurement window, so pipeline start-up
    does not count.  With a single acceptance the window starts at tick 0.
    """
    if not accepts:
        return 0.0
    accepts = sorted(accepts, key=lambda r: r.t)
    if len(accepts) == 1:
        span, txs = accepts[0].t, accepts[0].ntx
    else:
        span = accepts[-1].t - accepts[0].t
        txs = sum(r.ntx for r in accepts[1:])
    if span <= 0:
        return 0.0
    return txs / (span * tick_us / 1e6)


def block_latencies(records) -> list[int]:
    proposed = {}
    for r in records:
        if type(r) is RPropose and r.h not in proposed:
            proposed[r.h] = r.t
    return [r.t - proposed[r.h] for r in records
            if type(r) is RAccept and r.h in proposed]


def compute_metrics(sim) -> MetricsRow:
    records = sim.trace.records
    sc = sim.sc
    accepts = [r for r in records if type(r) is RAccept]
    lats = block_latencies(records)
    blocks = max(1, len(accepts))
    byz = sim.byzantine
    views = [r.v for r in records if type(r) is RView and r.installed
             and r.node not in byz]
    verdicts = check_safety(records)
    return MetricsRow(
        protocol=sim.protocol, n=sc.n, f=sc.f, c=sc.c, block_size=sc.block_size,
        seed=sc.seed,
        throughput_tps=throughput(accepts, sc.tick_us),
        lat_mean_ticks=sum(lats) / len(lats) if lats else 0.0,
        lat_p99_ticks=nearest_rank(lats, 0.99) if lats else 0,
        msgs_per_block=sim.sent_msgs / blocks,
        bytes_per_block=sim.sent_bytes / blocks,
        view_changes=max(views, default=0),
        r_safe=verdicts.r_safe, s_safe=verdicts.s_safe,
        client_safe=verdicts.client_safe,
    )


def format_csv(rows, header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow(row.csv_values())
    return buf.getvalue()

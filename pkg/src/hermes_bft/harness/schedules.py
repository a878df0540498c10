"""Randomised adversary schedules for the safety and liveness suites."""

from __future__ import annotations

import random
from typing import Optional

from ..committee import select_committee
from ..sim.adversary import StrategySpec
from ..sim.runner import run_seed
from .scenario import Scenario

ALL = ("crash", "silent", "withhold", "equivocate", "delay", "invalid")


def _base(rng: random.Random, n: int, c: int, seed: int, pipelined: bool,
          epochs: int) -> dict:
    return dict(
        n=n, f=(n - 1) // 3, c=c, seed=seed, epochs=epochs, block_size=512,
        tx_size=128, timeout_base=200, backoff=2, pipelined=pipelined,
        latency=rng.randint(1, 10), jitter=rng.randint(0, 10), uplink=2000,
        max_ticks=200_000,
    )


def _strategy(rng: random.Random, name: str, n: int, f: int, honest: list,
              timeout_base: int) -> StrategySpec:
    at = rng.choice((0, 0, rng.randint(0, 4 * timeout_base)))
    if name == "withhold":
        k = rng.randint(1, max(1, f))
        return StrategySpec(name, tuple(sorted(rng.sample(honest, min(k, len(honest))))), at)
    if name == "delay":
        return StrategySpec(name, (rng.randint(0, timeout_base // 2),), at)
    if name == "equivocate":
        return StrategySpec(name, (2,), at)
    return StrategySpec(name, (), at)


def random_schedule(rng: random.Random, n: Optional[int] = None,
                    strategies=ALL, pipelined: Optional[bool] = None,
                    honest_quorum: bool = False, epochs: int = 3) -> Scenario:
    """Draw one scenario.

    With ``honest_quorum`` the committee has at least 2f+1 members, so the
    correct members alone always reach the committee quorum.
    """
    n = n or rng.choice((4, 7, 10))
    f = (n - 1) // 3
    lo = 2 * f + 1 if honest_quorum else 1
    c = rng.randint(lo, n - 1)
    seed = rng.getrandbits(32)
    if pipelined is None:
        pipelined = rng.random() < 0.3
    kw = _base(rng, n, c, seed, pipelined, epochs)
    nbyz = rng.randint(0, f)
    if "equivocate" in strategies and rng.random() < 0.3 and f >= 1:
        return _equivocation(rng, kw, n, f)
    asg = select_committee(run_seed(seed), 0, n, c)
    pool = list(range(n))
    # bias towards interesting placements: primary and committee members
    byz = set()
    if nbyz and rng.random() < 0.5:
        byz.add(asg.primary)
    while len(byz) < nbyz:
        byz.add(rng.choice(pool))
    honest = [i for i in range(n) if i not in byz]
    strat = []
    for i in sorted(byz):
        name = rng.choice(strategies)
        strat.append((i, _strategy(rng, name, n, f, honest, kw["timeout_base"])))
    return Scenario(byzantine=tuple(sorted(byz)), strategies=tuple(strat), **kw)


def _equivocation(rng: random.Random, kw: dict, n: int, f: int) -> Scenario:
    """Byzantine view-0 primary with a colluding committee quorum."""
    # committee small enough that primary + quorum fits in f
    sizes = [c for c in range(1, n) if 1 + c // 2 + 1 <= f]
    if sizes:
        c = rng.choice(sizes)
        q = c // 2 + 1
    else:
        # too few byzantine nodes to collude: the primary equivocates alone
        c = rng.randint(1, n - 1)
        q = 0
    ids = list(range(n))
    rng.shuffle(ids)
    primary = ids[0]
    members = sorted(ids[1:1 + c])
    byz = {primary, *members[:q]}
    while len(byz) < f and rng.random() < 0.5:
        byz.add(rng.choice(ids))
    kw.update(c=c, primary=primary, committee=tuple(members))
    spec = StrategySpec("equivocate", (2,), 0)
    return Scenario(byzantine=tuple(sorted(byz)),
                    strategies=tuple((i, spec) for i in sorted(byz)), **kw)

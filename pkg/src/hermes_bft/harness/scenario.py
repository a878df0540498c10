"""Scenario documents.

A scenario is a small INI-like UTF-8 text with three sections.  See
``docs/formats.md`` for the exact grammar; in short::

    [protocol]
    protocol = hermes          # hermes | baseline | both
    n = 4
    c = 2

    [network]
    uplink = 10000             # bytes per tick
    latency = 10

    [adversary]
    byzantine = 0
    strategy.0 = silent@0

Unknown keys, duplicate keys and malformed values are rejected with the
line number of the first offending line.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ..sim.adversary import STRATEGIES, StrategySpec


class ScenarioError(ValueError):
    def __init__(self, msg: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line else msg)


class SchemaError(ScenarioError):
    pass


class ConstraintError(ScenarioError):
    def __init__(self, msg: str, line: Optional[int] = None,
                 key: Optional[str] = None):
        self.key = key  # scenario key to blame, if one stands out
        super().__init__(msg, line)


PROTOCOLS = ("hermes", "baseline", "both")


@dataclass(frozen=True)
class Scenario:
    n: int
    f: int
    c: int
    protocol: str = "hermes"
    block_size: int = 4096
    epochs: int = 10
    seed: int = 0
    timeout_base: int = 1000
    backoff: int = 2
    pipelined: bool = False
    pipeline_depth: int = 4
    max_ticks: int = 10_000_000
    tx_size: int = 128
    tx_rate: Optional[Fraction] = None  # transactions per tick; None saturates
    tick_us: int = 1000
    primary: Optional[int] = None  # fixes the view-0 primary
    committee: Optional[tuple] = None  # fixes the view-0 committee
    uplink: int = 10_000
    primary_uplink: Optional[int] = None
    uplinks: tuple = ()  # (node, bytes/tick) overrides
    latency: int = 10
    jitter: int = 0
    loss: float = 0.0
    byzantine: tuple = ()
    strategies: tuple = ()  # (node, StrategySpec)

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def strategy_of(self, node: int) -> Optional[StrategySpec]:
        for i, spec in self.strategies:
            if i == node:
                return spec
        return None


def validate(sc: Scenario, line: Optional[int] = None):
    def bad(msg, key=None):
        raise ConstraintError(msg, line, key)

    if sc.protocol not in PROTOCOLS:
        bad(f"protocol must be one of {', '.join(PROTOCOLS)}", "protocol")
    if sc.f < 0 or sc.n != 3 * sc.f + 1:
        bad(f"n must equal 3f+1 ({sc.n} != 3*{sc.f}+1)", "f")
    if not 1 <= sc.c <= sc.n - 1:
        bad(f"c must lie in [1, n-1], got {sc.c}", "c")
    for name in ("block_size", "epochs", "timeout_base", "max_ticks", "tx_size",
                 "tick_us", "uplink", "pipeline_depth"):
        if getattr(sc, name) <= 0:
            bad(f"{name} must be positive", name)
    if sc.backoff < 1:
        bad("backoff must be >= 1", "backoff")
    if sc.latency < 0 or sc.jitter < 0:
        bad("latency and jitter must be non-negative", "latency")
    if not 0.0 <= sc.loss < 1.0:
        bad("loss must lie in [0, 1)", "loss")
    if sc.tx_rate is not None and sc.tx_rate <= 0:
        bad("tx_rate must be positive", "tx_rate")
    if sc.primary_uplink is not None and sc.primary_uplink <= 0:
        bad("primary_uplink must be positive", "primary_uplink")
    for node, bw in sc.uplinks:
        if not 0 <= node < sc.n or bw <= 0:
            bad(f"bad uplink override for node {node}", f"uplink.{node}")
    if (sc.primary is None) != (sc.committee is None):
        bad("primary and committee must be given together", "committee")
    if sc.committee is not None:
        members = set(sc.committee)
        if len(members) != sc.c or len(sc.committee) != sc.c:
            bad("committee must list exactly c distinct ids", "committee")
        if sc.primary in members:
            bad("primary must not be a committee member", "primary")
        if not all(0 <= i < sc.n for i in members | {sc.primary}):
            bad("committee ids out of range", "committee")
    byz = set(sc.byzantine)
    if len(byz) != len(sc.byzantine) or not all(0 <= i < sc.n for i in byz):
        bad("byzantine ids must be distinct and in range", "byzantine")
    if len(byz) > sc.f:
        bad(f"at most f={sc.f} byzantine nodes allowed, got {len(byz)}", "byzantine")
    for node, spec in sc.strategies:
        if node not in byz:
            bad(f"strategy given for non-byzantine node {node}", f"strategy.{node}")
        if spec.name == "withhold" and len(spec.args) > sc.f:
            bad("withhold target set larger than f", f"strategy.{node}")


# -- parsing ------------------------------------------------------------------

def _int(v: str) -> int:
    v = v.replace("_", "")
    if not v or not (v.isdigit() or (v[0] == "-" and v[1:].isdigit())):
        raise ValueError(f"expected an integer, got {v!r}")
    return int(v)


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _ids(v: str) -> tuple:
    if not v.strip():
        return ()
    return tuple(_int(x.strip()) for x in v.split(","))


def _rate(v: str) -> Optional[Fraction]:
    if v.lower() == "saturated":
        return None
    try:
        return Fraction(v)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"expected a rational rate or 'saturated', got {v!r}")


def _float(v: str) -> float:
    return float(v)


def parse_strategy(v: str) -> StrategySpec:
    at = 0
    if "@" in v:
        v, tick = v.rsplit("@", 1)
        at = _int(tick.strip())
    name, _, args = v.partition(":")
    name = name.strip()
    if name not in STRATEGIES:
        raise ValueError(f"unknown strategy {name!r}")
    return StrategySpec(name, _ids(args) if args else (), at)


_PROTOCOL_KEYS = {
    "protocol": str, "n": _int, "f": _int, "c": _int, "block_size": _int,
    "epochs": _int, "seed": _int, "timeout_base": _int, "backoff": _int,
    "pipelined": _bool, "pipeline_depth": _int, "max_ticks": _int,
    "tx_size": _int, "tx_rate": _rate, "tick_us": _int, "primary": _int,
    "committee": _ids,
}
_NETWORK_KEYS = {
    "uplink": _int, "primary_uplink": _int, "latency": _int, "jitter": _int,
    "loss": _float,
}


def parse_scenario(text: str) -> Scenario:
    values: dict = {}
    uplinks: dict = {}
    strategies: dict = {}
    seen: set = set()
    section = None
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise SchemaError("unterminated section header", lineno)
            section = line[1:-1].strip()
            if section not in ("protocol", "network", "adversary"):
                raise SchemaError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise SchemaError("expected 'key = value'", lineno)
        if section is None:
            raise SchemaError("entry outside of a section", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if (section, key) in seen:
            raise SchemaError(f"duplicate key {key!r}", lineno)
        seen.add((section, key))
        try:
            if section == "protocol":
                if key not in _PROTOCOL_KEYS:
                    raise SchemaError(f"unknown key {key!r} in [protocol]", lineno)
                values[key] = _PROTOCOL_KEYS[key](value)
            elif section == "network":
                if key.startswith("uplink."):
                    uplinks[_int(key[7:])] = _int(value)
                elif key in _NETWORK_KEYS:
                    values[key] = _NETWORK_KEYS[key](value)
                else:
                    raise SchemaError(f"unknown key {key!r} in [network]", lineno)
            else:
                if key == "byzantine":
                    values["byzantine"] = _ids(value)
                elif key.startswith("strategy."):
                    strategies[_int(key[9:])] = parse_strategy(value)
                else:
                    raise SchemaError(f"unknown key {key!r} in [adversary]", lineno)
        except SchemaError:
            raise
        except ValueError as exc:
            raise SchemaError(str(exc), lineno) from None
        lines[key] = lineno
    for req in ("n", "c"):
        if req not in values:
            raise SchemaError(f"missing required key {req!r} in [protocol]")
    if "f" not in values:
        values["f"] = (values["n"] - 1) // 3
    values["uplinks"] = tuple(sorted(uplinks.items()))
    values["strategies"] = tuple(sorted(strategies.items()))
    if "protocol" in values:
        values["protocol"] = values["protocol"].lower()
    try:
        return Scenario(**values)
    except ConstraintError as exc:
        raise ConstraintError(str(exc), _blame(exc.key, lines), exc.key) from None


def _blame(key: Optional[str], lines: dict) -> Optional[int]:
    # a derived f has no line of its own; n is what made it wrong
    for k in (key, "n" if key == "f" else None):
        if k in lines:
            return lines[k]
    return None


def format_scenario(sc: Scenario) -> str:
    """Inverse of :func:`parse_scenario` (up to comments and layout)."""
    out = ["[protocol]"]
    for key in _PROTOCOL_KEYS:
        v = getattr(sc, key)
        if v is None:
            if key == "tx_rate":
                out.append("tx_rate = saturated")
            continue
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, tuple):
            v = ",".join(map(str, v))
        out.append(f"{key} = {v}")
    out.append("")
    out.append("[network]")
    for key in _NETWORK_KEYS:
        v = getattr(sc, key)
        if v is not None:
            out.append(f"{key} = {v}")
    for node, bw in sc.uplinks:
        out.append(f"uplink.{node} = {bw}")
    out.append("")
    out.append("[adversary]")
    out.append("byzantine = " + ",".join(map(str, sc.byzantine)))
    for node, spec in sc.strategies:
        text = spec.name
        if spec.args:
            text += ":" + ",".join(map(str, spec.args))
        if spec.at:
            text += f"@{spec.at}"
        out.append(f"strategy.{node} = {text}")
    return "\n".join(out) + "\n"

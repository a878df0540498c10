from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from hermes_bft.harness.scenario import (
    ConstraintError, Scenario, SchemaError, format_scenario, parse_scenario,
)
from hermes_bft.sim.adversary import StrategySpec

MINIMAL = """\
[protocol]
n = 4
f = 1
c = 2
"""

FULL = """\
# comment
[protocol]
protocol = both
n = 7
c = 3
block_size = 1_048_576
epochs = 5
seed = 42
pipelined = yes
tx_rate = 3/2
primary = 0
committee = 1,2,3

[network]
uplink = 128
primary_uplink = 10   # slack
uplink.5 = 64
latency = 1000
jitter = 100
loss = 0.01

[adversary]
byzantine = 4,6
strategy.4 = withhold:1,2@50
strategy.6 = crash
"""


def test_minimal():
    sc = parse_scenario(MINIMAL)
    assert (sc.n, sc.f, sc.c, sc.protocol) == (4, 1, 2, "hermes")


def test_f_defaults_from_n():
    assert parse_scenario("[protocol]\nn = 10\nc = 3\n").f == 3


def test_full():
    sc = parse_scenario(FULL)
    assert sc.protocol == "both" and sc.pipelined
    assert sc.block_size == 1_048_576
    assert sc.tx_rate == Fraction(3, 2)
    assert sc.committee == (1, 2, 3) and sc.primary == 0
    assert sc.primary_uplink == 10 and sc.uplinks == ((5, 64),)
    assert sc.loss == 0.01
    assert sc.strategies == ((4, StrategySpec("withhold", (1, 2), 50)),
                             (6, StrategySpec("crash")))


def test_format_roundtrip():
    sc = parse_scenario(FULL)
    assert parse_scenario(format_scenario(sc)) == sc


@settings(max_examples=50)
@given(st.sampled_from([(4, 1), (7, 2), (10, 3)]).flatmap(
    lambda nf: st.tuples(st.just(nf), st.integers(1, nf[0] - 1))),
    st.booleans(), st.integers(0, 2**32), st.integers(1, 10**6),
    st.none() | st.fractions(min_value=Fraction(1, 1000), max_value=10))
def test_roundtrip_property(nfc, pipelined, seed, uplink, rate):
    (n, f), c = nfc
    sc = Scenario(n=n, f=f, c=c, pipelined=pipelined, seed=seed, uplink=uplink,
                  tx_rate=rate, byzantine=(0,),
                  strategies=((0, StrategySpec("delay", (5,), 3)),))
    assert parse_scenario(format_scenario(sc)) == sc


@pytest.mark.parametrize("text,line", [
    ("[protocol]\nn = 10\nf = 2\nc = 3\n", 3),
    ("[protocol]\nn = 10\nc = 3\nprimary = 1\n", None),
    ("[protocol]\nn = 4\nc = 2\n[network]\nuplink.9 = 5\n", 5),
    ("[protocol]\nn = 4\nc = 2\n[adversary]\nbyzantine = 1\nstrategy.0 = crash\n", 6),
    ("[protocol]\nn = 4\nc = 2\n[adversary]\nbyzantine = 0,1\n", 5),
    ("[protocol]\nn = 4\nc = 4\n", 3),
])
def test_constraint_errors(text, line):
    with pytest.raises(ConstraintError) as exc:
        parse_scenario(text)
    assert exc.value.line == line


@pytest.mark.parametrize("text,line", [
    ("[protocol]\nn = 4\nn = 4\nc = 2\n", 3),
    ("[protocol]\nn = 4\nc = 2\nbogus = 1\n", 4),
    ("n = 4\n", 1),
    ("[protocol]\nn = four\n", 2),
    ("[protocol]\nn = 4\nc = 2\n[weird]\n", 4),
    ("[protocol\n", 1),
    ("[protocol]\nn 4\n", 2),
    ("[protocol]\nn = 4\nc = 2\n[adversary]\nstrategy.0 = teleport\n", 5),
    ("[protocol]\nn = 4\nc = 2\npipelined = maybe\n", 4),
    ("[protocol]\nn = 4\nc = 2\ntx_rate = fast\n", 4),
])
def test_schema_errors(text, line):
    with pytest.raises(SchemaError) as exc:
        parse_scenario(text)
    assert exc.value.line == line
    assert str(exc.value).startswith(f"line {line}:")


def test_missing_required():
    with pytest.raises(SchemaError):
        parse_scenario("[protocol]\nn = 4\n")


def test_committee_must_exclude_primary():
    with pytest.raises(ConstraintError):
        Scenario(n=4, f=1, c=2, primary=1, committee=(1, 2))


def test_committee_needs_primary():
    with pytest.raises(ConstraintError):
        Scenario(n=4, f=1, c=2, committee=(1, 2))

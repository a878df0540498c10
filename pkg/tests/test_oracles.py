import pytest

from hermes_bft.harness.metrics import (
    CSV_COLUMNS, block_latencies, compute_metrics, format_csv, nearest_rank,
    throughput,
)
from hermes_bft.harness.oracles import (
    UnscoredTrace, check_liveness, check_safety, max_consecutive_view_changes,
    progress_times,
)
from hermes_bft.harness.scenario import Scenario
from hermes_bft.sim.runner import simulate
from hermes_bft.sim.trace import (
    RAccept, RCommit, REnd, RHeader, RPropose, RRevoke, RView,
)

HDR = RHeader("hermes", 4, 1, 2, 0, (3,), 1, 3)
A, B = b"\xaa" * 32, b"\xbb" * 32
QC = (0, 1, 2)


def commit(node, s, h, t=1, signers=QC):
    return RCommit(t, node, s, h, 0, 1, signers)


def test_fault_free_run_is_safe_and_live():
    sim = simulate(Scenario(n=4, f=1, c=2, epochs=4, block_size=512, latency=5))
    recs = sim.trace.records
    assert check_safety(recs).ok
    assert check_liveness(recs, 1000)
    assert max_consecutive_view_changes(recs) == 0


def test_honest_conflict_breaks_s_safety():
    v = check_safety([HDR, commit(0, 1, A), commit(1, 1, B)])
    assert not v.s_safe and v.r_safe


def test_revocation_breaks_s_safety_only():
    recs = [HDR, commit(0, 1, B), RRevoke(2, 0, 1, B), commit(0, 1, A, 3),
            commit(1, 1, A), commit(2, 1, A)]
    v = check_safety(recs)
    assert v.r_safe and v.client_safe and not v.s_safe


def test_byzantine_commit_does_not_count():
    v = check_safety([HDR, commit(3, 1, B), commit(0, 1, A)])
    assert v.ok


def test_two_strong_commits_break_r_safety():
    recs = [HDR] + [commit(i, 1, A) for i in (0, 1, 2)] + [commit(i, 1, B) for i in (0, 1)]
    assert not check_safety(recs).r_safe


def test_client_conflict():
    v = check_safety([HDR, RAccept(1, 1, A, 1), RAccept(2, 1, B, 1)])
    assert not v.client_safe


def test_forged_short_certificate():
    v = check_safety([HDR, commit(0, 1, A, signers=(0, 1))])
    assert not v.certified and not v.ok


def test_duplicate_signers_do_not_certify():
    assert not check_safety([HDR, commit(0, 1, A, signers=(0, 0, 1))]).certified


def test_too_many_byzantine_unscored():
    hdr = RHeader("hermes", 4, 1, 2, 0, (2, 3), 1, 3)
    with pytest.raises(UnscoredTrace):
        check_safety([hdr])
    with pytest.raises(UnscoredTrace):
        check_liveness([hdr], 10)


def test_missing_header():
    with pytest.raises(ValueError):
        check_safety([commit(0, 1, A)])


class TestLiveness:
    def test_gap_too_long(self):
        recs = [HDR, commit(0, 1, A, t=10), commit(0, 2, B, t=500), REnd(500, "target")]
        assert check_liveness(recs, 490)
        assert not check_liveness(recs, 489)

    def test_stall_at_end(self):
        recs = [HDR, commit(0, 1, A, t=10), REnd(1000, "max_ticks")]
        assert not check_liveness(recs, 100)
        assert check_liveness(recs, 990)

    def test_progress_ignores_byzantine(self):
        recs = [HDR, commit(3, 1, A, t=5), commit(0, 1, A, t=9), commit(1, 1, A, t=12)]
        assert progress_times(recs) == [9]


def test_consecutive_view_changes_reset_on_commit():
    recs = [HDR, RView(1, 0, 1, False), RView(2, 0, 2, False), commit(0, 1, A, 3),
            RView(4, 0, 3, False), RView(5, 3, 9, False), RView(6, 3, 10, False),
            RView(7, 3, 11, False)]
    assert max_consecutive_view_changes(recs) == 2


class TestMetrics:
    def test_nearest_rank(self):
        assert nearest_rank([5, 1, 3, 2, 4], 0.99) == 5
        assert nearest_rank(list(range(1, 101)), 0.99) == 99
        assert nearest_rank([7], 0.5) == 7

    def test_throughput_window(self):
        accepts = [RAccept(1000, 1, A, 10), RAccept(2000, 2, B, 30), RAccept(3000, 3, A, 50)]
        # 80 txs over 2000 ticks of 1 ms
        assert throughput(accepts, 1000) == pytest.approx(40.0)
        assert throughput([], 1000) == 0.0
        assert throughput(accepts[:1], 1000) == pytest.approx(10.0)

    def test_block_latency(self):
        recs = [RPropose(5, 0, 1, A, 3), RPropose(9, 0, 1, A, 3), RAccept(20, 1, A, 3)]
        assert block_latencies(recs) == [15]

    def test_csv_shape(self):
        sim = simulate(Scenario(n=4, f=1, c=2, epochs=3, block_size=512, latency=5))
        row = compute_metrics(sim)
        text = format_csv([row])
        head, line = text.strip().split("\n")
        assert head == ",".join(CSV_COLUMNS)
        assert line.split(",")[0] == "hermes"
        assert line.endswith("true,true,true")
        assert format_csv([row], header=False) == line + "\n"
        assert row.msgs_per_block > 0 and row.throughput_tps > 0

import hashlib
import struct
import subprocess
import sys
from pathlib import Path

import pytest

from hermes_bft.encoding import encode
from hermes_bft.harness.cli import CliError, main, sweep_points
from hermes_bft.harness.metrics import CSV_COLUMNS
from hermes_bft.harness.scenario import parse_scenario
from hermes_bft.sim.trace import MAGIC, RCommit, VERSION, parse_trace

SCENARIO = """\
[protocol]
protocol = {protocol}
n = 4
c = 2
epochs = 3
block_size = 1024
seed = 5

[network]
uplink = 1000
latency = 5
"""


@pytest.fixture
def scen(tmp_path):
    def make(protocol="hermes"):
        p = tmp_path / f"{protocol}.ini"
        p.write_text(SCENARIO.format(protocol=protocol))
        return str(p)
    return make


def write_trace(path, records):
    """Serialise records with a correct digest, as a forger would."""
    body = b"".join(struct.pack(">I", len(encode(r))) + encode(r) for r in records)
    path.write_bytes(MAGIC + bytes((VERSION,)) + body + bytes(4)
                     + hashlib.sha256(body).digest())


class TestRun:
    def test_csv_to_stdout(self, scen, capsys):
        assert main(["run", scen()]) == 0
        out = capsys.readouterr()
        lines = out.out.strip().split("\n")
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 2 and lines[1].startswith("hermes,4,1,2,1024,5,")
        assert out.err.startswith("hermes: trace ")

    def test_both_appends_two_rows(self, scen, tmp_path, capsys):
        csv = tmp_path / "out.csv"
        assert main(["run", scen("both"), "--csv", str(csv),
                     "--trace", str(tmp_path / "t.bin")]) == 0
        assert main(["run", scen("both"), "--csv", str(csv)]) == 0
        lines = csv.read_text().strip().split("\n")
        assert len(lines) == 5 and lines.count(",".join(CSV_COLUMNS)) == 1
        assert [l.split(",")[0] for l in lines[1:]] == ["hermes", "baseline"] * 2
        assert (tmp_path / "t.hermes.bin").exists()
        assert (tmp_path / "t.baseline.bin").exists()

    def test_same_seed_same_bytes(self, scen, capsys):
        main(["run", scen(), "--seed", "11"])
        first = capsys.readouterr()
        main(["run", scen(), "--seed", "11"])
        second = capsys.readouterr()
        assert first == second
        main(["run", scen(), "--seed", "12"])
        assert capsys.readouterr().err != first.err

    def test_env_seed(self, scen, capsys, monkeypatch):
        main(["run", scen(), "--seed", "77"])
        explicit = capsys.readouterr().out
        monkeypatch.setenv("HERMES_SEED", "77")
        main(["run", scen()])
        assert capsys.readouterr().out == explicit
        # the flag wins over the environment
        main(["run", scen(), "--seed", "5"])
        monkeypatch.delenv("HERMES_SEED")
        main(["run", scen()])
        out = capsys.readouterr().out.split("\n")
        assert out[1] == out[3]

    def test_bad_env_seed(self, scen, capsys, monkeypatch):
        monkeypatch.setenv("HERMES_SEED", "x")
        assert main(["run", scen()]) == 2

    def test_bad_scenario(self, tmp_path, capsys):
        p = tmp_path / "bad.ini"
        p.write_text("[protocol]\nn = 10\nf = 2\nc = 3\n")
        assert main(["run", str(p)]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope")]) == 2


class TestSweep:
    def test_rows_in_order(self, scen, capsys):
        assert main(["sweep", scen("both"), "--axis", "block_size",
                     "--values", "512,2048"]) == 0
        rows = [l.split(",") for l in capsys.readouterr().out.strip().split("\n")[1:]]
        assert [(r[0], r[4]) for r in rows] == [
            ("hermes", "512"), ("baseline", "512"), ("hermes", "2048"), ("baseline", "2048")]

    def test_parallel_matches_serial(self, scen, capsys):
        args = ["sweep", scen(), "--axis", "n", "--values", "4,7", "--c", "2,3"]
        main(args)
        serial = capsys.readouterr().out
        main(args + ["--jobs", "2"])
        assert capsys.readouterr().out == serial

    def test_n_axis_points(self, scen):
        sc = parse_scenario(open(scen()).read())
        pts = sweep_points(sc, "n", [7, 10])
        assert [(p.n, p.f, p.c) for p in pts] == [(7, 2, 2), (10, 3, 2)]
        with pytest.raises(CliError):
            sweep_points(sc, "n", [7], [1, 2])

    def test_primary_uplink_axis(self, scen):
        sc = parse_scenario(open(scen()).read())
        assert [p.primary_uplink for p in sweep_points(sc, "primary_uplink", [10, 20])] == [10, 20]


class TestProb:
    def test_forty(self, capsys):
        assert main(["prob", "--n", "40", "--f", "13", "--c", "18"]) == 0
        out = capsys.readouterr().out
        assert "p_f = 9527/266104 (" in out
        assert "p_total_failure = 0/1 (0.000000e+00)" in out

    def test_min_c(self, capsys):
        assert main(["prob", "--n", "40", "--min-c", "--target", "3.8e-22",
                     "--criterion", "total_failure"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("min_c = 14")

    @pytest.mark.parametrize("argv", [
        ["prob", "--n", "4"],
        ["prob", "--n", "4", "--min-c"],
        ["prob", "--n", "4", "--c", "4"],
        ["prob", "--n", "4", "--min-c", "--target", "abc"],
        ["prob", "--n", "4", "--f", "3", "--min-c", "--target", "1e-9"],
    ])
    def test_errors(self, argv, capsys):
        assert main(argv) == 2
        assert capsys.readouterr().err.startswith("error: ")


class TestCheck:
    @pytest.fixture
    def trace(self, scen, tmp_path, capsys):
        path = tmp_path / "t.bin"
        main(["run", scen(), "--trace", str(path)])
        capsys.readouterr()
        return path

    def test_clean(self, trace, capsys):
        assert main(["check", str(trace)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("digest ok ")
        assert "r_safe = true" in out

    def test_verdicts_pure_function_of_bytes(self, trace, capsys):
        main(["check", str(trace)])
        a = capsys.readouterr().out
        main(["check", str(trace)])
        assert capsys.readouterr().out == a

    def test_flipped_byte(self, trace, capsys):
        data = bytearray(trace.read_bytes())
        records, _, _ = parse_trace(bytes(data))
        commit = next(r for r in records if isinstance(r, RCommit))
        i = data.index(commit.h)
        data[i] ^= 0xFF
        trace.write_bytes(bytes(data))
        assert main(["check", str(trace)]) == 1
        assert "MISMATCH" in capsys.readouterr().out

    def test_forged_commit_with_valid_digest(self, trace, tmp_path, capsys):
        records, _, _ = parse_trace(trace.read_bytes())
        c = next(r for r in records if isinstance(r, RCommit))
        forged = RCommit(c.t, c.node, c.s, b"\x66" * 32, c.v, c.ntx, (0, 1))
        out = tmp_path / "forged.bin"
        write_trace(out, records[:-1] + [forged, records[-1]])
        assert main(["check", str(out)]) == 1
        text = capsys.readouterr().out
        assert "digest ok" in text and "s_safe = false" in text and "certified = false" in text

    def test_garbage(self, tmp_path, capsys):
        p = tmp_path / "g.bin"
        p.write_bytes(b"nope")
        assert main(["check", str(p)]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hermes_bft", "prob", "--n", "4", "--c", "1"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert "p_f = 1/4" in res.stdout


@pytest.mark.parametrize("name", ["quick", "crash_primary", "slack_primary"])
def test_shipped_scenarios_parse(name):
    root = Path(__file__).resolve().parent.parent / "scenarios"
    parse_scenario((root / f"{name}.ini").read_text())

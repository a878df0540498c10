"""Command line: ``run``, ``sweep``, ``prob`` and ``check``.

Exit status is 0 on success.  ``check`` exits 1 when the trace digest does
not match or any safety verdict fails; every command exits 2 on bad input.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .. import committee
from ..sim.runner import InvalidScenario, simulate
from ..sim.trace import TraceFormatError, load_trace
from .metrics import compute_metrics, format_csv
from .oracles import UnscoredTrace, check_safety
from .scenario import Scenario, ScenarioError, parse_scenario

SWEEP_AXES = ("n", "block_size", "primary_uplink")


class CliError(Exception):
    pass


def load_scenario(path: str, seed: Optional[int] = None) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    try:
        sc = parse_scenario(text)
    except ScenarioError as exc:
        raise CliError(f"{path}: {exc}") from None
    env = os.environ.get("HERMES_SEED")
    if seed is None and env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise CliError(f"HERMES_SEED must be an integer, got {env!r}") from None
    if seed is not None:
        sc = sc.replace(seed=seed)
    return sc


def protocols_of(sc: Scenario) -> tuple:
    return ("hermes", "baseline") if sc.protocol == "both" else (sc.protocol,)


def _trace_path(base: str, protocol: str, both: bool) -> str:
    if not both:
        return base
    p = Path(base)
    return str(p.with_name(f"{p.stem}.{protocol}{p.suffix}"))


def run_one(sc: Scenario, protocol: str, trace_path: Optional[str] = None):
    sim = simulate(sc, protocol, keep_sends=trace_path is not None)
    if trace_path is not None:
        sim.trace.save(trace_path)
    return compute_metrics(sim), sim.trace.digest.hex()


def _emit_csv(rows, out: Optional[str]):
    if out is None:
        sys.stdout.write(format_csv(rows))
        return
    path = Path(out)
    fresh = not path.exists() or path.stat().st_size == 0
    with open(path, "a", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(rows, header=fresh))


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    both = sc.protocol == "both"
    rows = []
    for protocol in protocols_of(sc):
        tp = _trace_path(args.trace, protocol, both) if args.trace else None
        row, digest = run_one(sc, protocol, tp)
        rows.append(row)
        print(f"{protocol}: trace {digest}", file=sys.stderr)
    _emit_csv(rows, args.csv)
    return 0


def sweep_points(sc: Scenario, axis: str, values, cs=None) -> list[Scenario]:
    """One scenario per value of ``axis``, in the given order."""
    if cs is not None and len(cs) != len(values):
        raise CliError("--c needs one committee size per sweep value")
    out = []
    for k, v in enumerate(values):
        if axis == "n":
            f = (v - 1) // 3
            c = cs[k] if cs is not None else min(sc.c, v - 1)
            changes = dict(n=v, f=f, c=c, primary=None, committee=None)
            if len(sc.byzantine) > f:
                raise CliError(f"byzantine set does not fit n={v}")
        elif axis == "block_size":
            changes = dict(block_size=v)
        else:
            changes = dict(primary_uplink=v)
        try:
            out.append(sc.replace(**changes))
        except ScenarioError as exc:
            raise CliError(f"{axis}={v}: {exc}") from None
    return out


def _job(item):
    sc, protocol = item
    return run_one(sc, protocol)[0]


def run_sweep(points, jobs: int = 1) -> list:
    """Rows in scenario order whatever order the workers finish in."""
    work = [(sc, p) for sc in points for p in protocols_of(sc)]
    if jobs <= 1:
        return [_job(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_job, work))


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    points = sweep_points(sc, args.axis, args.values, args.c)
    _emit_csv(run_sweep(points, args.jobs), args.csv)
    return 0


def _fmt(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator} ({float(x):.6e})"


def cmd_prob(args) -> int:
    n = args.n
    f = args.f if args.f is not None else (n - 1) // 3
    try:
        if args.min_c:
            if args.target is None:
                raise CliError("--min-c needs --target")
            c = committee.min_c_for_target(n, f, Fraction(args.target), args.criterion)
            print(f"min_c = {c}  ({args.criterion} <= {args.target})")
        else:
            if args.c is None:
                raise CliError("--c is required unless --min-c is given")
            c = args.c
        rep = committee.report(n, f, c)
    except (committee.BadParams, committee.Unsatisfiable) as exc:
        raise CliError(str(exc)) from None
    except (ValueError, ZeroDivisionError):
        raise CliError(f"bad target {args.target!r}") from None
    print(f"n = {n}  f = {f}  c = {c}")
    for name in ("p_f", "p_total_failure", "p_v_bound", "p_equivocation"):
        print(f"{name} = {_fmt(getattr(rep, name))}")
    return 0


def cmd_check(args) -> int:
    try:
        records, stored, recomputed = load_trace(args.trace)
    except OSError as exc:
        raise CliError(f"cannot read {args.trace}: {exc.strerror}") from None
    except TraceFormatError as exc:
        raise CliError(f"{args.trace}: {exc}") from None
    try:
        v = check_safety(records)
    except UnscoredTrace as exc:
        raise CliError(f"refusing to score: {exc}") from None
    except ValueError as exc:
        raise CliError(f"{args.trace}: {exc}") from None
    digest_ok = stored == recomputed
    print(f"digest {'ok' if digest_ok else 'MISMATCH'} {recomputed.hex()}")
    for name in ("r_safe", "s_safe", "client_safe", "certified"):
        print(f"{name} = {'true' if getattr(v, name) else 'false'}")
    return 0 if digest_ok and v.ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hermes-bft",
                                description="Hermes BFT simulator and analysis tools")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate one scenario and emit a CSV row per protocol")
    r.add_argument("scenario")
    r.add_argument("--csv", help="append rows to this file instead of stdout")
    r.add_argument("--trace", help="write the binary trace here")
    r.add_argument("--seed", type=int)
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("sweep", help="run a scenario across values of one axis")
    s.add_argument("scenario")
    s.add_argument("--axis", choices=SWEEP_AXES, required=True)
    s.add_argument("--values", type=_int_list, required=True)
    s.add_argument("--c", type=_int_list, help="committee size per value (n sweeps)")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--csv")
    s.add_argument("--seed", type=int)
    s.set_defaults(fn=cmd_sweep)

    q = sub.add_parser("prob", help="exact committee failure probabilities")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--f", type=int)
    q.add_argument("--c", type=int)
    q.add_argument("--min-c", action="store_true", help="search the smallest c meeting --target")
    q.add_argument("--target", help="probability bound, e.g. 1e-6 or 1/1000")
    q.add_argument("--criterion", choices=sorted(committee.CRITERIA), default="p_f")
    q.set_defaults(fn=cmd_prob)

    c = sub.add_parser("check", help="re-run the safety oracles on a saved trace")
    c.add_argument("trace")
    c.set_defaults(fn=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (CliError, InvalidScenario) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

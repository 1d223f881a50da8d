"""Command-line front end.

    anonlab run SCENARIO --out DIR [--seed N]
    anonlab compare DIR_A DIR_B
    anonlab attack DIR --kind KIND
    anonlab report DIR

Exit codes: 0 success, 2 configuration error, 3 protocol abort,
4 missing or unreadable run directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import report as rpt
from . import scenario as scn

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3
EXIT_MISSING = 4

TRACE, METRICS, REPORT, TIMING = "trace.jsonl", "metrics.csv", "report.json", "timing.json"


def _err(msg: str) -> None:
    print("anonlab: " + msg, file=sys.stderr)


def _load_trace(d: str):
    path = os.path.join(d, TRACE)
    if not os.path.isfile(path):
        raise FileNotFoundError("no %s in %s" % (TRACE, d))
    return scn.read_trace(path)


def cmd_run(args) -> int:
    try:
        sc = scn.load(args.scenario)
    except scn.ScenarioError as exc:
        _err("config error in field %s" % exc)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    out = scn.run(sc, args.seed)
    wall = time.perf_counter() - t0
    os.makedirs(args.out, exist_ok=True)
    scn.write_trace(out.trace, os.path.join(args.out, TRACE))
    if out.metrics is not None:
        out.metrics.to_csv(os.path.join(args.out, METRICS))
    else:
        with open(os.path.join(args.out, METRICS), "w") as fh:
            fh.write("round,pseudonym,possinymity,indinymity,decision\n")
    rep = rpt.build_report(out.trace)
    rpt.write_report(rep, os.path.join(args.out, REPORT))
    # wall-clock lives apart from report.json so reruns stay byte-identical
    with open(os.path.join(args.out, TIMING), "w") as fh:
        json.dump({"wall_clock_s": round(wall, 6), "simulated_ms": rep["simulated_ms"]}, fh)
        fh.write("\n")
    print(json.dumps({k: rep[k] for k in ("protocol", "seed", "rounds", "simulated_ms")}
                     | {"round_statuses": rep.get("round_statuses", {})}, sort_keys=True))
    if out.aborted:
        _err("protocol abort: " + out.aborted)
        return EXIT_PROTOCOL
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        trace = _load_trace(args.dir)
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        _err(str(exc))
        return EXIT_MISSING
    rep = rpt.build_report(trace)
    rpt.write_report(rep, os.path.join(args.dir, REPORT))
    print(json.dumps(rep, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_attack(args) -> int:
    try:
        trace = _load_trace(args.dir)
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        _err(str(exc))
        return EXIT_MISSING
    protocol = trace[0]["scenario"]["protocol"]
    if args.kind in scn.DC_ONLY and protocol == scn.OR:
        _err("config error in field kind: %s needs a dcnet trace" % args.kind)
        return EXIT_CONFIG
    if args.kind == "congestion" and not any(e.get("type") == "probe" for e in trace):
        _err("config error in field kind: trace holds no congestion probes")
        return EXIT_CONFIG
    if args.kind == "stain" and not any(a["kind"] == "stain" for a in trace[0]["scenario"]["attacks"]):
        _err("config error in field kind: trace was not stained")
        return EXIT_CONFIG
    params = {}
    if args.threshold is not None:
        params["threshold"] = args.threshold
    if args.target is not None:
        params["target"] = args.target
    res = rpt.attack(trace, args.kind, params)
    with open(os.path.join(args.dir, "attack_%s.json" % args.kind), "w") as fh:
        fh.write(res.to_json() + "\n")
    print(res.to_json())
    return EXIT_OK


def cmd_compare(args) -> int:
    reps = []
    for d in (args.dir_a, args.dir_b):
        path = os.path.join(d, REPORT)
        if not os.path.isfile(path):
            _err("no %s in %s" % (REPORT, d))
            return EXIT_MISSING
        with open(path) as fh:
            reps.append(json.load(fh))
    try:
        table = rpt.compare(*reps)
    except ValueError as exc:
        _err("config error in field attacks: %s" % exc)
        return EXIT_CONFIG
    if args.json:
        print(json.dumps(table, sort_keys=True, indent=2))
        return EXIT_OK
    a, b = table["columns"]
    keys = list(dict.fromkeys(list(a) + list(b)))
    w = max(len(k) for k in keys)
    print("%-*s  %-22s  %-22s" % (w, "", args.dir_a[-22:], args.dir_b[-22:]))
    for k in keys:
        print("%-*s  %-22s  %-22s" % (w, k, a.get(k), b.get(k)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anonlab", description="Anonymous-communication simulation workbench")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("scenario")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed", type=int, default=None, help="override the scenario's master seed")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("compare", help="side-by-side summary of two runs")
    c.add_argument("dir_a")
    c.add_argument("dir_b")
    c.add_argument("--json", action="store_true")
    c.set_defaults(fn=cmd_compare)

    a = sub.add_parser("attack", help="re-run one attack on a persisted trace")
    a.add_argument("dir")
    a.add_argument("--kind", required=True, choices=scn.ATTACKS)
    a.add_argument("--threshold", type=float, default=None)
    a.add_argument("--target", type=int, default=None)
    a.set_defaults(fn=cmd_attack)

    rp = sub.add_parser("report", help="regenerate report.json from the trace")
    rp.add_argument("dir")
    rp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        _err("config error in field --seed: must be an unsigned 64-bit integer")
        return EXIT_CONFIG
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``qkdnet keyrate|bound|place|select|export-lp``."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from typing import Sequence

from qkdnet.evaluator import (
    evaluate_placements, evaluate_selection, render_placement, render_selection,
)
from qkdnet.keyrate import DomainError, key_rate, load_params
from qkdnet.mcfp import McfpError, build_milp, its_bound, verify_assignment
from qkdnet.model import (
    DEFAULT_PACKET_BITS, ModelError, NetworkInstance, SelectNodes, apply_modification,
    load_demand, load_topology, uniform_demand,
)
from qkdnet.solver import ENGINES, LpFormatError, SolverError, SolverOptions, export_lp_file

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3
FORMATS = ("table", "csv", "structured")


class InputError(Exception):
    pass


def _fmt(value: float) -> str:
    return format(value, ".6g")


def _length_range(text: str) -> tuple[float, float]:
    lo, sep, hi = text.partition("..")
    try:
        a = float(lo)
        b = float(hi) if sep else a
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or A..B, got {text!r}") from None
    if not (math.isfinite(a) and math.isfinite(b)) or a < 0 or b < a:
        raise argparse.ArgumentTypeError(f"need 0 <= A <= B, got {text!r}")
    return a, b


def _positive(kind):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return value
    return parse


def _name_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


# -- shared plumbing ---------------------------------------------------------------

def _params(args):
    params = load_params(args.params)
    if args.finite_key is not None:
        params = params.replace(finite_key=args.finite_key == "on")
    return params


def _options(args) -> SolverOptions:
    return SolverOptions(engine=args.engine, node_limit=args.node_limit,
                         int_tol=args.int_tol, feas_tol=args.feas_tol)


def _instance(args, select: Sequence[str] | None = None) -> NetworkInstance:
    topology = load_topology(args.topology)
    if args.demand_file:
        demand = load_demand(args.demand_file, default_beta=args.beta)
    elif args.demand is not None:
        demand = uniform_demand(topology.active_nodes, args.demand, args.beta)
    else:
        raise InputError("one of --demand or --demand-file is required")
    if select is not None:
        topology = apply_modification(topology, SelectNodes(tuple(select)))
    return NetworkInstance(topology, demand, args.packet_bits, _params(args))


def _write_lp(instance: NetworkInstance, path: str) -> None:
    milp = build_milp(instance)
    export_lp_file(milp.to_linear_program(), milp.integer_indices, path)


# -- subcommands -------------------------------------------------------------------

def cmd_keyrate(args) -> str:
    params = _params(args)
    a, b = args.length
    count = int(math.floor((b - a) / args.step + 1e-9)) + 1
    rows = []
    for i in range(count):
        length = a + i * args.step
        rows.append((format(length, "g"), format(key_rate(length, params), ".10g")))
    if args.format == "table":
        width = max(len(r[0]) for r in rows + [("length_km", "")])
        lines = [f"{'length_km'.ljust(width)}  rate_bps"]
        lines += [f"{r[0].ljust(width)}  {r[1]}" for r in rows]
        return "\n".join(lines) + "\n"
    return "length_km,rate_bps\n" + "".join(f"{r[0]},{r[1]}\n" for r in rows)


def cmd_bound(args) -> str:
    select = _name_list(args.select) if args.select is not None else None
    instance = _instance(args, select)
    if args.export_lp:
        _write_lp(instance, args.export_lp)
    result = its_bound(instance, _options(args))
    check = verify_assignment(instance, result.assignment)
    if not check.ok:
        raise SolverError("solver returned an assignment that fails verification: "
                          + "; ".join(f"{v.kind} at {v.where}" for v in check.violations[:5]))
    if args.dump_flows:
        with open(args.dump_flows, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["source", "sink", "from", "to", "packets_per_s"])
            for key, packets in result.assignment.packets.items():
                writer.writerow([*key, packets])

    verdict = "satisfied" if result.satisfied else "unsatisfied"
    conns = [(s, t, result.satisfactions[(s, t)] * instance.demand.demand_bps[(s, t)],
              instance.demand.demand_bps[(s, t)], result.satisfactions[(s, t)])
             for s, t in instance.demand.connections]
    if args.format == "structured":
        return (f"Bound,{_fmt(result.bound)}\nLP relaxation,{_fmt(result.lp_bound)}\n"
                f"Verdict,{verdict}\n")
    if args.format == "csv":
        lines = ["source,sink,flow_bps,demand_bps,satisfaction"]
        lines += [f"{s},{t},{_fmt(f)},{_fmt(d)},{_fmt(m)}" for s, t, f, d, m in conns]
        return "\n".join(lines) + "\n"
    worst = min(conns, key=lambda c: c[4])
    lines = [f"bound B          {_fmt(result.bound)}",
             f"LP relaxation    {_fmt(result.lp_bound)}",
             f"verdict          {verdict} (B {'>=' if result.satisfied else '<'} 1)",
             f"connections      {len(conns)}",
             f"tightest         {worst[0]} -> {worst[1]}",
             "",
             "source  sink  flow_kbps  demand_kbps  satisfaction"]
    for s, t, f, d, m in conns:
        lines.append(f"{s:<7} {t:<5} {f / 1e3:>9.6g}  {d / 1e3:>11.6g}  {m:.6g}")
    return "\n".join(lines) + "\n"


def cmd_place(args) -> str:
    instance = _instance(args)
    if args.candidates.strip() == "all":
        candidates = [e.label or e.name() for e in instance.topology.active_edges]
    else:
        candidates = _name_list(args.candidates)
    try:
        report = evaluate_placements(instance, candidates, _options(args), workers=args.jobs)
    except ModelError as exc:
        raise type(exc)(f"{args.topology}: {exc}") from None
    return render_placement(report, args.format)


def cmd_select(args) -> str:
    instance = _instance(args)
    nodes = (instance.topology.optional_nodes if args.optional is None
             else _name_list(args.optional))
    try:
        report = evaluate_selection(instance, nodes, _options(args), workers=args.jobs)
    except ModelError as exc:
        raise type(exc)(f"{args.topology}: {exc}") from None
    return render_selection(report, args.format)


def cmd_export_lp(args) -> str:
    select = _name_list(args.select) if args.select is not None else None
    instance = _instance(args, select)
    _write_lp(instance, args.output)
    return ""


# -- argument parsing ----------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--params", default="table3.params",
                   help="QKD system parameter file (default: bundled table3.params)")
    p.add_argument("--finite-key", choices=("on", "off"), default=None,
                   help="override the finite-key setting of the parameter file")
    p.add_argument("--format", choices=FORMATS, default=None)


def _network(p: argparse.ArgumentParser, solving: bool = True) -> None:
    p.add_argument("--topology", required=True, help="topology file (or a bundled name)")
    p.add_argument("--demand", type=_positive(float), help="uniform demand per connection, bps")
    p.add_argument("--demand-file", help="per-connection demand file")
    p.add_argument("--beta", type=float, default=1.0,
                   help="key bits consumed per data bit (default 1)")
    p.add_argument("--packet-bits", type=_positive(int), default=DEFAULT_PACKET_BITS)
    if solving:
        p.add_argument("--engine", choices=ENGINES, default="auto")
        p.add_argument("--node-limit", type=_positive(int), default=1_000_000)
        p.add_argument("--int-tol", type=_positive(float), default=1e-6)
        p.add_argument("--feas-tol", type=_positive(float), default=1e-7)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkdnet", description="Key rates and ITS-bound analysis for QKD networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keyrate", help="key rate of one link over a length range")
    _common(p)
    p.add_argument("--length", type=_length_range, required=True, help="N or A..B in km")
    p.add_argument("--step", type=_positive(float), default=1.0)
    p.set_defaults(func=cmd_keyrate, default_format="csv")

    p = sub.add_parser("bound", help="ITS bound of one network")
    _common(p)
    _network(p)
    p.add_argument("--select", help="comma-separated optional nodes to switch on")
    p.add_argument("--dump-flows", help="write the integral flow assignment as CSV")
    p.add_argument("--export-lp", help="also write the MILP in LP format")
    p.set_defaults(func=cmd_bound, default_format="table")

    p = sub.add_parser("place", help="bound after one extra QKD system per candidate edge")
    _common(p)
    _network(p)
    p.add_argument("--candidates", default="all", help="'all' or comma-separated edge labels")
    p.add_argument("--jobs", type=_positive(int), default=1)
    p.set_defaults(func=cmd_place, default_format="table")

    p = sub.add_parser("select", help="bound for every subset of optional nodes")
    _common(p)
    _network(p)
    p.add_argument("--optional", help="comma-separated optional nodes (default: all)")
    p.add_argument("--jobs", type=_positive(int), default=1)
    p.set_defaults(func=cmd_select, default_format="table")

    p = sub.add_parser("export-lp", help="write the MILP of a network in LP format")
    _common(p)
    _network(p, solving=False)
    p.add_argument("--select", help="comma-separated optional nodes to switch on")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_export_lp, default_format="table")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = args.default_format
    try:
        out = args.func(args)
    except SolverError as exc:
        print(f"qkdnet: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InputError, ModelError, DomainError, McfpError, LpFormatError,
            FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"qkdnet: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

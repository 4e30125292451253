"""Command-line interface: validate, expand, infer, gen, bench."""

from __future__ import annotations

import argparse
import itertools
import json
import sys
import time
from pathlib import Path

from .bench import GeneratorSpec, default_guard_mults, generate, run_benchmark
from .factorize import Strategy, expand
from .infer import Heuristic, InferenceError, Query, query_posterior
from .model import GuardExceededError, Network, NetworkError, parse_network, serialize_network

STRATEGY_NAMES = [s.value for s in Strategy]
HEURISTIC_NAMES = [h.value for h in Heuristic]


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _load(path: str) -> Network:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError("io-error", str(exc)) from None
    return parse_network(text)


def _emit(doc: dict):
    print(json.dumps(doc, indent=2))


def _parse_strategies(raw: str) -> list[Strategy]:
    if raw == "all":
        return list(Strategy)
    return [Strategy(name.strip()) for name in raw.split(",") if name.strip()]


def _parse_heuristics(raw: str) -> list[Heuristic]:
    if raw == "all":
        return list(Heuristic)
    return [Heuristic(name.strip()) for name in raw.split(",") if name.strip()]


def cmd_validate(args) -> int:
    net = _load(args.file)
    _emit({"ok": True, "variables": len(net.variables), "nodes": len(net.nodes)})
    return 0


def cmd_expand(args) -> int:
    net = _load(args.file)
    reports = []
    for strategy in _parse_strategies(args.strategy):
        _, report = expand(net, strategy)
        reports.append(report.to_json())
    _emit({"reports": reports})
    return 0


def cmd_infer(args) -> int:
    net = _load(args.file)
    names = net.names
    try:
        targets = tuple(names[t] for t in args.target)
    except KeyError as exc:
        raise CliError("unknown-variable", f"unknown target variable {exc.args[0]!r}") from None
    evidence = {}
    for item in args.evidence or []:
        if "=" not in item:
            raise CliError("usage", f"evidence must look like VAR=state, got {item!r}")
        var_name, state_name = item.split("=", 1)
        if var_name not in names:
            raise CliError("unknown-variable", f"unknown evidence variable {var_name!r}")
        var = net.var(names[var_name])
        if state_name not in var.domain:
            raise CliError(
                "unknown-state", f"variable {var_name!r} has no state {state_name!r}"
            )
        evidence[var.id] = var.domain.index(state_name)

    strategy = Strategy(args.strategy)
    heuristic = Heuristic(args.heuristic)
    expanded, _ = expand(net, strategy)
    start = time.perf_counter()
    posterior, stats = query_posterior(expanded, Query(targets, evidence), heuristic)
    wall_time_ms = (time.perf_counter() - start) * 1000.0

    if len(targets) == 1:
        domain = net.var(targets[0]).domain
        result = {state: float(p) for state, p in zip(domain, posterior.values)}
    else:
        domains = [net.var(t).domain for t in targets]
        result = []
        for assignment, p in zip(itertools.product(*domains), posterior.values.ravel()):
            result.append({"assignment": list(assignment), "probability": float(p)})
    doc = {"targets": [net.var(t).name for t in targets], "posterior": result}
    if args.stats:
        doc["stats"] = {
            "query": ",".join(net.var(t).name for t in targets),
            "strategy": strategy.value,
            "heuristic": heuristic.value,
            "multiplications": stats.multiplications,
            "peak_table_entries": stats.peak_table_entries,
            "relevant_vars": stats.relevant_vars,
            "wall_time_ms": wall_time_ms,
        }
    _emit(doc)
    return 0


def cmd_gen(args) -> int:
    spec = GeneratorSpec(
        kind=args.kind,
        seed=args.seed,
        diseases=args.diseases,
        findings=args.findings,
        max_parents=args.max_parents,
        effect_domain_size=args.domain_size,
        link_density=args.density,
    )
    net = generate(spec)
    text = serialize_network(net)
    Path(args.out).write_text(text)
    _emit({"written": args.out, "variables": len(net.variables)})
    return 0


def cmd_bench(args) -> int:
    net = _load(args.file)
    report = run_benchmark(
        net,
        _parse_strategies(args.strategies),
        _parse_heuristics(args.heuristics),
        args.queries,
        guard_mults=args.guard_mults,
    )
    doc = report.to_json(include_timings=True)
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    _emit(
        {
            "queries": report.query_count,
            "cells": len(report.cells),
            "out": args.out,
            "csv": args.csv,
        }
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisymax",
        description="Exact inference over networks with factored noisy-max nodes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a network file")
    p.add_argument("file")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("expand", help="expand noisy-max nodes and report sizes")
    p.add_argument("file")
    p.add_argument("--strategy", default="all", help=f"one of {STRATEGY_NAMES} or 'all'")
    p.add_argument("--report", choices=["sizes"], default="sizes")
    p.set_defaults(handler=cmd_expand)

    p = sub.add_parser("infer", help="answer a posterior query")
    p.add_argument("file")
    p.add_argument("--target", action="append", required=True, help="target variable name")
    p.add_argument("--evidence", action="append", metavar="VAR=state")
    p.add_argument("--strategy", choices=STRATEGY_NAMES, default=Strategy.MULTIPLICATIVE.value)
    p.add_argument("--heuristic", choices=HEURISTIC_NAMES, default=Heuristic.MIN_SIZE.value)
    p.add_argument("--stats", action="store_true")
    p.set_defaults(handler=cmd_infer)

    p = sub.add_parser("gen", help="generate a synthetic network")
    p.add_argument("--kind", choices=["bn2o", "multilevel"], default="bn2o")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--diseases", type=int, default=10)
    p.add_argument("--findings", type=int, default=10)
    p.add_argument("--max-parents", type=int, default=3)
    p.add_argument("--domain-size", type=int, default=2)
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("bench", help="run the benchmark grid on a network file")
    p.add_argument("file")
    p.add_argument("--strategies", default="all")
    p.add_argument("--heuristics", default="all")
    p.add_argument("--queries", default="all-marginals")
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--guard-mults", type=int, default=default_guard_mults())
    p.set_defaults(handler=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except NetworkError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except CliError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except (InferenceError, GuardExceededError, ValueError) as exc:
        code = "guard-exceeded" if isinstance(exc, GuardExceededError) else "inference-error"
        print(json.dumps({"error": code, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

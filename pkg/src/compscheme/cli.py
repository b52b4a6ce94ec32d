"""Command-line entry point: ``compscheme <command> [flags]``.

Every command prints one JSON object (with --json) or a short key/value
summary. Rationals always travel as "p/q" strings. Exit codes: 0 ok,
2 input or protocol error, 3 resource cap, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import shlex
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import IO, Optional

from . import __version__
from .errors import CompSchemeError, InputError, InvariantViolation
from .grid import EpsilonConfig, format_rational, make_config, parse_rational

log = logging.getLogger("compscheme")

DEFAULT_NODE_CAP = 5_000_000
DEFAULT_MAX_STEPS = 10_000
DEFAULT_STATE_CAP = 2_000_000


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _rational(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except InputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compscheme", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"compscheme {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, eps: bool = True) -> None:
        if eps:
            p.add_argument("--eps", type=_rational, default=Fraction(1), help="accuracy as p/q (default 1)")
        p.add_argument("--m", type=_positive_int, default=2, help="number of machines (default 2)")
        p.add_argument("--json", action="store_true", help="print the full JSON report")
        p.add_argument("--log-level", default="WARNING")

    p = sub.add_parser("enumerate", help="count trimmed-states and the reachable graph")
    common(p)
    p.add_argument("--node-cap", type=_positive_int, default=DEFAULT_NODE_CAP)

    p = sub.add_parser("solve", help="solve the game and cache the value table")
    common(p)
    p.add_argument("--node-cap", type=_positive_int, default=DEFAULT_NODE_CAP)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--cache", type=Path, help="value-table cache file (reused and re-verified if present)")

    p = sub.add_parser("match", help="play a match between two players")
    common(p)
    p.add_argument("--adversary", choices=["table", "random", "stdio", "cmd"], default="table")
    p.add_argument("--scheduler", choices=["table", "ls", "fixed", "stdio", "cmd"], default="ls")
    p.add_argument("--peer", help="command line of the external player for role 'cmd'")
    p.add_argument("--machine", type=_positive_int, default=1, help="machine used by the fixed scheduler (1-based)")
    p.add_argument("--length", type=_positive_int, default=20, help="jobs released by the random adversary")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=_positive_int, default=DEFAULT_MAX_STEPS)
    p.add_argument("--node-cap", type=_positive_int, default=DEFAULT_NODE_CAP)
    p.add_argument("--cache", type=Path)
    p.add_argument("--out", type=Path, help="write the report here (required with a stdio player)")

    p = sub.add_parser("semi", help="solve the bounded semi-online game exactly")
    common(p, eps=False)
    p.add_argument("--q", type=_positive_int, default=2)
    p.add_argument("--state-cap", type=_positive_int, default=DEFAULT_STATE_CAP)
    p.add_argument("--cache", type=Path)

    p = sub.add_parser("verify", help="run the invariant suites")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trajectories", type=_positive_int, default=200)
    p.add_argument("--steps", type=_positive_int, default=20)
    p.add_argument("--matches", type=_positive_int, default=30)
    p.add_argument("--node-cap", type=_positive_int, default=DEFAULT_NODE_CAP)
    p.add_argument("--cache", type=Path)

    p = sub.add_parser("stub", help="external scheduler speaking the stdio protocol")
    p.add_argument("--m", type=_positive_int, default=2)
    p.add_argument("--machine", type=_positive_int, help="always answer this machine (1-based)")
    p.add_argument("--seed", type=int, default=0, help="random answers when --machine is absent")
    p.add_argument("--log-level", default="WARNING")
    return parser


# ------------------------------------------------------------------ commands


def _config(args) -> EpsilonConfig:
    return make_config(args.eps, args.m)


def _describe(cfg: EpsilonConfig) -> dict:
    return {
        "eps": format_rational(cfg.eps),
        "m": cfg.m,
        "c0": cfg.c0,
        "omega": cfg.omega,
        "mu0": cfg.mu0,
        "r_size": cfg.zeta,
    }


def cmd_enumerate(args) -> dict:
    from .game_solver import build_reachable_graph
    from .machine_states import count_trimmed_states

    cfg = _config(args)
    lam = count_trimmed_states(cfg, limit=args.node_cap)
    graph = build_reachable_graph(cfg, args.node_cap)
    return {
        **_describe(cfg),
        "lambda": lam if lam <= args.node_cap else None,
        "lambda_exceeds_cap": lam > args.node_cap,
        "reachable_nodes": len(graph),
        "successor_entries": int(graph.succ_flat.size),
        "build_seconds": round(graph.build_seconds, 3),
    }


def _load_or_solve(cfg: EpsilonConfig, cache: Optional[Path], node_cap: int, workers: int = 1, recheck: bool = True):
    """Return (graph, table, cache status); a present cache is compared with
    a fresh solve when ``recheck`` is set."""
    from .game_solver import ValueTable, build_reachable_graph, value_iterate

    graph = build_reachable_graph(cfg, node_cap)
    cached = None
    if cache is not None and cache.exists():
        cached = ValueTable.load(cache)
        if cached.cfg.eps != cfg.eps or cached.cfg.m != cfg.m:
            raise InputError(f"cache {cache} was built for eps={cached.cfg.eps}, m={cached.cfg.m}")
        if cached.nodes != graph.nodes:
            raise InvariantViolation("cached node order differs from the rebuilt graph")
        if not recheck:
            return graph, cached, "loaded"
    table = value_iterate(graph, workers=workers)
    if cached is not None:
        if cached.payload() != table.payload():
            raise InvariantViolation(f"cache {cache} differs from a fresh solve")
        return graph, table, "verified"
    if cache is not None:
        table.save(cache)
        return graph, table, "written"
    return graph, table, "none"


def cmd_solve(args) -> dict:
    cfg = _config(args)
    started = time.perf_counter()
    graph, table, status = _load_or_solve(cfg, args.cache, args.node_cap, args.workers)
    return {
        **_describe(cfg),
        "rho_star": format_rational(table.rho_star),
        "sweeps": table.sweeps_used,
        "nodes": len(graph),
        "cache": status,
        "seconds": round(time.perf_counter() - started, 3),
    }


def _spawn(peer: Optional[str]) -> subprocess.Popen:
    if not peer:
        raise InputError("role 'cmd' needs --peer")
    return subprocess.Popen(shlex.split(peer), stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1)


def cmd_match(args) -> dict:
    from .players import (
        ExternalAdversary,
        ExternalScheduler,
        FixedScheduler,
        LSScheduler,
        RandomAdversary,
        TableAdversary,
        TableScheduler,
        run_match,
    )

    cfg = _config(args)
    if "stdio" in (args.adversary, args.scheduler) and args.out is None:
        raise InputError("a stdio player owns stdout; pass --out for the report")
    if args.adversary in ("stdio", "cmd") and args.scheduler in ("stdio", "cmd"):
        raise InputError("at most one player can be external")
    if args.machine > cfg.m:
        raise InputError(f"--machine must be at most m={cfg.m}")
    needs_table = args.adversary == "table" or args.scheduler == "table"
    graph = table = None
    if needs_table:
        graph, table, _ = _load_or_solve(cfg, args.cache, args.node_cap, recheck=False)
    proc = None
    if "cmd" in (args.adversary, args.scheduler):
        proc = _spawn(args.peer)
        reader, writer = proc.stdout, proc.stdin
    else:
        reader, writer = sys.stdin, sys.stdout

    if args.adversary == "table":
        adversary = TableAdversary(graph, table)
    elif args.adversary == "random":
        adversary = RandomAdversary(cfg, random.Random(args.seed), args.length)
    else:
        adversary = ExternalAdversary(cfg, reader, writer)
    if args.scheduler == "table":
        scheduler = TableScheduler(graph, table)
    elif args.scheduler == "ls":
        scheduler = LSScheduler(cfg)
    elif args.scheduler == "fixed":
        scheduler = FixedScheduler(args.machine - 1)
    else:
        scheduler = ExternalScheduler(cfg, reader, writer)
    try:
        record = run_match(cfg, adversary, scheduler, args.max_steps)
    finally:
        if proc is not None:
            proc.stdin.close()
            try:
                proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                proc.kill()
    out = {**_describe(cfg), "adversary": args.adversary, "scheduler": args.scheduler}
    if table is not None:
        out["rho_star"] = format_rational(table.rho_star)
    trimmed = record.final_trimmed_ratio("adversary") or record.final_trimmed_ratio("scheduler")
    out["final_trimmed_ratio"] = None if trimmed is None else format_rational(trimmed)
    out.update(record.to_json())
    return out


def cmd_semi(args) -> dict:
    from .semi_online import SemiValueTable, semi_solve

    started = time.perf_counter()
    status = "none"
    if args.cache is not None and args.cache.exists():
        table = SemiValueTable.load(args.cache)
        if (table.m, table.q) != (args.m, args.q):
            raise InputError(f"cache {args.cache} was built for m={table.m}, q={table.q}")
        fresh = semi_solve(args.m, args.q, state_cap=args.state_cap)
        if fresh.payload() != table.payload():
            raise InvariantViolation(f"cache {args.cache} differs from a fresh solve")
        status = "verified"
    else:
        table = semi_solve(args.m, args.q, state_cap=args.state_cap)
        if args.cache is not None:
            table.save(args.cache)
            status = "written"
    return {
        "m": args.m,
        "q": args.q,
        "ratio_star": format_rational(table.ratio_star),
        "states": len(table.nodes),
        "sweeps": table.sweeps_used,
        "cache": status,
        "seconds": round(time.perf_counter() - started, 3),
    }


def cmd_verify(args) -> dict:
    from .checks import SuiteReport, match_suite, scheduler_fuzz, simulation_fuzz
    from .game_solver import ValueTable, adversary_ranks
    from .machine_states import count_trimmed_states
    from .players import FixedScheduler, LSScheduler, TableScheduler

    cfg = _config(args)
    suites: list[SuiteReport] = []

    cache = SuiteReport("cache_integrity")
    if args.cache is not None:
        cache.cases = 1
        try:
            ValueTable.load(args.cache)
        except CompSchemeError as exc:
            cache.fail(str(exc))
    suites.append(cache)
    if not cache.ok:
        body = {**_describe(cfg), "seed": args.seed, "ok": False, "suites": [s.to_json() for s in suites]}
        return {**body, "exit_code": InputError.exit_code}

    graph, table, status = _load_or_solve(cfg, args.cache, args.node_cap)
    solved = SuiteReport("value_table", cases=len(graph))
    ranks = adversary_ranks(graph, table)
    if ranks[0] > table.sweeps_used:
        solved.fail(f"adversary rank {ranks[0]} exceeds {table.sweeps_used} sweeps")
    if not 1 <= table.rho_star <= 2:
        solved.fail(f"rho* = {table.rho_star} outside [1, 2]")
    lam = count_trimmed_states(cfg, limit=args.node_cap)
    suites.append(solved)

    suites.append(simulation_fuzz(cfg, args.trajectories, args.steps, args.seed))
    rng_base = args.seed * 7919
    schedulers = {
        "ls": lambda i: LSScheduler(cfg),
        "table": lambda i: TableScheduler(graph, table),
        "fixed": lambda i: FixedScheduler((rng_base + i) % cfg.m),
    }
    suites.append(match_suite(graph, table, ranks, schedulers, args.matches))
    suites.append(scheduler_fuzz(graph, table, args.matches, 30, args.seed))
    return {
        **_describe(cfg),
        "seed": args.seed,
        "lambda": lam if lam <= args.node_cap else None,
        "rho_star": format_rational(table.rho_star),
        "sweeps": table.sweeps_used,
        "cache": status,
        "ok": all(s.ok for s in suites),
        "suites": [s.to_json() for s in suites],
    }


def run_stub(args, reader: IO[str] = sys.stdin, writer: IO[str] = sys.stdout) -> int:
    """Answer every job message with a placement until EOF; a stop message
    ends one match and the stub waits for the next."""
    rng = random.Random(args.seed)
    for line in reader:
        msg = json.loads(line)
        if msg.get("type") == "job":
            h = args.machine if args.machine else rng.randint(1, args.m)
            writer.write(json.dumps({"type": "place", "machine": h}) + "\n")
            writer.flush()
    return 0


COMMANDS = {
    "enumerate": cmd_enumerate,
    "solve": cmd_solve,
    "match": cmd_match,
    "semi": cmd_semi,
    "verify": cmd_verify,
}


def _emit(report: dict, as_json: bool, stream: IO[str]) -> None:
    if as_json:
        stream.write(json.dumps(report, indent=2) + "\n")
        return
    for key, value in report.items():
        if isinstance(value, (list, dict)):
            continue
        stream.write(f"{key}: {value}\n")


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "stub":
        return run_stub(args)
    try:
        body = COMMANDS[args.command](args)
    except CompSchemeError as exc:
        print(f"compscheme: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    config = {k: (format_rational(v) if isinstance(v, Fraction) else str(v) if isinstance(v, Path) else v)
              for k, v in vars(args).items() if k not in ("json", "log_level")}
    report = {"tool": "compscheme", "version": __version__, "command": args.command, "config": config, **body}
    out = getattr(args, "out", None)
    if out is not None:
        with open(out, "w", encoding="utf-8") as fh:
            _emit(report, True, fh)
    else:
        _emit(report, args.json, sys.stdout)
    if args.command == "verify" and not body["ok"]:
        return body.get("exit_code", InvariantViolation.exit_code)
    return 0

"""Acceptance gate: one line per criterion, printed in the terminal summary."""

import itertools
import random
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest
from test_game_solver import minimax_oracle
from test_machine_states import nested_loop_count

from compscheme.checks import ls_bound_violations, match_suite, simulation_fuzz
from compscheme.game_solver import ValueTable, build_reachable_graph, sweep, value_iterate
from compscheme.grid import make_config
from compscheme.machine_states import count_trimmed_states
from compscheme.offline_opt import JobMultiset, opt_makespan_integral
from compscheme.players import (
    ExternalScheduler,
    LSScheduler,
    RandomAdversary,
    TableAdversary,
    TableScheduler,
    run_match,
)
from compscheme.semi_online import schedule_ratios, semi_schedule, semi_solve


def report(log, n, ok, detail):
    log.append(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def test_criterion_1_config_table(acceptance_log):
    expected = {"1": (0, 2, 5, 9), "1/2": (2, 3, 10, 18), "1/4": (7, 5, 20, 33)}
    start = time.perf_counter()
    got = {}
    for eps in expected:
        cfg = make_config(eps, 2)
        got[eps] = (cfg.c0, cfg.omega, cfg.mu0, len(cfg.r_set))
    elapsed = time.perf_counter() - start
    ok = got == expected and elapsed < 1e-3 * len(expected)
    report(acceptance_log, 1, ok, f"configs {got}, {elapsed * 1e3:.3f} ms for {len(expected)}")


def test_criterion_2_lambda(acceptance_log):
    cfg = make_config(1, 2)
    start = time.perf_counter()
    lam = count_trimmed_states(cfg)
    elapsed = time.perf_counter() - start
    oracle = nested_loop_count(cfg)
    ok = lam == oracle == 220 and elapsed < 1
    report(acceptance_log, 2, ok, f"Lambda(1) = {lam}, oracle {oracle}, {elapsed:.3f} s")


def _exhaustive(sizes, m):
    best = None
    for assign in itertools.product(range(m), repeat=len(sizes)):
        loads = [0] * m
        for p, h in zip(sizes, assign):
            loads[h] += p
        top = max(loads)
        if best is None or top < best:
            best = top
    return best if best is not None else 0


def test_criterion_3_opt_oracle(acceptance_log):
    alphabets = [(1, 2, 3, 5), (Fraction(1, 2), Fraction(2, 3), 2, 7)]
    start = time.perf_counter()
    checked = mismatches = 0
    for sizes in alphabets:
        for n in range(9):
            for combo in itertools.combinations_with_replacement(sizes, n):
                for m in (2, 3):
                    checked += 1
                    if opt_makespan_integral(JobMultiset.from_sizes(combo), m) != _exhaustive(combo, m):
                        mismatches += 1
    anchor = opt_makespan_integral(JobMultiset.from_sizes([1, 1, 2]), 2)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and anchor == 2 and elapsed < 60
    report(acceptance_log, 3, ok, f"{checked} instances, {mismatches} mismatches, OPT(1,1,2)={anchor}, {elapsed:.1f} s")


@pytest.mark.slow
def test_criterion_4_convergence(acceptance_log):
    details, ok = [], True
    for eps, limit in (("1", 10), ("1/2", 1800)):
        cfg = make_config(eps, 2)
        start = time.perf_counter()
        graph = build_reachable_graph(cfg)
        table = value_iterate(graph, extra_sweeps=3)
        elapsed = time.perf_counter() - start
        z = table.z_trace
        steps = [b - a for a, b in zip(z, z[1:])]
        monotone = all(d >= 0 for d in steps) and all(d >= cfg.eps for d in steps if d)
        values, fixed = table.values, True
        for _ in range(3):
            values = sweep(graph, values)
            fixed &= np.array_equal(values, table.values)
        ok &= monotone and fixed and elapsed < limit
        details.append(f"eps={eps}: {len(graph)} nodes, {table.sweeps_used} sweeps, Z {z[0]}->{z[-1]}, {elapsed:.1f} s")
    report(acceptance_log, 4, ok, "; ".join(details))


@pytest.mark.slow
def test_criterion_5_rho_star(acceptance_log, solved):
    cfg, _, table, _ = solved(1, 2)
    oracle = minimax_oracle(cfg, table.sweeps_used + 3)
    _, _, half, _ = solved("1/2", 2)
    ok = table.rho_star == 2 == oracle and Fraction(3, 2) <= half.rho_star <= 2 and half.rho_star == Fraction(3, 2)
    report(
        acceptance_log,
        5,
        ok,
        f"rho*(1,2) = {table.rho_star} (oracle {oracle}); rho*(1/2,2) = {half.rho_star} pinned, optimum 3/2, gap {half.rho_star - Fraction(3, 2)}",
    )


_LS_RECORDS = []


@pytest.mark.slow
def test_criterion_6_strategy_invariants(acceptance_log, solved):
    cfg, graph, table, ranks = solved("1/2", 2)
    proc = subprocess.Popen(
        [sys.executable, "-m", "compscheme", "stub", "--m", "2", "--seed", str(random.Random(6).randint(0, 10**6))],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=True,
        bufsize=1,
    )
    stub = ExternalScheduler(cfg, proc.stdout, proc.stdin)

    schedulers = {
        "external": lambda i: stub,
        "ls": lambda i: LSScheduler(cfg),
        "table": lambda i: TableScheduler(graph, table),
    }
    try:
        suite = match_suite(graph, table, ranks, schedulers, 1000)
    finally:
        proc.stdin.close()
        proc.wait(timeout=30)
    for eps, m in (("1", 2), ("1", 3), ("1/2", 2)):
        c, g, t, r = solved(eps, m)
        _LS_RECORDS.append((c, run_match(c, TableAdversary(g, t, r), LSScheduler(c))))
    ok = suite.ok and suite.cases == 1000
    report(
        acceptance_log,
        6,
        ok,
        f"{suite.cases} matches (eps=1/2, m=2) vs LS/table/external stub, {len(suite.violations)} violations, termination <= {table.sweeps_used} sweeps",
    )


@pytest.mark.slow
def test_criterion_7_ls_bound(acceptance_log, solved):
    records = list(_LS_RECORDS)
    for eps, m in (("1", 2), ("1", 3), ("1/2", 2)):
        cfg = make_config(eps, m)
        rng = random.Random(7)
        for _ in range(300):
            records.append((cfg, run_match(cfg, RandomAdversary(cfg, rng, 20), LSScheduler(cfg))))
    prefixes = sum(len(r.steps) for _, r in records)
    violations = sum(len(ls_bound_violations(cfg, r)) for cfg, r in records)
    fluid_above = sum(1 for cfg, r in records for s in r.steps if s.real_ratio > 2 - Fraction(1, cfg.m))
    ok = violations == 0 and prefixes > 0
    report(
        acceptance_log,
        7,
        ok,
        f"{len(records)} LS matches, {prefixes} prefixes, {violations} violations of 2-1/m on C_max/OPT "
        f"({fluid_above} prefixes exceed it when OPT treats small load as splittable; see README)",
    )


@pytest.mark.slow
def test_criterion_8_simulation_fuzz(acceptance_log):
    start = time.perf_counter()
    configs = [("1", 2), ("1", 3), ("1/2", 2), ("1/2", 3)]
    cases = violations = 0
    for k, (eps, m) in enumerate(configs):
        suite = simulation_fuzz(make_config(eps, m), 10_000 // len(configs), 20, seed=800 + k)
        cases += suite.cases
        violations += len(suite.violations)
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 300
    report(acceptance_log, 8, ok, f"10000 trajectories, {cases} coupled steps, {violations} violations, {elapsed:.1f} s")


def test_criterion_9_semi_online(acceptance_log):
    values, times = {}, {}
    for m, q in ((2, 1), (2, 2), (2, 3)):
        start = time.perf_counter()
        values[(m, q)] = semi_solve(m, q)
        times[(m, q)] = time.perf_counter() - start
    expected = {(2, 1): 1, (2, 2): Fraction(3, 2), (2, 3): Fraction(3, 2)}
    got = {k: t.ratio_star for k, t in values.items()}
    table = values[(2, 2)]
    rng = random.Random(9)
    worst, bad = Fraction(0), 0
    for _ in range(1000):
        stream = [rng.randint(1, 2) for _ in range(rng.randint(1, 40))]
        ratios = schedule_ratios(2, stream, semi_schedule(table, stream))
        worst = max(worst, max(ratios))
        bad += sum(r > table.ratio_star for r in ratios)
    ok = got == expected and max(times.values()) < 300 and bad == 0
    shown = {f"{m},{q}": str(v) for (m, q), v in got.items()}
    report(acceptance_log, 9, ok, f"values {shown}, slowest {max(times.values()):.2f} s; 1000 streams, worst prefix {worst}, {bad} violations")


@pytest.mark.slow
def test_criterion_10_determinism(acceptance_log, solved, tmp_path):
    _, graph, table, _ = solved("1/2", 2)
    identical = all(value_iterate(graph, workers=w).payload() == table.payload() for w in (2, 3))
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    table.save(first)
    ValueTable.load(first).save(second)
    round_trip = first.read_bytes() == second.read_bytes() and np.array_equal(ValueTable.load(second).values, table.values)
    ok = identical and round_trip
    report(acceptance_log, 10, ok, f"parallel == sequential: {identical}; cache round trip byte-identical: {round_trip}")

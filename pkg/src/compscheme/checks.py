"""Invariant suites shared by ``compscheme verify`` and the test-suite.

Every check returns plain data (counts and violation messages) so callers
decide whether to raise, print or assert.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .errors import CompSchemeError, InvariantViolation
from .game_solver import GameGraph, ValueTable
from .grid import EpsilonConfig, pow_eps
from .machine_states import f_shift, g_shift, is_simulating, trimmed_load
from .players import (
    LSScheduler,
    RandomAdversary,
    TableAdversary,
    TableScheduler,
    coupling_gaps,
    run_match,
)
from .transitions import Coupling, couple_step, coupling_holds, scenario_add, view_states


@dataclass
class SuiteReport:
    name: str
    cases: int = 0
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def fail(self, msg: str) -> None:
        # keep reports small; the count is what matters
        if len(self.violations) < 20:
            self.violations.append(msg)
        else:
            self.violations[-1] = f"... and more ({msg})"

    def to_json(self) -> dict:
        return {"name": self.name, "ok": self.ok, "cases": self.cases, "violations": self.violations}


def sandwich_violations(cfg: EpsilonConfig, c: Coupling, shift_depth: int = 2) -> list[str]:
    """Exact bound checks for one coupled pair.

    * machine-wise simulation of the (possibly shifted) real view;
    * C_max and OPT of the trimmed side exceed the real ones by at most two
      and three small units respectively, and never fall below them;
    * rescaling keeps the load sandwich and the simulation relation.
    """
    out = []
    if not coupling_holds(cfg, c):
        return [f"coupling broken: theta={c.theta} t_eff={c.t_eff} psi={c.psi}"]
    if c.theta is None:
        return out
    u = cfg.small_unit
    gaps = coupling_gaps(cfg, c)
    if not gaps["cmax_real"] <= gaps["cmax_trimmed"] <= gaps["cmax_real"] + 2 * u:
        out.append(f"C_max sandwich failed at {c.theta}: {gaps}")
    if not gaps["opt_real"] <= gaps["opt_trimmed"] <= gaps["opt_real"] + 3 * u:
        out.append(f"OPT sandwich failed at {c.theta}: {gaps}")
    view = view_states(cfg, c.psi, c.t_eff)
    for tau, st in zip(c.theta, view):  # type: ignore[arg-type]
        load = trimmed_load(cfg, tau)
        for k in range(1, shift_depth + 1):
            scale = pow_eps(cfg, k * cfg.omega)
            shifted = trimmed_load(cfg, g_shift(cfg, tau, k)) * scale
            if not load <= shifted <= load + 2 * pow_eps(cfg, k * cfg.omega - cfg.c0):
                out.append(f"g_{k} load sandwich failed for {tau}")
            if not is_simulating(g_shift(cfg, tau, k), f_shift(cfg, st, k)):
                out.append(f"g_{k}/f_{k} simulation failed for {tau} vs {st}")
    return out


def simulation_fuzz(
    cfg: EpsilonConfig,
    trajectories: int,
    steps: int,
    seed: int = 0,
) -> SuiteReport:
    """Random real trajectories coupled to trimmed-scenarios.

    Job exponents are drawn around the current scaling factor so that
    small, big and huge jobs all occur; machines are drawn among those whose
    placement stays within the supported load range.
    """
    rng = random.Random(seed)
    report = SuiteReport("simulation_fuzz")
    lo = -(cfg.c0 + 4)
    hi = cfg.r_exponents[-1] + 2 * cfg.omega
    for _ in range(trajectories):
        c = Coupling.start(cfg)
        for _ in range(steps):
            p = pow_eps(cfg, c.psi.t_exp + rng.randint(lo, hi))
            allowed = [h for h in range(cfg.m) if not scenario_add(cfg, c.psi, p, h).forbidden]
            if not allowed:
                break
            c, _, _ = couple_step(cfg, c, p, rng.choice(allowed))
            report.cases += 1
            for msg in sandwich_violations(cfg, c):
                report.fail(msg)
            if not coupling_holds(cfg, c):
                break
    return report


def ls_bound_violations(cfg: EpsilonConfig, record) -> list[str]:
    bound = 2 - Fraction(1, cfg.m)
    return [f"step {s.step}: LS ratio {s.integral_ratio} > {bound}" for s in record.steps if s.integral_ratio > bound]


def match_suite(
    graph: GameGraph,
    table: ValueTable,
    ranks,
    schedulers: dict[str, Callable[[int], object]],
    matches: int,
    max_steps: int = 1_000,
) -> SuiteReport:
    """Table adversary against each scheduler factory (called with the match
    number) ``matches`` times in round-robin; checks both value invariants,
    the termination bound and, for LS, the exact 2 - 1/m bound."""
    cfg = graph.cfg
    rho = table.rho_star
    report = SuiteReport("match_invariants")
    names = sorted(schedulers)
    for i in range(matches):
        name = names[i % len(names)]
        sched = schedulers[name](i)
        try:
            rec = run_match(cfg, TableAdversary(graph, table, ranks), sched, max_steps)
        except InvariantViolation as exc:
            report.fail(f"{name} #{i}: {exc}")
            continue
        except CompSchemeError as exc:
            report.fail(f"{name} #{i}: {type(exc).__name__}: {exc}")
            continue
        report.cases += 1
        if rec.reason != "stop":
            report.fail(f"{name} #{i}: match ended by {rec.reason}")
        if len(rec.steps) > table.sweeps_used:
            report.fail(f"{name} #{i}: adversary needed {len(rec.steps)} > {table.sweeps_used} jobs")
        for st in rec.steps:
            if st.adversary.value < rho:
                report.fail(f"{name} #{i} step {st.step}: adversary value {st.adversary.value} < {rho}")
            if st.scheduler is not None and st.scheduler.value > rho:
                report.fail(f"{name} #{i} step {st.step}: scheduler value {st.scheduler.value} > {rho}")
        if rec.final_trimmed_ratio() < rho:
            report.fail(f"{name} #{i}: adversary stopped below rho*")
        if isinstance(sched, LSScheduler):
            for msg in ls_bound_violations(cfg, rec):
                report.fail(f"{name} #{i}: {msg}")
    return report


def scheduler_fuzz(graph: GameGraph, table: ValueTable, streams: int, length: int, seed: int = 0) -> SuiteReport:
    """Random job streams against the table scheduler and against LS."""
    cfg = graph.cfg
    rho = table.rho_star
    report = SuiteReport("scheduler_fuzz")
    for i in range(streams):
        for sched in (TableScheduler(graph, table), LSScheduler(cfg)):
            adv = RandomAdversary(cfg, random.Random(seed * 1_000_003 + i), length)
            try:
                rec = run_match(cfg, adv, sched, length + 1)
            except CompSchemeError as exc:
                report.fail(f"stream {i}: {type(exc).__name__}: {exc}")
                continue
            report.cases += 1
            if isinstance(sched, TableScheduler):
                for st in rec.steps:
                    if st.scheduler.value > rho or st.scheduler.trimmed_ratio > rho:
                        report.fail(f"stream {i} step {st.step}: scheduler above rho*")
            else:
                for msg in ls_bound_violations(cfg, rec):
                    report.fail(f"stream {i}: {msg}")
    return report

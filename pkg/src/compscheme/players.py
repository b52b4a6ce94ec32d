"""Executable strategies and the match runner.

The runner owns the real schedule; players only see the jobs released and
the machines chosen. Machine indices are 0-based in Python and 1-based on
the JSON wire protocol.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO, Optional, Protocol

import numpy as np

from .errors import InputError, InvariantViolation, ProtocolError
from .game_solver import GameGraph, ValueTable, adversary_ranks
from .grid import EpsilonConfig, exponent_of, format_rational, grid_value, parse_rational, pow_eps
from .machine_states import state_load
from .offline_opt import JobMultiset, opt_makespan_integral
from .scenarios import (
    BOT,
    Scenario,
    instant_ratio_real,
    instant_ratio_trimmed,
    ratio_index,
    scenario_cmax,
    scenario_opt,
    trimmed_cmax_opt_scaled,
)
from .transitions import Coupling, couple_step, coupling_holds, scenario_add, view_states

STOP = None


class Adversary(Protocol):
    def next_job(self) -> Optional[Fraction]: ...

    def observe(self, machine: int) -> None: ...


class Scheduler(Protocol):
    def place(self, p: Fraction) -> int: ...


@dataclass
class Tracked:
    node: int
    value: Fraction
    trimmed_ratio: Fraction
    shifted: bool


def ls_place(cfg: EpsilonConfig, psi: Scenario, p: Fraction | None = None) -> int:
    """List scheduling: least-loaded machine, lowest index on ties."""
    loads = [state_load(cfg, st) for st in psi.states]
    return loads.index(min(loads))


class _TableTracker:
    """Shared bookkeeping for the two table-driven players."""

    def __init__(self, graph: GameGraph, table: ValueTable):
        self.cfg = graph.cfg
        self.graph = graph
        self.table = table
        self.rho_index = table.rho_star_index
        self.coupling = Coupling.start(self.cfg)
        self.node = 0

    def _node_of(self, c: Coupling) -> int:
        phi = c.phi
        if phi == BOT:
            raise InvariantViolation("tracked trimmed-scenario became infeasible")
        idx = self.graph.index.get(phi)
        if idx is None:
            raise InvariantViolation(f"tracked trimmed-scenario {phi} is not in the solved graph")
        if not coupling_holds(self.cfg, c):
            raise InvariantViolation("trimmed-scenario stopped simulating the real schedule")
        return idx

    def tracked(self) -> Tracked:
        phi = self.graph.nodes[self.node]
        return Tracked(
            node=self.node,
            value=self.table.value(self.node),
            trimmed_ratio=instant_ratio_trimmed(self.cfg, phi),
            shifted=self.coupling.shifted,
        )

    def t_eff_factor(self) -> Fraction:
        return pow_eps(self.cfg, self.coupling.t_eff)


class TableAdversary(_TableTracker):
    """Releases the job from R whose every reply keeps the value >= rho* while
    strictly lowering the number of releases still needed; stops as soon as
    the tracked instant ratio reaches rho*."""

    def __init__(self, graph: GameGraph, table: ValueTable, ranks: np.ndarray | None = None):
        super().__init__(graph, table)
        self.ranks = adversary_ranks(graph, table) if ranks is None else ranks
        self._pending: Optional[Fraction] = None
        if self.ranks[0] < 0:
            raise InvariantViolation("EMPTY cannot reach rho*")

    def choose_alpha(self, node: int) -> Optional[int]:
        """Index into R of the release at ``node`` (None means STOP)."""
        ratio = ratio_index(self.cfg, self.graph.nodes[node])
        if ratio is not None and ratio >= self.rho_index:
            return None
        rank = self.ranks[node]
        best = None
        for a in range(1, self.graph.zeta):
            succ = self.graph.succ(node, a)
            if any(s != -1 and not 0 <= self.ranks[s] < rank for s in succ):
                continue
            worst = min(self.table.value_index(s) for s in succ)
            if best is None or worst > best[0]:
                best = (worst, a)
        if best is None:
            raise InvariantViolation(f"no release keeps the adversary on track at node {node}")
        return best[1]

    def next_job(self) -> Optional[Fraction]:
        a = self.choose_alpha(self.node)
        if a is None:
            return STOP
        alpha = pow_eps(self.cfg, self.graph.alpha_exponents[a])
        self._pending = alpha * self.t_eff_factor()
        return self._pending

    def observe(self, machine: int) -> None:
        if self._pending is None:
            raise ProtocolError("placement observed with no job pending")
        c, _, _ = couple_step(self.cfg, self.coupling, self._pending, machine, exact_alpha=True)
        self._pending = None
        node = self._node_of(c)
        if self.table.value_index(node) < self.rho_index:
            raise InvariantViolation("adversary fell below rho*")
        self.coupling, self.node = c, node


class TableScheduler(_TableTracker):
    """Lazy placement when the tracked trimmed-scenario can absorb the job,
    otherwise the placement whose successor has the least value."""

    def __init__(self, graph: GameGraph, table: ValueTable):
        super().__init__(graph, table)
        self.lazy_moves = 0

    def place(self, p: Fraction) -> int:
        p = parse_rational(p)
        if p <= 0:
            raise InputError("real jobs must have positive size")
        cfg, c = self.cfg, self.coupling
        if c.theta is not None:
            for h in range(cfg.m):
                out = scenario_add(cfg, c.psi, p, h)
                if out.forbidden:
                    continue
                lazy = Coupling(out.result, c.theta, c.t_eff)  # type: ignore[arg-type]
                if coupling_holds(cfg, lazy):
                    self.coupling = lazy
                    self.lazy_moves += 1
                    return h
        options = []
        alphas = set()
        for h in range(cfg.m):
            c2, out, alpha_mu = couple_step(cfg, c, p, h)
            alphas.add(alpha_mu)
            if out.forbidden or c2.phi == BOT:
                continue
            idx = self.graph.index.get(c2.phi)
            if idx is None:
                raise InvariantViolation(f"successor {c2.phi} missing from the graph")
            options.append((self.table.value_index(idx), idx, h, c2))
        if len(alphas) != 1:
            raise InvariantViolation(f"projected job depends on the machine: {alphas}")
        if not options:
            raise InvariantViolation("every placement is infeasible")
        value, idx, h, c2 = min(options, key=lambda o: o[:3])
        if value > self.rho_index:
            raise InvariantViolation("no placement keeps the value <= rho*")
        self._node_of(c2)
        self.coupling, self.node = c2, idx
        return h


class LSScheduler:
    def __init__(self, cfg: EpsilonConfig):
        self.cfg = cfg
        self.psi = Scenario.empty(cfg)

    def place(self, p: Fraction) -> int:
        h = ls_place(self.cfg, self.psi, p)
        self.psi = scenario_add(self.cfg, self.psi, p, h).result  # type: ignore[assignment]
        return h


class FixedScheduler:
    """Always the same machine; a deliberately bad opponent."""

    def __init__(self, machine: int = 0):
        self.machine = machine

    def place(self, p: Fraction) -> int:
        return self.machine


class RandomAdversary:
    """Releases ``length`` jobs (1+eps)**j with j uniform in ``exp_range``."""

    def __init__(self, cfg: EpsilonConfig, rng: random.Random, length: int, exp_range: tuple[int, int] = (-8, 12)):
        self.cfg = cfg
        self.rng = rng
        self.left = length
        self.exp_range = exp_range

    def next_job(self) -> Optional[Fraction]:
        if self.left <= 0:
            return STOP
        self.left -= 1
        return pow_eps(self.cfg, self.rng.randint(*self.exp_range))

    def observe(self, machine: int) -> None:
        pass


# ------------------------------------------------------------ wire protocol


def _send(stream: IO[str], msg: dict) -> None:
    stream.write(json.dumps(msg, separators=(",", ":")) + "\n")
    stream.flush()


def _recv(stream: IO[str]) -> dict:
    line = stream.readline()
    if not line:
        raise ProtocolError("peer closed the stream")
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed line: {line.strip()!r}") from exc
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError(f"malformed message: {line.strip()!r}")
    return msg


class ExternalScheduler:
    """A scheduler on the far side of a line-delimited JSON stream."""

    def __init__(self, cfg: EpsilonConfig, reader: IO[str], writer: IO[str]):
        self.cfg = cfg
        self.reader = reader
        self.writer = writer

    def place(self, p: Fraction) -> int:
        _send(self.writer, {"type": "job", "size": format_rational(p)})
        msg = _recv(self.reader)
        if msg["type"] != "place":
            raise ProtocolError(f"expected a place message, got {msg!r}")
        h = msg.get("machine")
        if isinstance(h, bool) or not isinstance(h, int) or not 1 <= h <= self.cfg.m:
            raise ProtocolError(f"invalid machine index {h!r}")
        return h - 1

    def finish(self, trimmed_ratio, real_ratio) -> None:
        msg = {"type": "stop", "real_ratio": format_rational(real_ratio)}
        msg["trimmed_ratio"] = "inf" if trimmed_ratio is None else format_rational(trimmed_ratio)
        _send(self.writer, msg)


class ExternalAdversary:
    """An adversary on the far side of a line-delimited JSON stream."""

    def __init__(self, cfg: EpsilonConfig, reader: IO[str], writer: IO[str]):
        self.cfg = cfg
        self.reader = reader
        self.writer = writer

    def next_job(self) -> Optional[Fraction]:
        msg = _recv(self.reader)
        if msg["type"] == "stop":
            return STOP
        if msg["type"] != "job" or not isinstance(msg.get("size"), str):
            raise ProtocolError(f"expected a job message, got {msg!r}")
        try:
            size = parse_rational(msg["size"])
            exponent_of(self.cfg, size)
        except InputError as exc:
            raise ProtocolError(f"job size off the grid: {msg['size']!r}") from exc
        return size

    def observe(self, machine: int) -> None:
        _send(self.writer, {"type": "place", "machine": machine + 1})


# ------------------------------------------------------------- match runner


@dataclass
class StepRecord:
    step: int
    job: Fraction
    machine: int
    real_ratio: Fraction
    integral_ratio: Fraction
    adversary: Optional[Tracked] = None
    scheduler: Optional[Tracked] = None

    def to_json(self) -> dict:
        out = {
            "step": self.step,
            "job": format_rational(self.job),
            "machine": self.machine + 1,
            "real_ratio": format_rational(self.real_ratio),
            "integral_ratio": format_rational(self.integral_ratio),
        }
        for role in ("adversary", "scheduler"):
            t = getattr(self, role)
            if t is not None:
                out[role] = {
                    "node": t.node,
                    "value": format_rational(t.value),
                    "trimmed_ratio": format_rational(t.trimmed_ratio),
                    "shifted": t.shifted,
                }
        return out


@dataclass
class MatchRecord:
    steps: list[StepRecord] = field(default_factory=list)
    reason: str = "stop"
    psi: Optional[Scenario] = None

    @property
    def final_real_ratio(self) -> Fraction:
        return self.steps[-1].real_ratio if self.steps else Fraction(1)

    def final_trimmed_ratio(self, role: str = "adversary") -> Optional[Fraction]:
        for st in reversed(self.steps):
            t = getattr(st, role)
            if t is not None:
                return t.trimmed_ratio
        return None

    def to_json(self) -> dict:
        return {
            "reason": self.reason,
            "n_jobs": len(self.steps),
            "final_real_ratio": format_rational(self.final_real_ratio),
            "steps": [s.to_json() for s in self.steps],
        }


def run_match(cfg: EpsilonConfig, adversary, scheduler, max_steps: int = 10_000) -> MatchRecord:
    """Alternate releases and placements until STOP, a forbidden placement or
    ``max_steps``.

    Each step records two exact ratios: ``real_ratio`` from the scenario
    encoding (small jobs splittable in OPT) and ``integral_ratio`` from the
    absolute loads against the offline optimum of the jobs as released.
    """
    psi = Scenario.empty(cfg)
    record = MatchRecord()
    loads = [Fraction(0)] * cfg.m
    released: dict[Fraction, int] = {}
    for step in range(1, max_steps + 1):
        p = adversary.next_job()
        if p is STOP:
            break
        p = parse_rational(p)
        try:
            exponent_of(cfg, p)
        except InputError as exc:
            raise ProtocolError(f"adversary released an off-grid job {p}") from exc
        h = scheduler.place(p)
        if isinstance(h, bool) or not isinstance(h, int) or not 0 <= h < cfg.m:
            raise ProtocolError(f"scheduler chose invalid machine {h!r}")
        out = scenario_add(cfg, psi, p, h)
        psi = out.result  # type: ignore[assignment]
        adversary.observe(h)
        loads[h] += p
        released[p] = released.get(p, 0) + 1
        opt = opt_makespan_integral(JobMultiset.from_counts(released), cfg.m)
        rec = StepRecord(step, p, h, instant_ratio_real(cfg, psi), max(loads) / opt)
        if isinstance(adversary, _TableTracker):
            rec.adversary = adversary.tracked()
        if isinstance(scheduler, _TableTracker):
            rec.scheduler = scheduler.tracked()
        record.steps.append(rec)
        if out.forbidden:
            record.reason = "forbidden"
            break
    else:
        record.reason = "max_steps"
    record.psi = psi
    finish = getattr(scheduler, "finish", None)
    if finish is not None:
        finish(record.final_trimmed_ratio(), record.final_real_ratio)
    return record


def coupling_gaps(cfg: EpsilonConfig, c: Coupling) -> dict[str, Fraction]:
    """C_max and OPT of the tracked trimmed-scenario and of the real schedule
    seen at the same scale (used to check the simulation sandwich)."""
    view = view_states(cfg, c.psi, c.t_eff)
    real = Scenario(view, c.t_eff)  # type: ignore[arg-type]
    cmax, opt = trimmed_cmax_opt_scaled(cfg, c.phi)
    return {
        "cmax_trimmed": Fraction(cmax, cfg.scale),
        "opt_trimmed": Fraction(opt, cfg.scale),
        "cmax_real": scenario_cmax(cfg, real),
        "opt_real": scenario_opt(cfg, real),
    }

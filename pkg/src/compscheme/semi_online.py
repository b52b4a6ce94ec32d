"""Exact optimal online play for P|p_j <= q|Cmax with integer sizes.

The bounded game lets the adversary release sizes 1..q while the total load
stays within 2mq; each machine is a count vector (jobs of size 1..q), and a
schedule is the sorted tuple of those vectors. Values are exact rationals.
Past the 2mq boundary the schedule continues with list scheduling.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InputError, InvariantViolation, ResourceError
from .grid import format_rational, parse_rational
from .offline_opt import opt_integer

log = logging.getLogger(__name__)

SemiScenario = tuple[tuple[int, ...], ...]

DEFAULT_STATE_CAP = 2_000_000
CACHE_VERSION = 1


def machine_load(vec: Sequence[int]) -> int:
    return sum((s + 1) * c for s, c in enumerate(vec))


def semi_total(sigma: SemiScenario) -> int:
    return sum(machine_load(v) for v in sigma)


def semi_cmax_opt(sigma: SemiScenario) -> tuple[int, int]:
    counts = [sum(col) for col in zip(*sigma)]
    items = tuple((s + 1, c) for s, c in enumerate(counts) if c)
    return max(machine_load(v) for v in sigma), opt_integer(items, len(sigma))


def semi_ratio(sigma: SemiScenario) -> Fraction:
    cmax, opt = semi_cmax_opt(sigma)
    return Fraction(1) if opt == 0 else Fraction(cmax, opt)


def _place(sigma: SemiScenario, i: int, s: int) -> SemiScenario:
    vec = list(sigma[i])
    vec[s - 1] += 1
    out = list(sigma)
    out[i] = tuple(vec)
    return tuple(sorted(out))


def _check_args(m: int, q: int) -> None:
    if isinstance(m, bool) or not isinstance(m, int) or m < 2:
        raise InputError(f"m must be an integer >= 2, got {m!r}")
    if isinstance(q, bool) or not isinstance(q, int) or q < 1:
        raise InputError(f"q must be an integer >= 1, got {q!r}")


@dataclass
class SemiGraph:
    m: int
    q: int
    nodes: list[SemiScenario]
    index: dict[SemiScenario, int]
    # succ[i][s-1]: list of (machine vector placed on, successor index); empty if s overflows
    succ: list[list[list[tuple[tuple[int, ...], int]]]]


def build_semi_graph(m: int, q: int, state_cap: int = DEFAULT_STATE_CAP) -> SemiGraph:
    _check_args(m, q)
    limit = 2 * m * q
    empty: SemiScenario = ((0,) * q,) * m
    nodes = [empty]
    index = {empty: 0}
    succ: list[list[list[tuple[tuple[int, ...], int]]]] = []
    queue = deque([0])
    while queue:
        i = queue.popleft()
        sigma = nodes[i]
        total = semi_total(sigma)
        row = []
        for s in range(1, q + 1):
            moves = []
            if total + s <= limit:
                seen = set()
                for h, vec in enumerate(sigma):
                    if vec in seen:
                        continue
                    seen.add(vec)
                    nxt = _place(sigma, h, s)
                    j = index.get(nxt)
                    if j is None:
                        if len(nodes) >= state_cap:
                            raise ResourceError(f"semi-online state space exceeds cap {state_cap}")
                        j = len(nodes)
                        index[nxt] = j
                        nodes.append(nxt)
                        queue.append(j)
                    moves.append((vec, j))
            row.append(moves)
        succ.append(row)
    return SemiGraph(m, q, nodes, index, succ)


@dataclass
class SemiValueTable:
    m: int
    q: int
    nodes: list[SemiScenario]
    values: list[Fraction]
    sweeps_used: int
    # strategy[(node, s)] = machine vector to place size s on
    strategy: dict[tuple[int, int], tuple[int, ...]] = field(default_factory=dict)

    @property
    def ratio_star(self) -> Fraction:
        return self.values[0]

    @property
    def boundary(self) -> int:
        return 2 * self.m * self.q

    def index(self) -> dict[SemiScenario, int]:
        return {sigma: i for i, sigma in enumerate(self.nodes)}

    def payload(self) -> dict:
        return {
            "version": CACHE_VERSION,
            "m": self.m,
            "q": self.q,
            "nodes": [[list(v) for v in sigma] for sigma in self.nodes],
            "values": [format_rational(v) for v in self.values],
            "ratio_star": format_rational(self.ratio_star),
            "sweeps": self.sweeps_used,
            "strategy": [[i, s, list(vec)] for (i, s), vec in sorted(self.strategy.items())],
        }

    def save(self, path: str | Path) -> None:
        body = self.payload()
        body["checksum"] = _checksum(body)
        Path(path).write_text(json.dumps(body, separators=(",", ":")), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SemiValueTable":
        try:
            body = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read semi-online cache {path}: {exc}") from exc
        if body.pop("checksum", None) != _checksum(body):
            raise InputError(f"semi-online cache {path} failed its checksum")
        if body.get("version") != CACHE_VERSION:
            raise InputError(f"unsupported cache version {body.get('version')}")
        table = cls(
            m=int(body["m"]),
            q=int(body["q"]),
            nodes=[tuple(tuple(int(c) for c in v) for v in sigma) for sigma in body["nodes"]],
            values=[parse_rational(v) for v in body["values"]],
            sweeps_used=int(body["sweeps"]),
            strategy={(int(i), int(s)): tuple(int(c) for c in vec) for i, s, vec in body["strategy"]},
        )
        if table.ratio_star != parse_rational(body["ratio_star"]):
            raise InputError("cached ratio_star disagrees with the cached values")
        return table


def _checksum(body: dict) -> str:
    blob = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def semi_solve(m: int, q: int, *, state_cap: int = DEFAULT_STATE_CAP, sweep_cap: int = 100_000) -> SemiValueTable:
    """Solve the bounded game exactly and derive the min-branch strategy."""
    started = time.perf_counter()
    graph = build_semi_graph(m, q, state_cap)
    values = [semi_ratio(sigma) for sigma in graph.nodes]
    sweeps = 0
    while True:
        if sweeps >= sweep_cap:
            raise ResourceError(f"semi-online iteration did not converge within {sweep_cap} sweeps")
        new = []
        for i, row in enumerate(graph.succ):
            best = values[i]
            for moves in row:
                if moves:
                    best = max(best, min(values[j] for _, j in moves))
            new.append(best)
        sweeps += 1
        if new == values:
            break
        if any(a < b for a, b in zip(new, values)):
            raise InvariantViolation("semi-online values decreased")
        values = new
    strategy = {}
    for i, row in enumerate(graph.succ):
        for s, moves in enumerate(row, start=1):
            if moves:
                vec, _ = min(moves, key=lambda mv: (values[mv[1]], mv[1]))
                strategy[(i, s)] = vec
    log.info("semi-online m=%d q=%d: %d states, %d sweeps, %.1fs", m, q, len(graph.nodes), sweeps, time.perf_counter() - started)
    return SemiValueTable(m, q, graph.nodes, values, sweeps, strategy)


def semi_schedule(table: SemiValueTable, stream: Iterable[int]) -> list[int]:
    """Machines (0-based) chosen for ``stream``: the table's min-branch while
    the total stays within 2mq, list scheduling afterwards."""
    m, q = table.m, table.q
    index = table.index()
    vecs = [[0] * q for _ in range(m)]
    loads = [0] * m
    total = 0
    bounded = True
    out = []
    for p in stream:
        if isinstance(p, bool) or not isinstance(p, int) or not 1 <= p <= q:
            raise InputError(f"job size must be an integer in 1..{q}, got {p!r}")
        # once a job crosses the boundary every later job goes through LS
        bounded = bounded and total + p <= table.boundary
        if bounded:
            sigma = tuple(sorted(tuple(v) for v in vecs))
            target = table.strategy[(index[sigma], p)]
            h = next(i for i, v in enumerate(vecs) if tuple(v) == target)
        else:
            h = loads.index(min(loads))
        vecs[h][p - 1] += 1
        loads[h] += p
        total += p
        out.append(h)
    return out


def schedule_ratios(m: int, stream: Sequence[int], machines: Sequence[int]) -> list[Fraction]:
    """Exact C_max/OPT after every prefix of a placed stream."""
    loads = [0] * m
    counts: dict[int, int] = {}
    out = []
    for p, h in zip(stream, machines):
        loads[h] += p
        counts[p] = counts.get(p, 0) + 1
        opt = opt_integer(tuple(sorted(counts.items(), reverse=True)), m)
        out.append(Fraction(max(loads), opt))
    return out

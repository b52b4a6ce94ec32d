"""Reachable game graph over canonical trimmed-scenarios and the min-max
value iteration that solves it.

Values are kept as integer indices into the Delta grid (value = 1 + k*eps),
so every comparison is exact; BOT is a sentinel larger than any index.
Successor lists are stored in CSR form: group ``i*zeta + a`` holds the
distinct outcomes of releasing the a-th element of R at node ``i``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import InputError, InvariantViolation, ResourceError
from .grid import EpsilonConfig, format_rational, grid_value, make_config, parse_rational
from .scenarios import (
    BOT,
    EMPTY,
    INF,
    TrimmedScenario,
    node_from_json,
    node_to_json,
    ratio_index,
)
from .transitions import successors

log = logging.getLogger(__name__)

BOT_INDEX = -1
INF_INDEX = np.int64(1) << 40
DEFAULT_NODE_CAP = 5_000_000
DEFAULT_SWEEP_CAP = 1_000_000
CACHE_VERSION = 1


@dataclass
class GameGraph:
    cfg: EpsilonConfig
    nodes: list[TrimmedScenario]
    index: dict[TrimmedScenario, int]
    group_ptr: np.ndarray  # len n*zeta + 1
    succ_flat: np.ndarray  # successor node indices, BOT_INDEX for BOT
    build_seconds: float = 0.0

    @property
    def zeta(self) -> int:
        return self.cfg.zeta

    @property
    def alpha_exponents(self) -> tuple[int | None, ...]:
        return (None,) + self.cfg.r_exponents

    def __len__(self) -> int:
        return len(self.nodes)

    @cached_property
    def succ_padded(self) -> np.ndarray:
        """``succ_flat`` with BOT mapped to ``n``, the slot of an INF pad."""
        return np.where(self.succ_flat == BOT_INDEX, len(self.nodes), self.succ_flat)

    def succ(self, i: int, a: int) -> tuple[int, ...]:
        g = i * self.zeta + a
        return tuple(int(x) for x in self.succ_flat[self.group_ptr[g] : self.group_ptr[g + 1]])


def build_reachable_graph(cfg: EpsilonConfig, node_cap: int = DEFAULT_NODE_CAP) -> GameGraph:
    """Breadth-first closure of EMPTY under every (alpha, placement)."""
    started = time.perf_counter()
    alphas = (None,) + cfg.r_exponents
    nodes: list[TrimmedScenario] = [EMPTY]
    index: dict[TrimmedScenario, int] = {EMPTY: 0}
    ptr = [0]
    flat: list[int] = []
    queue = deque([0])
    while queue:
        i = queue.popleft()
        phi = nodes[i]
        for mu in alphas:
            ids = []
            for nxt in successors(cfg, phi, mu):
                if nxt == BOT:
                    ids.append(BOT_INDEX)
                    continue
                j = index.get(nxt)
                if j is None:
                    if len(nodes) >= node_cap:
                        raise ResourceError(f"reachable graph exceeds node cap {node_cap}")
                    j = len(nodes)
                    index[nxt] = j
                    nodes.append(nxt)
                    queue.append(j)
                ids.append(j)
            ids = sorted(set(ids))
            flat.extend(ids)
            ptr.append(len(flat))
    graph = GameGraph(
        cfg=cfg,
        nodes=nodes,
        index=index,
        group_ptr=np.asarray(ptr, dtype=np.int64),
        succ_flat=np.asarray(flat, dtype=np.int64),
    )
    graph.build_seconds = time.perf_counter() - started
    log.info("built graph eps=%s m=%d: %d nodes in %.1fs", cfg.eps, cfg.m, len(nodes), graph.build_seconds)
    return graph


def base_ratios(graph: GameGraph) -> np.ndarray:
    """Grid index of every node's instant ratio."""
    out = np.empty(len(graph), dtype=np.int64)
    for i, phi in enumerate(graph.nodes):
        k = ratio_index(graph.cfg, phi)
        out[i] = INF_INDEX if k is None else k
    return out


@dataclass
class ValueTable:
    cfg: EpsilonConfig
    nodes: list[TrimmedScenario]
    values: np.ndarray  # grid indices
    sweeps_used: int
    z_trace: list[Fraction] = field(default_factory=list)

    @property
    def rho_star_index(self) -> int:
        return int(self.values[0])

    @property
    def rho_star(self) -> Fraction:
        return grid_value(self.cfg, self.rho_star_index)

    def value(self, i: int) -> Fraction | float:
        if i == BOT_INDEX:
            return INF
        v = int(self.values[i])
        return INF if v >= INF_INDEX else grid_value(self.cfg, v)

    def value_index(self, i: int) -> int:
        return int(INF_INDEX) if i == BOT_INDEX else int(self.values[i])

    # ------------------------------------------------------------- persistence

    def payload(self) -> dict:
        return {
            "version": CACHE_VERSION,
            "eps": format_rational(self.cfg.eps),
            "m": self.cfg.m,
            "nodes": [node_to_json(phi) for phi in self.nodes],
            "values": [format_rational(grid_value(self.cfg, int(v))) for v in self.values],
            "rho_star": format_rational(self.rho_star),
            "sweeps": self.sweeps_used,
            "z_trace": [format_rational(z) for z in self.z_trace],
        }

    def save(self, path: str | Path) -> None:
        body = self.payload()
        body["checksum"] = _checksum(body)
        Path(path).write_text(json.dumps(body, separators=(",", ":")), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ValueTable":
        try:
            body = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read value cache {path}: {exc}") from exc
        checksum = body.pop("checksum", None)
        if checksum != _checksum(body):
            raise InputError(f"value cache {path} failed its checksum")
        if body.get("version") != CACHE_VERSION:
            raise InputError(f"unsupported cache version {body.get('version')}")
        cfg = make_config(body["eps"], int(body["m"]))
        eps = cfg.eps
        values = np.asarray([(parse_rational(v) - 1) / eps for v in body["values"]], dtype=object)
        table = cls(
            cfg=cfg,
            nodes=[node_from_json(n) for n in body["nodes"]],
            values=np.asarray([int(v) for v in values], dtype=np.int64),
            sweeps_used=int(body["sweeps"]),
            z_trace=[parse_rational(z) for z in body.get("z_trace", [])],
        )
        if table.rho_star != parse_rational(body["rho_star"]):
            raise InputError("cached rho_star disagrees with the cached values")
        return table


def _checksum(body: dict) -> str:
    blob = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# ------------------------------------------------------------ value iteration


def _sweep_chunk(values_x: np.ndarray, graph: GameGraph, lo: int, hi: int) -> np.ndarray:
    z = graph.zeta
    ptr = graph.group_ptr
    start, stop = ptr[lo * z], ptr[hi * z]
    gathered = values_x[graph.succ_padded[start:stop]]
    offsets = ptr[lo * z : hi * z] - start
    group_min = np.minimum.reduceat(gathered, offsets)
    return group_min.reshape(hi - lo, z).max(axis=1)


def sweep(graph: GameGraph, values: np.ndarray, workers: int = 1) -> np.ndarray:
    """One Jacobi step: every node reads only the previous table."""
    n = len(graph)
    values_x = np.append(values, INF_INDEX)
    if workers <= 1 or n < 2 * workers:
        return _sweep_chunk(values_x, graph, 0, n)
    bounds = np.linspace(0, n, workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda ab: _sweep_chunk(values_x, graph, ab[0], ab[1]), zip(bounds[:-1], bounds[1:])))
    return np.concatenate(parts)


def value_iterate(
    graph: GameGraph,
    ratios: np.ndarray | None = None,
    *,
    workers: int = 1,
    sweep_cap: int = DEFAULT_SWEEP_CAP,
    extra_sweeps: int = 3,
) -> ValueTable:
    """Iterate V <- max_alpha min_placement V to the pointwise fixed point.

    Checks, every sweep, that values never decrease, that no node reaches
    BOT's infinity and that the potential Z grows by at least eps whenever it
    grows; after convergence ``extra_sweeps`` further sweeps must change
    nothing.
    """
    cfg = graph.cfg
    if ratios is None:
        ratios = base_ratios(graph)
    values = np.asarray(ratios, dtype=np.int64).copy()
    n = len(graph)
    bound = math.floor(20 * n / cfg.eps) + 1
    cap = min(bound, sweep_cap)
    eps = cfg.eps

    def potential(v: np.ndarray) -> Fraction:
        return n + eps * int(v.sum())

    if (values >= INF_INDEX).any():
        raise InvariantViolation("a reachable node carries an infinite instant ratio")
    z_trace = [potential(values)]
    sweeps = 0
    while True:
        if sweeps >= cap:
            raise ResourceError(f"value iteration did not converge within {cap} sweeps")
        new = sweep(graph, values, workers)
        sweeps += 1
        if (new < values).any():
            raise InvariantViolation("value iteration decreased a node value")
        if (new >= INF_INDEX).any():
            raise InvariantViolation("a node value became infinite")
        z_trace.append(potential(new))
        if z_trace[-1] != z_trace[-2] and z_trace[-1] - z_trace[-2] < eps:
            raise InvariantViolation("potential grew by less than eps")
        if np.array_equal(new, values):
            break
        values = new
    for _ in range(extra_sweeps):
        if not np.array_equal(sweep(graph, values, workers), values):
            raise InvariantViolation("fixed point was not absorbing")
    log.info("value iteration eps=%s m=%d converged after %d sweeps", cfg.eps, cfg.m, sweeps)
    return ValueTable(cfg=cfg, nodes=list(graph.nodes), values=values, sweeps_used=sweeps, z_trace=z_trace)


def adversary_ranks(graph: GameGraph, table: ValueTable, ratios: np.ndarray | None = None) -> np.ndarray:
    """For each node, the number of further releases the adversary needs to
    force an instant ratio >= rho*, or -1 when it cannot.

    A node has rank 0 if its own ratio reaches rho*; rank t if some nonzero
    release sends every placement to nodes of rank < t. Ranks never exceed
    the number of sweeps the value iteration used.
    """
    if ratios is None:
        ratios = base_ratios(graph)
    n = len(graph)
    z = graph.zeta
    target = table.rho_star_index
    ranks = np.where(ratios >= target, 0, -1).astype(np.int64)
    succ_x = graph.succ_padded
    t = 0
    while True:
        t += 1
        has = np.append(ranks >= 0, True).astype(np.int8)
        ok = np.minimum.reduceat(has[succ_x], graph.group_ptr[:-1]).reshape(n, z)
        progress = ok[:, 1:].max(axis=1).astype(bool) & (ranks < 0)
        if not progress.any():
            break
        ranks[progress] = t
    reach = table.values >= target
    if not np.array_equal(reach, ranks >= 0):
        raise InvariantViolation("adversary ranks disagree with the value table")
    return ranks


def solve(cfg: EpsilonConfig, *, node_cap: int = DEFAULT_NODE_CAP, workers: int = 1) -> tuple[GameGraph, ValueTable]:
    graph = build_reachable_graph(cfg, node_cap)
    return graph, value_iterate(graph, workers=workers)

"""Exact offline makespan (P||Cmax) for the small multisets the solver meets.

Sizes are rationals; they are scaled to integers by the LCM of their
denominators and solved by depth-first branch and bound with
sorted-load memoisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping

from .errors import ResourceError
from .grid import parse_rational

DEFAULT_NODE_CAP = 2_000_000


@dataclass(frozen=True)
class JobMultiset:
    """Jobs as (size, count) pairs, largest size first, zero counts dropped."""

    items: tuple[tuple[Fraction, int], ...]

    @classmethod
    def from_counts(cls, counts: Mapping) -> "JobMultiset":
        merged: dict[Fraction, int] = {}
        for size, count in counts.items():
            size = parse_rational(size)
            if size <= 0:
                raise ValueError(f"job sizes must be positive, got {size}")
            if count < 0:
                raise ValueError("negative job count")
            if count:
                merged[size] = merged.get(size, 0) + int(count)
        return cls(tuple(sorted(merged.items(), key=lambda kv: -kv[0])))

    @classmethod
    def from_sizes(cls, sizes: Iterable) -> "JobMultiset":
        counts: dict[Fraction, int] = {}
        for s in sizes:
            s = parse_rational(s)
            counts[s] = counts.get(s, 0) + 1
        return cls.from_counts(counts)

    @property
    def n_jobs(self) -> int:
        return sum(c for _, c in self.items)

    @property
    def total(self) -> Fraction:
        return sum((s * c for s, c in self.items), Fraction(0))

    @property
    def largest(self) -> Fraction:
        return self.items[0][0] if self.items else Fraction(0)


def _lpt(sizes: tuple[int, ...], m: int) -> int:
    loads = [0] * m
    for p in sizes:
        h = loads.index(min(loads))
        loads[h] += p
    return max(loads)


@lru_cache(maxsize=200_000)
def opt_integer(items: tuple[tuple[int, int], ...], m: int, node_cap: int = DEFAULT_NODE_CAP) -> int:
    """Minimum makespan for integer-sized jobs given as (size, count) pairs."""
    sizes = tuple(sorted((s for s, c in items for _ in range(c)), reverse=True))
    if not sizes:
        return 0
    total = sum(sizes)
    lower = max(-(-total // m), sizes[0])
    best = _lpt(sizes, m)
    if best == lower:
        return best
    n = len(sizes)
    loads = [0] * m
    seen: set[tuple] = set()
    nodes = 0

    def dfs(idx: int) -> bool:
        # returns True once the lower bound is met (search can stop)
        nonlocal best, nodes
        if idx == n:
            best = max(loads)
            return best == lower
        key = (idx, tuple(sorted(loads)))
        if key in seen:
            return False
        seen.add(key)
        nodes += 1
        if nodes > node_cap:
            raise ResourceError(f"offline OPT search exceeded {node_cap} nodes")
        p = sizes[idx]
        tried = set()
        for h in sorted(range(m), key=loads.__getitem__):
            load = loads[h]
            if load + p >= best:
                break
            if load in tried:
                continue
            tried.add(load)
            loads[h] = load + p
            done = dfs(idx + 1)
            loads[h] = load
            if done:
                return True
        return False

    dfs(0)
    return best


def _scaled(jobs: JobMultiset) -> tuple[tuple[tuple[int, int], ...], int]:
    denom = 1
    for s, _ in jobs.items:
        denom = math.lcm(denom, s.denominator)
    return tuple((int(s * denom), c) for s, c in jobs.items), denom


def opt_makespan_integral(jobs: JobMultiset, m: int, node_cap: int = DEFAULT_NODE_CAP) -> Fraction:
    """Exact minimum makespan with every job assigned whole to one machine."""
    if m < 1:
        raise ValueError("m must be positive")
    items, denom = _scaled(jobs)
    return Fraction(opt_integer(items, m, node_cap), denom)


def opt_makespan_fluid(
    big_jobs: JobMultiset, small_total: Fraction | int | str, m: int, node_cap: int = DEFAULT_NODE_CAP
) -> Fraction:
    """Optimum when the small load may be split arbitrarily.

    Water-filling the small load onto a fixed big-job assignment gives
    max(largest big load, total/m); minimising over assignments therefore
    only needs the integral optimum of the big jobs.
    """
    small_total = parse_rational(small_total)
    if small_total < 0:
        raise ValueError("negative small load")
    big_opt = opt_makespan_integral(big_jobs, m, node_cap)
    level = (big_jobs.total + small_total) / m
    return max(big_opt, level)

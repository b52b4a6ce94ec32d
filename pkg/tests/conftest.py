from __future__ import annotations

import functools
from fractions import Fraction

import pytest

from compscheme.game_solver import adversary_ranks, build_reachable_graph, value_iterate
from compscheme.grid import make_config

ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def _solved(eps: str, m: int):
    cfg = make_config(eps, m)
    graph = build_reachable_graph(cfg)
    table = value_iterate(graph)
    return cfg, graph, table, adversary_ranks(graph, table)


@pytest.fixture(scope="session")
def solved():
    """solved(eps, m) -> (cfg, graph, table, ranks), shared across the session."""
    return lambda eps, m: _solved(str(Fraction(eps)), m)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

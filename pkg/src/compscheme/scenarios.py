"""Whole-schedule encodings: real scenarios and trimmed-scenarios.

A trimmed-scenario is either one of the sentinels :data:`EMPTY` (no jobs
yet) and :data:`BOT` (any infeasible outcome), or a sorted tuple of ``m``
trimmed-states. Sorting makes equal multisets equal tuples, so they can be
used directly as dictionary keys.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence, Union

from .errors import InputError
from .grid import EpsilonConfig, format_rational, grid_index, grid_value, parse_rational, pow_eps
from .machine_states import (
    MachineState,
    TrimmedState,
    g_one,
    state_load,
    trimmed_load_scaled,
)
from .offline_opt import JobMultiset, opt_integer, opt_makespan_fluid

EMPTY = "EMPTY"
BOT = "BOT"

TrimmedScenario = Union[str, tuple[TrimmedState, ...]]

INF = float("inf")


@dataclass(frozen=True)
class Scenario:
    """A real schedule: per-machine states relative to T = (1+eps)**t_exp."""

    states: tuple[MachineState, ...]
    t_exp: int = 0

    @classmethod
    def empty(cls, cfg: EpsilonConfig) -> "Scenario":
        return cls(tuple(MachineState.zero(cfg) for _ in range(cfg.m)), 0)

    @property
    def m(self) -> int:
        return len(self.states)

    def has_jobs(self) -> bool:
        return any(not st.is_empty() for st in self.states)

    def to_json(self) -> dict:
        return {"t_exp": self.t_exp, "states": [st.to_json() for st in self.states]}


# ----------------------------------------------------------------- real side


def scenario_load(cfg: EpsilonConfig, psi: Scenario) -> Fraction:
    return sum((state_load(cfg, st) for st in psi.states), Fraction(0))


def scenario_pmax(cfg: EpsilonConfig, psi: Scenario) -> Fraction:
    """Largest relative job size; small jobs count as (1+eps)**-c0."""
    top = 0
    any_small = False
    for st in psi.states:
        for i in range(len(st.big), 0, -1):
            if st.big[i - 1]:
                top = max(top, i)
                break
        any_small = any_small or st.small > 0
    if top:
        return pow_eps(cfg, top - cfg.c0)
    return cfg.small_unit if any_small else Fraction(0)


def scenario_lb(cfg: EpsilonConfig, psi: Scenario) -> Fraction:
    return max(scenario_load(cfg, psi) / psi.m, scenario_pmax(cfg, psi))


def is_feasible_scenario(cfg: EpsilonConfig, psi: Scenario) -> bool:
    return 1 <= scenario_lb(cfg, psi) < cfg.band_top


def scenario_cmax(cfg: EpsilonConfig, psi: Scenario) -> Fraction:
    return max(state_load(cfg, st) for st in psi.states)


def scenario_opt(cfg: EpsilonConfig, psi: Scenario) -> Fraction:
    """Offline optimum with small jobs splittable."""
    counts: dict[Fraction, int] = {}
    small = Fraction(0)
    for st in psi.states:
        small += st.small * cfg.small_unit
        for i, c in enumerate(st.big, start=1):
            if c:
                size = pow_eps(cfg, i - cfg.c0)
                counts[size] = counts.get(size, 0) + c
    return opt_makespan_fluid(JobMultiset.from_counts(counts), small, psi.m)


def instant_ratio_real(cfg: EpsilonConfig, psi: Scenario) -> Fraction:
    """Exact C_max(psi) / OPT(psi) of a real scenario (scale-free)."""
    if not psi.has_jobs():
        return Fraction(1)
    return scenario_cmax(cfg, psi) / scenario_opt(cfg, psi)


# -------------------------------------------------------------- trimmed side


def make_node(states: Sequence[Sequence[int]]) -> tuple[TrimmedState, ...]:
    return tuple(sorted(tuple(s) for s in states))


def phi_states(cfg: EpsilonConfig, phi: TrimmedScenario) -> tuple[TrimmedState, ...]:
    """The m trimmed-states of phi (EMPTY expands to all-zero states)."""
    if phi == EMPTY:
        return ((0,) * cfg.tuple_len,) * cfg.m
    if phi == BOT:
        raise ValueError("BOT has no trimmed-states")
    return phi


def pmax_scaled(cfg: EpsilonConfig, states: Sequence[Sequence[int]]) -> int:
    length = cfg.tuple_len
    top = 0
    any_small = False
    for tau in states:
        for i in range(length - 1, top, -1):
            if tau[i]:
                top = i
                break
        any_small = any_small or tau[0] > 0
    if top:
        return cfg.weights[top]
    return cfg.weights[0] if any_small else 0


def lb_times_m_scaled(cfg: EpsilonConfig, states: Sequence[Sequence[int]]) -> int:
    """m * LB of a state vector, in the integer scale of ``cfg.weights``."""
    total = sum(trimmed_load_scaled(cfg, tau) for tau in states)
    return max(total, len(states) * pmax_scaled(cfg, states))


def trimmed_lb(cfg: EpsilonConfig, phi: TrimmedScenario) -> Fraction:
    states = phi_states(cfg, phi)
    return Fraction(lb_times_m_scaled(cfg, states), len(states) * cfg.scale)


def is_feasible_node(cfg: EpsilonConfig, phi: TrimmedScenario) -> bool:
    """Feasible NODE: m feasible states and 1 <= LB < (1+eps)^omega + 2(1+eps)^-c0."""
    if phi in (EMPTY, BOT):
        return False
    if len(phi) != cfg.m or any(trimmed_load_scaled(cfg, t) > cfg.cap_scaled for t in phi):
        return False
    m, w = cfg.m, cfg.weights
    lbm = lb_times_m_scaled(cfg, phi)
    return m * cfg.scale <= lbm < m * (w[-1] + 2 * w[0])


def in_phi_prime(cfg: EpsilonConfig, phi: TrimmedScenario) -> bool:
    """Membership in the canonical set: sentinels, or LB below (1+eps)^omega."""
    if phi in (EMPTY, BOT):
        return True
    return lb_times_m_scaled(cfg, phi) < cfg.m * cfg.weights[-1]


def shift_node(cfg: EpsilonConfig, states: Sequence[TrimmedState]) -> list[TrimmedState]:
    return [g_one(cfg, tau) for tau in states]


def canonicalize(cfg: EpsilonConfig, phi: TrimmedScenario) -> TrimmedScenario:
    """Map a feasible NODE to its representative in the canonical set."""
    if phi in (EMPTY, BOT) or in_phi_prime(cfg, phi):
        return phi
    if not is_feasible_node(cfg, phi):
        raise ValueError(f"canonicalize needs a feasible trimmed-scenario, got {phi}")
    out = make_node(shift_node(cfg, phi))
    assert in_phi_prime(cfg, out) and is_feasible_node(cfg, out)
    return out


def job_counts(states: Sequence[Sequence[int]]) -> tuple[int, ...]:
    return tuple(map(sum, zip(*states)))


@lru_cache(maxsize=1_000_000)
def _opt_scaled(weights: tuple[int, ...], counts: tuple[int, ...], m: int) -> int:
    items = tuple((w, c) for w, c in zip(weights, counts) if c)
    return opt_integer(items, m)


def trimmed_cmax_opt_scaled(cfg: EpsilonConfig, phi: TrimmedScenario) -> tuple[int, int]:
    """(C_max, OPT) of a NODE in integer scale; OPT schedules small units whole."""
    states = phi_states(cfg, phi)
    cmax = max(trimmed_load_scaled(cfg, tau) for tau in states)
    return cmax, _opt_scaled(cfg.weights, job_counts(states), len(states))


def raw_ratio_trimmed(cfg: EpsilonConfig, phi: TrimmedScenario) -> Fraction:
    """Un-rounded C_max(phi)/OPT(phi)."""
    if phi == EMPTY:
        return Fraction(1)
    if phi == BOT:
        raise ValueError("BOT has no finite ratio")
    cmax, opt = trimmed_cmax_opt_scaled(cfg, phi)
    return Fraction(cmax, opt)


@lru_cache(maxsize=2_000_000)
def _ratio_index_cached(cfg: EpsilonConfig, phi: TrimmedScenario) -> int:
    return grid_index(cfg, raw_ratio_trimmed(cfg, phi))


def ratio_index(cfg: EpsilonConfig, phi: TrimmedScenario) -> int | None:
    """Grid index of the instant ratio; None stands for infinity (BOT)."""
    if phi == BOT:
        return None
    if phi == EMPTY:
        return 0
    return _ratio_index_cached(cfg, phi)


def instant_ratio_trimmed(cfg: EpsilonConfig, phi: TrimmedScenario) -> Fraction | float:
    """Instant ratio rounded up onto the Delta grid (inf for BOT)."""
    k = ratio_index(cfg, phi)
    return INF if k is None else grid_value(cfg, k)


# ------------------------------------------------------------ serialisation


def node_to_json(phi: TrimmedScenario):
    if phi in (EMPTY, BOT):
        return phi
    return [list(t) for t in phi]


def node_from_json(obj) -> TrimmedScenario:
    if obj in (EMPTY, BOT):
        return obj
    if not isinstance(obj, list):
        raise InputError(f"bad trimmed-scenario {obj!r}")
    return make_node(tuple(int(v) for v in t) for t in obj)


def value_to_json(v: Fraction | float) -> str:
    return "inf" if v == INF else format_rational(v)


def value_from_json(s: str) -> Fraction | float:
    return INF if s == "inf" else parse_rational(s)

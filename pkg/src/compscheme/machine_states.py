"""Per-machine encodings and the shift maps between scaling factors.

A real state keeps the small-job load as an exact fraction; a trimmed-state
is a plain integer tuple. Both use the positional layout of
:class:`~compscheme.grid.EpsilonConfig`: coordinate ``i`` counts jobs of
relative size ``(1+eps)**(i - c0)``, coordinate 0 being the small-job load in
units of ``(1+eps)**-c0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import InputError, ResourceError
from .grid import EpsilonConfig, exponent_of, format_rational, parse_rational, pow_eps

TrimmedState = tuple[int, ...]

DEFAULT_STATE_CAP = 10**7


@dataclass(frozen=True)
class MachineState:
    small: Fraction
    big: tuple[int, ...]

    def vector(self) -> list[Fraction | int]:
        return [self.small, *self.big]

    @classmethod
    def from_vector(cls, vec: Sequence[Fraction | int]) -> "MachineState":
        return cls(Fraction(vec[0]), tuple(int(v) for v in vec[1:]))

    @classmethod
    def zero(cls, cfg: EpsilonConfig) -> "MachineState":
        return cls(Fraction(0), (0,) * (cfg.tuple_len - 1))

    def is_empty(self) -> bool:
        return self.small == 0 and not any(self.big)

    def to_json(self) -> dict:
        return {"small": format_rational(self.small), "big": list(self.big)}

    @classmethod
    def from_json(cls, obj: dict) -> "MachineState":
        return cls(parse_rational(obj["small"]), tuple(int(v) for v in obj["big"]))


def state_load(cfg: EpsilonConfig, st: MachineState) -> Fraction:
    """LD(st): exact load relative to the scaling factor."""
    total = st.small * cfg.small_unit
    for i, count in enumerate(st.big, start=1):
        if count:
            total += count * pow_eps(cfg, i - cfg.c0)
    return total


def trimmed_load_scaled(cfg: EpsilonConfig, tau: Sequence[int]) -> int:
    w = cfg.weights
    return sum(w[i] * v for i, v in enumerate(tau) if v)


def trimmed_load(cfg: EpsilonConfig, tau: Sequence[int]) -> Fraction:
    return Fraction(trimmed_load_scaled(cfg, tau), cfg.scale)


def is_feasible_trimmed(cfg: EpsilonConfig, tau: Sequence[int]) -> bool:
    return len(tau) == cfg.tuple_len and min(tau) >= 0 and trimmed_load_scaled(cfg, tau) <= cfg.cap_scaled


def state_add(cfg: EpsilonConfig, st: MachineState, rel_size: Fraction | int | str) -> MachineState:
    """Add one job of size ``rel_size`` (relative to the scaling factor)."""
    rel = parse_rational(rel_size)
    if rel < 0:
        raise InputError(f"negative job size {rel}")
    if rel == 0:
        return st
    unit = cfg.small_unit
    if rel <= unit:
        return MachineState(st.small + rel / unit, st.big)
    mu = exponent_of(cfg, rel)
    if not (-cfg.c0 < mu <= cfg.omega):
        raise InputError(f"relative size (1+eps)^{mu} is outside the bucket range")
    big = list(st.big)
    big[mu + cfg.c0 - 1] += 1
    return MachineState(st.small, tuple(big))


def f_shift(cfg: EpsilonConfig, st: MachineState, k: int) -> MachineState:
    """Re-express a state under a scaling factor (1+eps)**(k*omega) larger."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return st
    vec = st.vector()
    length = cfg.tuple_len
    span = k * cfg.omega
    base = cfg.base
    folded = Fraction(0)
    for i in range(min(span, length - 1) + 1):
        if vec[i]:
            folded += vec[i] * base ** (i - span)
    big = tuple(vec[i + span] if i + span < length else 0 for i in range(1, length))
    return MachineState(folded, big)


def g_one(cfg: EpsilonConfig, tau: TrimmedState) -> TrimmedState:
    """g_1: shift by one omega block and round the folded coordinate up."""
    w = cfg.weights
    om = cfg.omega
    num = 0
    for i in range(om + 1):
        if tau[i]:
            num += w[i] * tau[i]
    head = -(-num // w[om])
    length = len(tau)
    return (head,) + tuple(tau[i + om] if i + om < length else 0 for i in range(1, length))


def g_shift(cfg: EpsilonConfig, tau: TrimmedState, k: int) -> TrimmedState:
    """g_k = g_1 applied k times (not ceil of f_k, which can differ)."""
    tau = tuple(tau)
    for _ in range(k):
        nxt = g_one(cfg, tau)
        if nxt == tau:
            break
        tau = nxt
    return tau


def is_simulating(tau: Sequence[int], st: MachineState) -> bool:
    """True iff ``tau`` matches ``st`` on every big coordinate and the
    small coordinate lies in [eta, eta + 2]."""
    if tuple(tau[1:]) != tuple(st.big):
        return False
    return st.small <= tau[0] <= st.small + 2


class _LimitReached(Exception):
    pass


def count_trimmed_states(cfg: EpsilonConfig, limit: int | None = None) -> int:
    """Number of feasible trimmed-states; stops early once ``limit`` is passed."""
    w = cfg.weights
    length = cfg.tuple_len
    total = 0

    def rec(pos: int, budget: int) -> None:
        nonlocal total
        if pos == 0:
            total += budget // w[0] + 1
            if limit is not None and total > limit:
                raise _LimitReached
            return
        for c in range(budget // w[pos] + 1):
            rec(pos - 1, budget - c * w[pos])

    try:
        rec(length - 1, cfg.cap_scaled)
    except _LimitReached:
        pass
    return total


def enumerate_trimmed_states(cfg: EpsilonConfig, cap: int = DEFAULT_STATE_CAP) -> list[TrimmedState]:
    """All feasible trimmed-states in lexicographic order."""
    n = count_trimmed_states(cfg, limit=cap)
    if n > cap:
        raise ResourceError(f"more than {cap} feasible trimmed-states for eps={cfg.eps}")
    w = cfg.weights
    length = cfg.tuple_len
    out: list[TrimmedState] = []
    prefix: list[int] = []

    def rec(pos: int, budget: int) -> None:
        if pos == length:
            out.append(tuple(prefix))
            return
        for c in range(budget // w[pos] + 1):
            prefix.append(c)
            rec(pos + 1, budget - c * w[pos])
            prefix.pop()

    rec(0, cfg.cap_scaled)
    return out

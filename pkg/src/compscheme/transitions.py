"""Adding a job to a real scenario and to a trimmed-scenario, and keeping the
two in lock-step.

Trimmed-side operations work on machine-ordered lists of states so callers
can follow which machine became which state; :func:`trimmed_add` sorts the
result into the canonical multiset.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import InputError
from .grid import EpsilonConfig, exponent_of, parse_rational, pow_eps
from .machine_states import (
    MachineState,
    TrimmedState,
    f_shift,
    g_one,
    g_shift,
    is_simulating,
    state_add,
    state_load,
    trimmed_load_scaled,
)
from .scenarios import (
    BOT,
    EMPTY,
    Scenario,
    TrimmedScenario,
    lb_times_m_scaled,
    make_node,
    phi_states,
    scenario_lb,
)

# ------------------------------------------------------------- real scenarios


@dataclass(frozen=True)
class TransitionOutcome:
    result: Scenario | TrimmedScenario
    shifted: bool
    forbidden: bool = False


def scenario_add(cfg: EpsilonConfig, psi: Scenario, p: Fraction | int | str, machine: int) -> TransitionOutcome:
    """Place a real job of size ``p`` on ``machine`` (0-based)."""
    if not 0 <= machine < psi.m:
        raise InputError(f"machine index {machine} out of range")
    j = exponent_of(cfg, parse_rational(p))
    om = cfg.omega
    states = list(psi.states)
    if not psi.has_jobs():
        t = om * (j // om)
        mu = j - t
    else:
        t = psi.t_exp
        mu = j - t
        if mu > om:
            k = mu // om
            states = [f_shift(cfg, st, k) for st in states]
            t += k * om
            mu -= k * om
    states[machine] = state_add(cfg, states[machine], pow_eps(cfg, mu))
    out = Scenario(tuple(states), t)
    while scenario_lb(cfg, out) >= cfg.band_top:
        out = Scenario(tuple(f_shift(cfg, st, 1) for st in out.states), out.t_exp + om)
    forbidden = state_load(cfg, out.states[machine]) > 4 * cfg.band_top
    return TransitionOutcome(out, out.t_exp != psi.t_exp, forbidden)


# ---------------------------------------------------------- trimmed scenarios


def _add_exponent(cfg: EpsilonConfig, tau: TrimmedState, mu: int) -> TrimmedState:
    pos = mu + cfg.c0
    if not 0 <= pos < cfg.tuple_len:
        raise InputError(f"exponent {mu} does not fit a trimmed-state")
    out = list(tau)
    out[pos] += 1
    return tuple(out)


def apply_job(
    cfg: EpsilonConfig,
    states: Sequence[TrimmedState] | None,
    index: int,
    mu: int | None,
) -> tuple[list[TrimmedState] | str, int]:
    """Add the job (1+eps)**mu to machine ``index`` of a machine-ordered state
    list (``None`` means the empty schedule, ``mu=None`` a zero job).

    Returns the new machine-ordered list (or BOT) and the number of omega
    blocks by which the scaling factor grew.
    """
    om = cfg.omega
    if states is None:
        zero = (0,) * cfg.tuple_len
        if mu is None:
            return None, 0  # type: ignore[return-value]
        k = mu // om
        new = [zero] * cfg.m
        new[index] = _add_exponent(cfg, zero, mu - k * om)
        return new, k
    new = list(states)
    if mu is None:
        return new, 0
    if mu <= om:
        new[index] = _add_exponent(cfg, new[index], mu)
        shifts = 0
    else:
        k = mu // om
        new = [g_shift(cfg, tau, k) for tau in new]
        new[index] = _add_exponent(cfg, new[index], mu - k * om)
        shifts = k
    limit = cfg.m * cfg.weights[-1]
    while lb_times_m_scaled(cfg, new) >= limit:
        new = [g_one(cfg, tau) for tau in new]
        shifts += 1
    cap = cfg.cap_scaled
    if any(trimmed_load_scaled(cfg, tau) > cap for tau in new):
        return BOT, shifts
    return new, shifts


def alpha_exponent(cfg: EpsilonConfig, alpha: Fraction | int | str) -> int | None:
    """Exponent of a job size from R (None for the zero job)."""
    alpha = parse_rational(alpha)
    if alpha == 0:
        return None
    mu = exponent_of(cfg, alpha)
    if mu not in cfg.r_exponents:
        raise InputError(f"job size {alpha} is not in R")
    return mu


def trimmed_add(
    cfg: EpsilonConfig,
    phi: TrimmedScenario,
    alpha: Fraction | int | str,
    place: Sequence[int] | None = None,
) -> TrimmedScenario:
    """Release ``alpha`` (from R) and put it on a machine whose trimmed-state
    is ``place``; the result is canonical or BOT."""
    mu = alpha_exponent(cfg, alpha)
    if phi == BOT:
        return BOT
    if phi == EMPTY:
        if mu is None:
            return EMPTY
        new, _ = apply_job(cfg, None, 0, mu)
        return make_node(new)
    states = phi_states(cfg, phi)
    if place is None:
        raise InputError("a placement is required for a non-empty trimmed-scenario")
    try:
        index = states.index(tuple(place))
    except ValueError:
        raise InputError(f"trimmed-state {tuple(place)} is not present in {phi}") from None
    new, _ = apply_job(cfg, states, index, mu)
    return BOT if new == BOT else make_node(new)


def successors(cfg: EpsilonConfig, phi: TrimmedScenario, mu: int | None) -> list[TrimmedScenario]:
    """Distinct outcomes of releasing (1+eps)**mu over all placements."""
    if phi == BOT:
        return []
    if phi == EMPTY:
        if mu is None:
            return [EMPTY]
        new, _ = apply_job(cfg, None, 0, mu)
        return [make_node(new)]
    out = []
    seen_place = set()
    for i, tau in enumerate(phi):
        if tau in seen_place:
            continue
        seen_place.add(tau)
        new, _ = apply_job(cfg, phi, i, mu)
        node = BOT if new == BOT else make_node(new)
        if node not in out:
            out.append(node)
    return out


# ------------------------------------------------------------- job projection


def project_exponent(cfg: EpsilonConfig, mu: int, target_small_fit: bool) -> tuple[int | None, int]:
    """Project a job of relative exponent ``mu`` onto R.

    Returns (exponent in R or None for the zero job, extra omega shifts that
    the truncation of a huge job hides).
    """
    if mu <= -cfg.c0:
        return (None if target_small_fit else -cfg.c0), 0
    top = cfg.r_exponents[-1]
    if mu <= top:
        return mu, 0
    om = cfg.omega
    k, rest = divmod(mu, om)
    return cfg.k_max * om + rest, k - cfg.k_max


def project_job(
    cfg: EpsilonConfig,
    p: Fraction | int | str,
    T: Fraction | int | str,
    shifted: bool,
    target_small_fit: bool,
) -> Fraction:
    """The job from R that the trimmed game sees when the real job ``p`` is
    released under scaling factor ``T`` (times (1+eps)^omega if shifted)."""
    t_eff = parse_rational(T) * (cfg.band_top if shifted else 1)
    mu = exponent_of(cfg, parse_rational(p) / t_eff)
    alpha_mu, _ = project_exponent(cfg, mu, target_small_fit)
    return Fraction(0) if alpha_mu is None else pow_eps(cfg, alpha_mu)


# ------------------------------------------------------ real/trimmed coupling


@dataclass(frozen=True)
class Coupling:
    """A real scenario together with the machine-ordered trimmed-states that
    track it. ``theta`` is None before the first job and BOT after an
    infeasible move; ``t_eff`` is the exponent of the scaling factor the
    trimmed side is expressed in (t_exp or t_exp + omega when shifted)."""

    psi: Scenario
    theta: tuple[TrimmedState, ...] | str | None
    t_eff: int

    @classmethod
    def start(cls, cfg: EpsilonConfig) -> "Coupling":
        return cls(Scenario.empty(cfg), None, 0)

    @property
    def phi(self) -> TrimmedScenario:
        if self.theta is None:
            return EMPTY
        if self.theta == BOT:
            return BOT
        return make_node(self.theta)

    @property
    def shifted(self) -> bool:
        return self.theta is not None and self.t_eff != self.psi.t_exp


def view_states(cfg: EpsilonConfig, psi: Scenario, t_eff: int) -> tuple[MachineState, ...] | None:
    """States of psi re-expressed under (1+eps)**t_eff (None if t_eff is below t_exp)."""
    d = t_eff - psi.t_exp
    if d < 0 or d % cfg.omega:
        return None
    k = d // cfg.omega
    return tuple(f_shift(cfg, st, k) for st in psi.states)


def coupling_holds(cfg: EpsilonConfig, c: Coupling) -> bool:
    """Simulating or shifted-simulating relation, machine by machine."""
    if c.theta is None:
        return not c.psi.has_jobs()
    if c.theta == BOT:
        return False
    if c.t_eff - c.psi.t_exp not in (0, cfg.omega):
        return False
    view = view_states(cfg, c.psi, c.t_eff)
    return view is not None and all(is_simulating(tau, st) for tau, st in zip(c.theta, view))


def couple_step(
    cfg: EpsilonConfig,
    c: Coupling,
    p: Fraction | int | str,
    machine: int,
    *,
    exact_alpha: bool = False,
) -> tuple[Coupling, TransitionOutcome, int | None]:
    """Advance both sides by the real job ``p`` placed on ``machine``.

    With ``exact_alpha`` the job is known to be exactly alpha*T_eff for some
    alpha in R (the adversary's own releases) and is replayed unprojected,
    which keeps the trimmed move inside the solved graph's successor set.
    Returns the new coupling, the real outcome and the exponent used on the
    trimmed side.
    """
    p = parse_rational(p)
    outcome = scenario_add(cfg, c.psi, p, machine)
    psi2: Scenario = outcome.result  # type: ignore[assignment]
    if c.theta == BOT:
        return Coupling(psi2, BOT, c.t_eff), outcome, None
    j = exponent_of(cfg, p)
    mu = j - c.t_eff
    if c.theta is None:
        new, shifts = apply_job(cfg, None, machine, mu)
        return Coupling(psi2, tuple(new), c.t_eff + shifts * cfg.omega), outcome, mu
    extra = 0
    if exact_alpha and mu in cfg.r_exponents:
        alpha_mu: int | None = mu
    else:
        fit = False
        if mu <= -cfg.c0:
            view = view_states(cfg, c.psi, c.t_eff)
            if view is None:
                raise InputError("coupling scale below the real scale")
            fit = view[machine].small + pow_eps(cfg, mu + cfg.c0) <= c.theta[machine][0]
        alpha_mu, extra = project_exponent(cfg, mu, fit)
    new, shifts = apply_job(cfg, c.theta, machine, alpha_mu)
    theta = BOT if new == BOT else tuple(new)
    return Coupling(psi2, theta, c.t_eff + (shifts + extra) * cfg.omega), outcome, alpha_mu

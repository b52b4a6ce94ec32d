from fractions import Fraction

import pytest

from compscheme.checks import simulation_fuzz
from compscheme.errors import InputError
from compscheme.grid import make_config, pow_eps
from compscheme.machine_states import MachineState, trimmed_load_scaled
from compscheme.scenarios import BOT, EMPTY, Scenario, in_phi_prime, make_node
from compscheme.transitions import (
    Coupling,
    apply_job,
    couple_step,
    coupling_holds,
    project_job,
    scenario_add,
    successors,
    trimmed_add,
)

ONE = make_config(1, 2)


def ms(small, *big):
    return MachineState(Fraction(small), tuple(big))


def test_scenario_add_first_job():
    out = scenario_add(ONE, Scenario.empty(ONE), 1, 0)
    assert out.result == Scenario((ms(1, 0, 0), ms(0, 0, 0)), 0)
    assert not out.shifted and not out.forbidden


def test_scenario_add_big_job_no_shift():
    psi = Scenario((ms(1, 0, 0), ms(1, 0, 0)), 0)
    out = scenario_add(ONE, psi, 2, 0)
    assert out.result == Scenario((ms(1, 1, 0), ms(1, 0, 0)), 0)
    assert not out.shifted


def test_scenario_add_huge_job_shifts():
    psi = Scenario((ms(1, 0, 0), ms(0, 0, 0)), 0)
    out = scenario_add(ONE, psi, 16, 1)
    assert out.shifted and out.result.t_exp == 4
    assert out.result.states == (ms(Fraction(1, 16), 0, 0), ms(1, 0, 0))


def test_scenario_add_rescales_when_band_is_left():
    psi = Scenario((ms(0, 0, 1), ms(0, 0, 0)), 0)
    out = scenario_add(ONE, psi, 4, 1)
    # LB reaches 4 = (1+eps)^omega, so everything folds one block
    assert out.shifted and out.result.t_exp == 2
    assert out.result.states == (ms(1, 0, 0), ms(1, 0, 0))


def test_scenario_add_forbidden():
    cfg = make_config(1, 5)
    psi = Scenario.empty(cfg)
    for _ in range(16):
        out = scenario_add(cfg, psi, 1, 0)
        assert not out.forbidden
        psi = out.result
    assert scenario_add(cfg, psi, 1, 0).forbidden
    assert not scenario_add(cfg, psi, 1, 1).forbidden


def test_scenario_add_rejects():
    with pytest.raises(InputError):
        scenario_add(ONE, Scenario.empty(ONE), 3, 0)
    with pytest.raises(InputError):
        scenario_add(ONE, Scenario.empty(ONE), 1, 2)


def test_trimmed_add_examples():
    assert trimmed_add(ONE, EMPTY, 1) == make_node([(1, 0, 0), (0, 0, 0)])
    phi = make_node([(1, 0, 0), (1, 0, 0)])
    assert trimmed_add(ONE, phi, 2, (1, 0, 0)) == make_node([(1, 1, 0), (1, 0, 0)])
    assert trimmed_add(ONE, phi, 0, (1, 0, 0)) == phi
    assert trimmed_add(ONE, EMPTY, 0) == EMPTY


def test_trimmed_add_overflow_is_bot():
    cfg = make_config(1, 6)
    phi = make_node([(17, 0, 0)] + [(0, 0, 0)] * 5)
    assert in_phi_prime(cfg, phi)
    assert trimmed_add(cfg, phi, 2, (17, 0, 0)) == BOT
    # a job of size (1+eps)^omega lifts the largest job to the band top, so the
    # overfull machine is folded instead of overflowing
    assert trimmed_add(cfg, phi, 4, (17, 0, 0)) == make_node([(6, 0, 0)] + [(0, 0, 0)] * 5)
    assert trimmed_add(cfg, phi, 1, (17, 0, 0)) == make_node([(18, 0, 0)] + [(0, 0, 0)] * 5)
    assert trimmed_add(cfg, phi, 4, (0, 0, 0)) != BOT


def test_trimmed_add_rescales():
    phi = make_node([(0, 0, 1), (0, 0, 0)])
    # LB would be 4: the result is folded back into the band
    out = trimmed_add(ONE, make_node([(0, 0, 0), (0, 1, 0)]), 4, (0, 0, 0))
    assert in_phi_prime(ONE, out)
    assert out == make_node([(1, 0, 0), (1, 0, 0)])
    assert not in_phi_prime(ONE, phi)


def test_trimmed_add_rejects():
    phi = make_node([(1, 0, 0), (0, 0, 0)])
    with pytest.raises(InputError):
        trimmed_add(ONE, phi, 3, (1, 0, 0))
    with pytest.raises(InputError):
        trimmed_add(ONE, phi, 256, (1, 0, 0))
    with pytest.raises(InputError):
        trimmed_add(ONE, phi, 1, (5, 0, 0))


@pytest.mark.parametrize("eps", ["1", "1/2"])
def test_huge_job_independent_of_size(eps):
    cfg = make_config(eps, 2)
    om, top = cfg.omega, cfg.k_max * cfg.omega
    states = [(1,) + (0,) * (cfg.tuple_len - 1), (0,) * cfg.tuple_len]
    for r in range(om):
        base, _ = apply_job(cfg, states, 0, top + r)
        for extra in range(1, 4):
            assert apply_job(cfg, states, 0, top + extra * om + r)[0] == base


def test_project_job_examples():
    assert project_job(ONE, 2, 1, False, False) == 2
    assert project_job(ONE, 2**10, 1, False, False) == 64
    assert project_job(ONE, 1, 1, False, True) == 0
    assert project_job(ONE, 1, 1, False, False) == 1
    cfg = make_config("1/2", 2)
    assert project_job(cfg, pow_eps(cfg, -5), 1, False, False) == pow_eps(cfg, -2)
    assert project_job(cfg, pow_eps(cfg, 4), 1, True, False) == pow_eps(cfg, 1)


@pytest.mark.parametrize("eps, m", [("1", 2), ("1", 3), ("1/2", 2)])
def test_graph_closed_and_feasibility_escape(solved, eps, m):
    cfg, graph, _, _ = solved(eps, m)
    for phi in graph.nodes[1:]:
        assert in_phi_prime(cfg, phi)
        lightest = min(phi, key=lambda t: trimmed_load_scaled(cfg, t))
        index = phi.index(lightest)
        for mu in cfg.r_exponents:
            new, _ = apply_job(cfg, phi, index, mu)
            assert new != BOT, (phi, mu)
        assert successors(cfg, phi, None) == [phi]


def test_couple_step_units():
    c = Coupling.start(ONE)
    c, _, mu = couple_step(ONE, c, 1, 1)
    assert mu == 0 and c.theta == ((0, 0, 0), (1, 0, 0)) and coupling_holds(ONE, c)
    c2, _, mu = couple_step(ONE, c, 2**9, 0)
    # a huge job folds both machines before landing
    assert c2.t_eff == 8 and c2.theta == ((0, 1, 0), (1, 0, 0)) and coupling_holds(ONE, c2)


@pytest.mark.parametrize("eps, m", [("1", 2), ("1", 3), ("1/2", 2), ("1/2", 3), ("1/4", 2)])
def test_simulation_fuzz_small(eps, m):
    report = simulation_fuzz(make_config(eps, m), 60, 20, seed=42)
    assert report.ok, report.violations
    assert report.cases > 1000

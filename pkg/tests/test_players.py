import io
import json
import random
import subprocess
import sys
from fractions import Fraction

import pytest

from compscheme.checks import sandwich_violations, scheduler_fuzz
from compscheme.errors import InputError, ProtocolError
from compscheme.grid import make_config, pow_eps
from compscheme.machine_states import MachineState
from compscheme.players import (
    STOP,
    ExternalAdversary,
    ExternalScheduler,
    FixedScheduler,
    LSScheduler,
    RandomAdversary,
    TableAdversary,
    TableScheduler,
    ls_place,
    run_match,
)
from compscheme.scenarios import Scenario, make_node

ONE = make_config(1, 2)


def test_ls_place_examples():
    ms = lambda small: MachineState(Fraction(small), (0, 0))  # noqa: E731
    assert ls_place(ONE, Scenario.empty(ONE), 5) == 0
    assert ls_place(ONE, Scenario((ms(1), ms(1))), 2) == 0
    assert ls_place(ONE, Scenario((ms(3), ms(1))), 1) == 1


def test_adversary_opening_and_stop(solved):
    cfg, graph, table, ranks = solved(1, 2)
    adv = TableAdversary(graph, table, ranks)
    assert adv.next_job() == 1
    adv.observe(1)
    assert adv.coupling.theta == ((0, 0, 0), (1, 0, 0))
    assert adv.next_job() == 1
    adv.observe(1)
    assert graph.nodes[adv.node] == make_node([(2, 0, 0), (0, 0, 0)])
    assert adv.next_job() is STOP
    assert adv.tracked().trimmed_ratio == 2


def test_adversary_rejects_unsolicited_observation(solved):
    _, graph, table, ranks = solved(1, 2)
    with pytest.raises(ProtocolError):
        TableAdversary(graph, table, ranks).observe(0)


def test_scheduler_splits_unit_jobs(solved):
    _, graph, table, _ = solved(1, 2)
    sched = TableScheduler(graph, table)
    assert sched.place(Fraction(1)) == 0
    assert sched.place(Fraction(1)) == 1
    assert sched.tracked().value <= table.rho_star


def test_scheduler_lazy_for_tiny_jobs(solved):
    cfg, graph, table, _ = solved("1/2", 2)
    sched = TableScheduler(graph, table)
    tiny = pow_eps(cfg, -5)
    sched.place(Fraction(1))
    h = sched.place(tiny)
    node = sched.node
    assert sched.lazy_moves == 0
    # the next tiny job fits in the slack the first one opened
    assert sched.place(tiny) == h
    assert sched.lazy_moves == 1 and sched.node == node


def test_scheduler_rejects_bad_jobs(solved):
    _, graph, table, _ = solved(1, 2)
    with pytest.raises(InputError):
        TableScheduler(graph, table).place(Fraction(0))
    with pytest.raises(InputError):
        TableScheduler(graph, table).place(Fraction(-1))


def test_match_adversary_vs_ls(solved):
    cfg, graph, table, ranks = solved(1, 2)
    rec = run_match(cfg, TableAdversary(graph, table, ranks), LSScheduler(cfg))
    assert rec.reason == "stop"
    assert [s.job for s in rec.steps] == [1, 1, 2]
    assert rec.final_trimmed_ratio() >= table.rho_star == 2
    assert rec.steps[-1].integral_ratio == Fraction(3, 2)


@pytest.mark.parametrize("eps, m", [("1", 2), ("1", 3), ("1/2", 2)])
def test_match_table_vs_table(solved, eps, m):
    cfg, graph, table, ranks = solved(eps, m)
    rec = run_match(cfg, TableAdversary(graph, table, ranks), TableScheduler(graph, table))
    assert rec.reason == "stop" and len(rec.steps) <= table.sweeps_used
    for st in rec.steps:
        assert st.adversary.value == st.scheduler.value == table.rho_star


def test_match_record_json(solved):
    cfg, graph, table, ranks = solved(1, 2)
    rec = run_match(cfg, TableAdversary(graph, table, ranks), FixedScheduler(1))
    body = rec.to_json()
    assert body["reason"] == "stop"
    assert [s["machine"] for s in body["steps"]] == [2, 2]
    assert body["steps"][-1]["adversary"]["trimmed_ratio"] == "2/1"
    json.dumps(body)


def test_random_streams_against_table_scheduler(solved):
    _, graph, table, _ = solved(1, 2)
    report = scheduler_fuzz(graph, table, streams=1000, length=12, seed=3)
    assert report.ok, report.violations
    assert report.cases == 2000


def test_scheduler_coupling_sandwich(solved):
    cfg, graph, table, _ = solved("1/2", 2)
    rng = random.Random(8)
    for _ in range(40):
        sched = TableScheduler(graph, table)
        adv = RandomAdversary(cfg, rng, 25)
        while (p := adv.next_job()) is not STOP:
            sched.place(p)
            assert not sandwich_violations(cfg, sched.coupling)
            assert sched.tracked().value <= table.rho_star


def test_forbidden_placement_ends_match():
    cfg = make_config(1, 5)
    adv = RandomAdversary(cfg, random.Random(0), 40, exp_range=(0, 0))
    rec = run_match(cfg, adv, FixedScheduler(0))
    assert rec.reason == "forbidden" and len(rec.steps) == 17


def test_max_steps():
    rec = run_match(ONE, RandomAdversary(ONE, random.Random(0), 50), LSScheduler(ONE), max_steps=5)
    assert rec.reason == "max_steps" and len(rec.steps) == 5


class _BadAdversary:
    def next_job(self):
        return Fraction(3)

    def observe(self, machine):
        pass


def test_runner_rejects_protocol_violations():
    with pytest.raises(ProtocolError):
        run_match(ONE, _BadAdversary(), LSScheduler(ONE))
    with pytest.raises(ProtocolError):
        run_match(ONE, RandomAdversary(ONE, random.Random(0), 3), FixedScheduler(2))


def test_external_scheduler_messages():
    reader = io.StringIO('{"type":"place","machine":2}\n')
    writer = io.StringIO()
    sched = ExternalScheduler(ONE, reader, writer)
    assert sched.place(Fraction(4)) == 1
    assert json.loads(writer.getvalue()) == {"type": "job", "size": "4/1"}
    sched.finish(Fraction(2), Fraction(3, 2))
    last = json.loads(writer.getvalue().splitlines()[-1])
    assert last == {"type": "stop", "real_ratio": "3/2", "trimmed_ratio": "2/1"}


@pytest.mark.parametrize(
    "reply",
    ["not json\n", '{"type":"place","machine":3}\n', '{"type":"place","machine":0}\n', '{"type":"job"}\n', "", '{"machine":1}\n'],
)
def test_external_scheduler_malformed(reply):
    sched = ExternalScheduler(ONE, io.StringIO(reply), io.StringIO())
    with pytest.raises(ProtocolError):
        sched.place(Fraction(1))


def test_external_adversary():
    lines = '{"type":"job","size":"1/1"}\n{"type":"job","size":"2/1"}\n{"type":"stop"}\n'
    writer = io.StringIO()
    rec = run_match(ONE, ExternalAdversary(ONE, io.StringIO(lines), writer), LSScheduler(ONE))
    assert [s.job for s in rec.steps] == [1, 2]
    assert [json.loads(x) for x in writer.getvalue().splitlines()] == [
        {"type": "place", "machine": 1},
        {"type": "place", "machine": 2},
    ]
    with pytest.raises(ProtocolError):
        ExternalAdversary(ONE, io.StringIO('{"type":"job","size":"3/1"}\n'), io.StringIO()).next_job()
    with pytest.raises(ProtocolError):
        ExternalAdversary(ONE, io.StringIO('{"type":"job","size":0.5}\n'), io.StringIO()).next_job()


def test_external_stub_process(solved):
    cfg, graph, table, ranks = solved(1, 2)
    proc = subprocess.Popen(
        [sys.executable, "-m", "compscheme", "stub", "--machine", "1"],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=True,
        bufsize=1,
    )
    try:
        sched = ExternalScheduler(cfg, proc.stdout, proc.stdin)
        for _ in range(3):
            rec = run_match(cfg, TableAdversary(graph, table, ranks), sched)
            assert [s.machine for s in rec.steps] == [0, 0]
            assert rec.final_trimmed_ratio() == 2
    finally:
        proc.stdin.close()
        proc.wait(timeout=10)
    assert proc.returncode == 0

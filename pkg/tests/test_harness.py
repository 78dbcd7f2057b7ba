"""Scheduler determinism, history structure, and budget handling."""

import pytest

from nvtrack.harness import (
    STRUCTURES,
    Schedule,
    pattern_quanta,
    run_direct,
    run_schedule,
)
from nvtrack.runtime import (
    Abandoned,
    CrashEvent,
    Invoke,
    RecoverBegin,
    Response,
)

LIST = STRUCTURES["list"]


def test_same_schedule_twice_gives_identical_histories():
    wl = {0: [("insert", (5,)), ("delete", (5,))],
          1: [("insert", (5,)), ("insert", (7,))]}
    sched = Schedule(pattern_quanta("rand0", 2, 600, seed=3), (9,), ((1, 0),))
    a = run_schedule(LIST, wl, sched)
    b = run_schedule(LIST, wl, sched)
    assert a.history == b.history
    assert a.granted == b.granted


def test_single_pid_schedule_equals_sequential_run():
    ops = [("insert", (5,)), ("insert", (7,)), ("delete", (5,))]
    threaded = run_schedule(LIST, {0: ops}, Schedule(((0, 10_000),)))
    direct = run_direct(LIST, ops)
    strip = lambda h: [(type(e).__name__, getattr(e, "value", None)) for e in h]
    assert strip(threaded.history) == strip(direct.history)


def test_crash_event_precedes_recover_begin():
    wl = {0: [("insert", (5,))]}
    out = run_schedule(LIST, wl, Schedule(((0, 100),), (3,), ((0,),)))
    kinds = [type(e).__name__ for e in out.history]
    assert kinds.index("CrashEvent") < kinds.index("RecoverBegin")
    assert out.history[-1].value is True


def test_zero_crash_enumeration_is_plain_interleaving():
    wl = {0: [("insert", (5,))], 1: [("insert", (7,))]}
    out = run_schedule(LIST, wl, Schedule(pattern_quanta("block", 2, 500)))
    assert not any(isinstance(e, CrashEvent) for e in out.history)
    assert sorted(e.value for e in out.history if isinstance(e, Response)) \
        == [True, True]


def test_step_budget_exhaustion_marks_run_inconclusive():
    exchanger = STRUCTURES["exchanger"]
    wl = {0: [("exchange", (1,))]}     # a lone exchanger waits forever
    out = run_schedule(exchanger, wl, Schedule(((0, 10_000),)),
                       step_budget=120)
    assert out.inconclusive
    assert any(isinstance(e, Abandoned) for e in out.history)


def test_setup_ops_do_not_appear_in_history():
    out = run_direct(LIST, [("find", (5,))], setup=(("insert", (5,)),))
    assert [type(e).__name__ for e in out.history] == ["Invoke", "Response"]
    assert out.history[-1].value is True


def test_pattern_quanta_rejects_unknown():
    with pytest.raises(ValueError):
        pattern_quanta("zigzag", 2, 10)


def test_recovery_order_is_respected():
    wl = {0: [("insert", (5,))], 1: [("insert", (7,))]}
    quanta = pattern_quanta("rr1", 2, 500)
    out = run_schedule(LIST, wl, Schedule(quanta, (4,), ((1, 0),)))
    begins = [e.pid for e in out.history if isinstance(e, RecoverBegin)]
    assert len(begins) == 2     # both ops were in flight at step 4
    assert begins[0] == 1       # dispatch follows the given priority

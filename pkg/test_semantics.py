#!/usr/bin/env python3
"""
Tests for the TSO/SC step functions and the reachability explorer
"""

import sys
from pathlib import Path

import pytest

from lazy_tso.errors import BudgetExhausted, ReplayError, UnboundedBufferError
from lazy_tso.program_ir import BinOp, Const, Not, Reg
from lazy_tso.program_parser import load_program, parse
from lazy_tso.semantics import (
    SC, TSO, Event, compile_program, enumerate_computations, eval_expr, initial_state, reach,
    reachable_states, replay, step_sc, step_tso,
)

CORPUS = Path(__file__).parent / 'corpus'

EARLY_READ = """
domain 2;
addresses x;
thread t1 {
  init q0;
  q0 -> q1 : store x <- 1;
  q1 -> q2 : load r1 <- x;
}
goal { t1 @ q2; where r1 == 1; }
"""


def test_eval_expr_wraps_modulo_domain():
    assert eval_expr({'a': 2}, BinOp('+', Reg('a'), Const(2)), 3) == 1
    assert eval_expr({'a': 0}, BinOp('-', Reg('a'), Const(1)), 3) == 2
    assert eval_expr({'a': 2}, BinOp('*', Reg('a'), Const(2)), 3) == 1
    assert eval_expr({'a': 1}, BinOp('<', Reg('a'), Const(2)), 3) == 1
    assert eval_expr({'a': 0}, Not(Reg('a')), 3) == 1
    assert eval_expr({'a': 2}, BinOp('&&', Reg('a'), Const(0)), 3) == 0


def test_tso_steps_buffer_stores():
    program = load_program(CORPUS / 'dekker.prog')
    init = initial_state(program)
    steps = step_tso(program, init)
    assert [(e.thread, e.kind) for e, _ in steps] == [('t1', 'store'), ('t2', 'store')]

    event, after = steps[0]
    assert after.buf[0] == ((0, 0, 1, 't1.q0.q1.0'),)
    # memory unchanged until the flush
    assert after.val[0] == 0
    kinds = [e.kind for e, _ in step_tso(program, after) if e.thread == 't1']
    assert kinds == ['load', 'flush']


def test_each_thread_steps_from_its_own_state():
    program = load_program(CORPUS / 'dekker.prog')
    compiled = compile_program(program)
    _, after = step_tso(program, initial_state(program))[0]
    assert compiled.pc_names(after) == ('t1.q1', 't2.q0')
    t1 = [(e.kind, e.inst) for e, _ in step_tso(program, after) if e.thread == 't1']
    t2 = [(e.kind, e.inst) for e, _ in step_tso(program, after) if e.thread == 't2']
    assert t1 == [('load', 't1.q1.q2.1'), ('flush', 't1.q0.q1.0')]
    assert t2 == [('store', 't2.q0.q1.0')]


def test_sc_store_carries_its_flush():
    program = load_program(CORPUS / 'dekker.prog')
    steps = step_sc(program, initial_state(program))
    events, state = steps[0]
    assert [e.kind for e in events] == ['store', 'flush']
    assert state.val[0] == 1
    assert state.buffers_empty


def test_dekker_sc_unreachable_tso_reachable():
    program = load_program(CORPUS / 'dekker.prog')
    assert not reach(program, SC).reachable
    verdict = reach(program, TSO, verify=True)
    assert verdict.reachable
    assert verdict.trace.reached.buffers_empty


def test_tso_trace_replays_to_goal():
    program = load_program(CORPUS / 'dekker.prog')
    compiled = compile_program(program)
    verdict = reach(compiled, TSO)
    replayed = replay(compiled, verdict.trace.events, TSO)
    assert compiled.is_goal(replayed.reached)


def test_replay_rejects_disabled_event():
    program = load_program(CORPUS / 'dekker.prog')
    bogus = [Event('t1', 0, 't1.q1.q2.1', 'load', 1)]
    with pytest.raises(ReplayError):
        replay(program, bogus, TSO)


def test_early_read_sees_own_buffer():
    program = parse(EARLY_READ)
    verdict = reach(program, TSO)
    assert verdict.reachable
    kinds = [e.kind for e in verdict.trace.events]
    # load before the flush: the value came from the buffer
    assert kinds.index('load') < kinds.index('flush')


def test_fifo_buffers_keep_message_passing_safe():
    program = load_program(CORPUS / 'mp.prog')
    assert not reach(program, SC).reachable
    assert not reach(program, TSO).reachable


def test_fence_blocks_on_nonempty_buffer():
    program = load_program(CORPUS / 'dekker_fenced.prog')
    compiled = compile_program(program)
    state = initial_state(compiled)
    _, state = step_tso(compiled, state)[0]
    t1_kinds = [e.kind for e, _ in step_tso(compiled, state) if e.thread == 't1']
    assert t1_kinds == ['flush']
    assert not reach(program, TSO).reachable


def test_reach_respects_state_budget():
    program = load_program(CORPUS / 'lamport2.prog')
    with pytest.raises(BudgetExhausted) as info:
        reach(program, SC, limit=5)
    assert info.value.budget == 5


def test_tso_on_cyclic_program_needs_buffer_bound():
    program = load_program(CORPUS / 'flip_loop.prog')
    with pytest.raises(UnboundedBufferError):
        reach(program, TSO)
    assert not reach(program, TSO, buffer_bound=2).reachable


def test_por_agrees_with_full_exploration():
    for name in ('dekker', 'peterson', 'mp', 'parker', 'stack_handoff'):
        program = load_program(CORPUS / f'{name}.prog')
        for mode in (SC, TSO):
            assert reach(program, mode, por=True).reachable == reach(program, mode).reachable, name


def test_enumerate_computations_starts_with_empty():
    program = load_program(CORPUS / 'dekker.prog')
    computations = list(enumerate_computations(program))
    assert computations[0].events == ()
    assert all(c.reached.buffers_empty for c in computations)
    assert len(list(enumerate_computations(program, limit=3))) == 3


def test_reachable_states_projection():
    program = load_program(CORPUS / 'dekker.prog')
    sc = reachable_states(program, SC, symbols=['r1', 'r2'])
    tso = reachable_states(program, TSO, symbols=['r1', 'r2'])
    final = ('t1.qf', 't2.qf')
    assert (final, (0, 0)) not in sc
    assert (final, (0, 0)) in tso
    assert sc <= tso


def main():
    """Run every test in this file"""
    print("🚀 Starting semantics tests...\n")
    failed = 0
    for name, test in list(globals().items()):
        if name.startswith('test_') and callable(test):
            try:
                test()
                print(f"✅ {name}")
            except Exception as e:
                failed += 1
                print(f"❌ {name}: {e!r}")
    print(f"\n📊 {failed} failures")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())

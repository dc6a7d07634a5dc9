#!/usr/bin/env python3
"""
Tests for program extension, the lazy loop and the unrolling wrapper
"""

import sys
from pathlib import Path

import pytest

from lazy_tso.config import Settings
from lazy_tso.errors import ExtensionError, UnboundedBufferError
from lazy_tso.lazy_engine import (
    REACHABLE, SAFE_UP_TO_K, UNREACHABLE, LazyConfig, extend, extension_size_bound, lazy_reach,
    semi_decide,
)
from lazy_tso.oracle import oracle
from lazy_tso.program_ir import Assign, AddrRef, Const, Mfence, Reg, Store, command_text, unroll, validate
from lazy_tso.program_parser import load_program, parse
from lazy_tso.semantics import SC, TSO, reach

CORPUS = Path(__file__).parent / 'corpus'

DEKKER_SIGMA = ('t1.q0.q1.0', 't1.q1.q2.1')

# r1 is only defined by the loop's second instruction
LATE_REGISTER = """
domain 2;
addresses x;

thread t1 {
  init q0;
  q0 -> q1 : assume 1;
  q1 -> q0 : load r1 <- x;
}

thread t2 {
  init q0;
  q0 -> q1 : store x <- 1;
}

goal { where r1 == 1; }
"""


def _dekker():
    return load_program(CORPUS / 'dekker.prog')


def test_extend_dekker_keep_mode():
    program = _dekker()
    ext = extend(program, DEKKER_SIGMA)
    assert len(ext.added) == 9
    assert ext.aux.thread == 't1'
    assert ext.aux.max == 1
    assert ext.aux.address_registers == ('__ar1__1',)
    assert ext.aux.value_registers == ('__vr1__1',)
    assert ext.aux.hat_states == ('t1.__x1_q1', 't1.__x1_q2')
    assert len(ext.aux.chain_states) == 4
    assert validate(ext.program) == []

    t1 = ext.program.thread('t1')
    assert len(t1.instructions) == 12
    first = ext.program.instruction(ext.added[0])
    assert first.src == 't1.q0'
    assert first.cmd == Assign('__ar1__1', AddrRef('x', 0))
    closing = ext.program.instruction(ext.added[6])
    assert closing.cmd == Store(Reg('__ar1__1'), Reg('__vr1__1'))
    assert (closing.src, closing.dst) == ('t1.__x1_q2', 't1.q2')

    # t2 is untouched and every original instruction projects to itself
    assert ext.program.thread('t2') == program.thread('t2')
    for inst_id in program.instruction_map:
        assert ext.projection[inst_id] == inst_id
    assert ext.projection[ext.added[0]] == 't1.q0.q1.0'
    assert ext.projection[ext.added[6]] is None


def test_extend_dekker_matches_golden_thread():
    ext = extend(_dekker(), DEKKER_SIGMA)
    rendered = [f"{inst.src} -> {inst.dst} : {command_text(inst.cmd)}"
                for inst in ext.program.thread('t1').instructions]
    golden = (CORPUS / 'dekker_extended.golden').read_text(encoding='utf-8').splitlines()
    assert rendered == golden


def test_extend_dekker_delete_mode():
    program = _dekker()
    ext = extend(program, DEKKER_SIGMA, delete_first_store=True)
    assert len(ext.added) == 9
    assert 't1.q0.q1.0' not in ext.program.instruction_map
    assert len(ext.program.thread('t1').instructions) == 11

    # store (ar1, vr1), fence, back to dst(inst_1)
    tail = [ext.program.instruction(inst_id) for inst_id in ext.added[-2:]]
    assert tail[0].src == 't1.__x1_q1'
    assert tail[0].cmd == Store(Reg('__ar1__1'), Reg('__vr1__1'))
    assert tail[1].cmd == Mfence()
    assert tail[1].dst == 't1.q1'


def test_extension_size_bound():
    program = _dekker()
    bound = extension_size_bound(program, DEKKER_SIGMA)
    assert bound == 30
    for delete in (False, True):
        assert len(extend(program, DEKKER_SIGMA, delete_first_store=delete).added) <= bound


def test_extension_makes_goal_sc_reachable():
    program = _dekker()
    assert not reach(program, SC).reachable
    for delete in (False, True):
        ext = extend(program, DEKKER_SIGMA, delete_first_store=delete)
        assert reach(ext.program, SC).reachable
        # TSO reach of the goal is preserved
        assert reach(ext.program, TSO).reachable


def test_extend_rejects_bad_sequences():
    program = _dekker()
    with pytest.raises(ExtensionError):
        extend(program, ('t1.q1.q2.1',))
    with pytest.raises(ExtensionError):
        extend(program, ())
    with pytest.raises(ExtensionError):
        extend(program, ('t1.q0.q1.0', 't2.q1.q2.1'))


def test_lazy_dekker_two_iterations():
    program = _dekker()
    verdict = lazy_reach(program)
    assert verdict.outcome == REACHABLE
    assert verdict.iterations == 2
    assert verdict.sc_queries == 2
    assert verdict.sigmas == [DEKKER_SIGMA]
    assert set(verdict.skeleton) <= set(program.instruction_map)
    assert 't1.q2.qf.2' in verdict.skeleton
    assert 't2.q2.qf.2' in verdict.skeleton


def test_lazy_dekker_delete_mode():
    verdict = lazy_reach(_dekker(), LazyConfig(delete_first_store=True))
    assert verdict.reachable
    assert verdict.delete_first_store
    assert len(set(verdict.anchored)) == len(verdict.anchored)


def test_lazy_robust_programs_need_one_query():
    cfg = LazyConfig(static_check=False)
    for name in ('dekker_fenced', 'mp', 'stack_handoff'):
        verdict = lazy_reach(load_program(CORPUS / f'{name}.prog'), cfg)
        assert verdict.outcome == UNREACHABLE, name
        assert verdict.iterations == 1, name
        assert verdict.sc_queries == 1, name


def test_lazy_diamond_iterations():
    for n in (2, 10):
        verdict = lazy_reach(load_program(CORPUS / f'diamond{n}.prog'))
        assert verdict.reachable, n
        assert verdict.iterations <= 2, n


def test_lazy_agrees_with_tso_on_corpus():
    for name in ('peterson', 'parker', 'clh_fenced', 'mp'):
        program = load_program(CORPUS / f'{name}.prog')
        assert lazy_reach(program).reachable == reach(program, TSO).reachable, name


def test_cyclic_program_needs_unrolling():
    program = load_program(CORPUS / 'flip_loop.prog')
    with pytest.raises(UnboundedBufferError):
        lazy_reach(program)
    with pytest.raises(UnboundedBufferError):
        lazy_reach(program, LazyConfig(delete_first_store=True, oracle_bound=6))
    verdict = lazy_reach(program, LazyConfig(oracle_bound=6))
    assert verdict.outcome == UNREACHABLE
    assert verdict.static


def test_safe_loop_is_safe_up_to_k():
    program = load_program(CORPUS / 'flip_loop.prog')
    verdict = semi_decide(program, LazyConfig(unroll=tuple(range(1, 11))))
    assert verdict.outcome == SAFE_UP_TO_K
    assert verdict.bound == 10


def test_safe_loop_without_static_check():
    program = load_program(CORPUS / 'flip_loop.prog')
    for k in (2, 3):
        assert oracle(unroll(program, k)) != (), k
    verdict = semi_decide(program, LazyConfig(unroll=(1, 2, 3), static_check=False))
    assert verdict.outcome == SAFE_UP_TO_K
    assert verdict.bound == 3
    assert not any(record.sc_reachable for record in verdict.rounds)
    assert verdict.sc_queries >= 3


def test_unrolled_safe_loop_is_decided_in_every_mode():
    unrolled = unroll(load_program(CORPUS / 'flip_loop.prog'), 3)
    assert not reach(unrolled, TSO).reachable
    for cfg in (LazyConfig(static_check=False),
                LazyConfig(delete_first_store=True, static_check=False),
                LazyConfig(witnesses_per_round=1, static_check=False)):
        verdict = lazy_reach(unrolled, cfg)
        assert verdict.outcome == UNREACHABLE, cfg
        assert len(set(verdict.anchored)) == len(verdict.anchored), cfg


def test_unrolling_keeps_registers_defined_deeper_than_k():
    program = parse(LATE_REGISTER)
    assert unroll(program, 1).thread('t1').registers == ('r1',)
    for static in (True, False):
        verdict = semi_decide(program, LazyConfig(unroll=(1, 2, 3), static_check=static))
        assert verdict.outcome == REACHABLE, static
        assert verdict.bound == 2, static


def test_countdown_reachable_at_its_depth():
    for n, depth in ((3, 23), (13, 83)):
        program = load_program(CORPUS / f'countdown{n}.prog')
        verdict = semi_decide(program, LazyConfig(unroll=(depth,)))
        assert verdict.outcome == REACHABLE, n
        assert verdict.bound == depth, n
        assert 2 <= verdict.sc_queries <= 5, n
        assert set(verdict.skeleton) <= set(program.instruction_map), n


def test_acyclic_semi_decide_reports_depth():
    verdict = semi_decide(_dekker())
    assert verdict.reachable
    assert verdict.bound == 3


def test_lazy_config_validation():
    with pytest.raises(ValueError):
        LazyConfig(witnesses_per_round=0)
    with pytest.raises(ValueError):
        LazyConfig(unroll=())
    with pytest.raises(ValueError):
        LazyConfig(unroll=(0, 1))
    cfg = LazyConfig.from_settings(Settings(witnesses_per_round=2), delete_first_store=True)
    assert cfg.witnesses_per_round == 2
    assert cfg.delete_first_store
    assert cfg.oracle_bound == 24


def test_one_witness_per_round_still_decides():
    verdict = lazy_reach(_dekker(), LazyConfig(witnesses_per_round=1))
    assert verdict.reachable
    assert verdict.iterations == 2
    assert verdict.sc_queries == 2


def test_const_store_extension_keeps_constants():
    ext = extend(_dekker(), ('t2.q0.q1.0', 't2.q1.q2.1'))
    value = ext.program.instruction(ext.added[1])
    assert value.cmd == Assign('__vr1__1', Const(1))


def main():
    """Run every test in this file"""
    print("🚀 Starting lazy engine tests...\n")
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

#!/usr/bin/env python3
"""
Tests for attack enumeration, the witness search and projections
"""

import sys
from pathlib import Path

import pytest

from lazy_tso.errors import BoundExhausted, OracleContractError, ProjectionError, UnboundedBufferError
from lazy_tso.oracle import (
    SEGMENT_LABELS, ProjectionMap, check_sequence, dump_witness, enumerate_attacks, find_witness,
    iter_witnesses, oracle, project, verify_witness,
)
from lazy_tso.program_ir import unroll
from lazy_tso.program_parser import load_program

CORPUS = Path(__file__).parent / 'corpus'

ROBUST = ('dekker_fenced', 'mp', 'clh_fenced', 'stack_handoff')


def test_dekker_attacks():
    program = load_program(CORPUS / 'dekker.prog')
    assert enumerate_attacks(program) == [
        ('t1', 't1.q0.q1.0', 't1.q1.q2.1'),
        ('t2', 't2.q0.q1.0', 't2.q1.q2.1'),
    ]


def test_fence_cuts_attacks():
    program = load_program(CORPUS / 'dekker_fenced.prog')
    assert enumerate_attacks(program) == []


def test_dekker_oracle_returns_store_then_load():
    program = load_program(CORPUS / 'dekker.prog')
    sigma = oracle(program)
    assert sigma == ('t1.q0.q1.0', 't1.q1.q2.1')
    check_sequence(program, sigma)


def test_dekker_witnesses_verify():
    program = load_program(CORPUS / 'dekker.prog')
    witnesses = list(iter_witnesses(program))
    assert [w.thread for w in witnesses] == ['t1', 't2']
    for witness in witnesses:
        assert verify_witness(program, witness) == []
        assert witness.events[witness.st_index].kind == 'store'
        assert witness.events[witness.ld_index].kind == 'load'
        assert witness.events[witness.fl_index].kind == 'flush'


def test_dump_witness_labels_segments():
    witness = find_witness(load_program(CORPUS / 'dekker.prog'))
    lines = dump_witness(witness).splitlines()
    assert lines[0] == "attack t1 t1.q0.q1.0 t1.q1.q2.1"
    assert [line.split(':', 1)[0] for line in lines[1:]] == list(SEGMENT_LABELS)


def test_robust_programs_have_no_witness():
    for name in ROBUST:
        program = load_program(CORPUS / f'{name}.prog')
        assert oracle(program) == (), name
        assert find_witness(program) is None, name


def test_non_robust_corpus_has_witnesses():
    for name in ('dekker', 'peterson', 'parker', 'diamond2'):
        program = load_program(CORPUS / f'{name}.prog')
        witness = find_witness(program)
        assert witness is not None, name
        assert witness.events[witness.st_index].inst == witness.store, name
        assert verify_witness(program, witness) == [], name


def test_cyclic_search_needs_bound():
    program = load_program(CORPUS / 'flip_loop.prog')
    with pytest.raises(UnboundedBufferError):
        list(iter_witnesses(program))
    with pytest.raises(BoundExhausted):
        list(iter_witnesses(program, bound=1))
    assert oracle(program, bound=8) != ()


def test_unrolled_safe_program_is_never_robust():
    program = load_program(CORPUS / 'flip_loop.prog')
    for k in (2, 3, 4):
        assert oracle(unroll(program, k)) != (), k


def test_check_sequence_contract():
    dekker = load_program(CORPUS / 'dekker.prog')
    fenced = load_program(CORPUS / 'dekker_fenced.prog')
    with pytest.raises(OracleContractError):
        check_sequence(dekker, ())
    with pytest.raises(OracleContractError):
        check_sequence(dekker, ('t1.q1.q2.1',))
    with pytest.raises(OracleContractError):
        check_sequence(dekker, ('t1.q0.q1.0', 't2.q1.q2.1'))
    with pytest.raises(OracleContractError):
        check_sequence(fenced, ('t1.q0.q1.0', 't1.q1.q2.1', 't1.q2.q3.2'))
    with pytest.raises(OracleContractError):
        check_sequence(dekker, ('t1.q0.q1.0', 'nope'))


def test_projection_map():
    program = load_program(CORPUS / 'dekker.prog')
    first = ProjectionMap.identity(program)
    later = ProjectionMap({'a': 't1.q0.q1.0', 'glue': None, 'b': 't2.q1.q2.1'})
    composed = first.compose(later)
    assert project(composed, ['a', 'glue', 'b']) == ('t1.q0.q1.0', 't2.q1.q2.1')
    assert 'glue' in composed
    with pytest.raises(ProjectionError):
        composed['missing']


def main():
    """Run every test in this file"""
    print("🚀 Starting oracle tests...\n")
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

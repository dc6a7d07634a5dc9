#!/usr/bin/env python3
"""
Tests for the program IR, its concrete syntax and unrolling
"""

import sys
from pathlib import Path

import pytest

from lazy_tso.errors import ProgramSyntaxError, ProgramValidationError
from lazy_tso.program_ir import (
    AddrRef, BinOp, Const, Not, Reg, Store, expr_text, is_acyclic, longest_path, origin_of,
    unroll, validate,
)
from lazy_tso.program_parser import load_program, parse, print_program

CORPUS = Path(__file__).parent / 'corpus'


def test_parse_dekker_structure():
    """Dekker parses into the expected threads, states and instruction ids"""
    program = load_program(CORPUS / 'dekker.prog')
    assert program.domain.size == 2
    assert program.addresses == ('x', 'y')
    assert [t.name for t in program.threads] == ['t1', 't2']

    t1 = program.thread('t1')
    assert t1.init == 't1.q0'
    assert t1.states == ('t1.q0', 't1.q1', 't1.q2', 't1.qf')
    assert t1.registers == ('r1',)
    assert [inst.id for inst in t1.instructions] == ['t1.q0.q1.0', 't1.q1.q2.1', 't1.q2.qf.2']
    assert program.instruction('t1.q0.q1.0').cmd == Store(AddrRef('x', 0), Const(1))
    assert program.goal.pcs == (('t1', ('t1.qf',)), ('t2', ('t2.qf',)))
    assert validate(program) == []


def test_print_parse_round_trip_on_corpus():
    """Printing then parsing gives back the same program for every corpus entry"""
    paths = sorted(CORPUS.glob('*.prog'))
    assert paths
    for path in paths:
        program = load_program(path)
        assert parse(print_program(program)) == program, path.name


def test_round_trip_keeps_origins_and_goal_sets():
    program = unroll(load_program(CORPUS / 'flip_loop.prog'), 3)
    text = print_program(program)
    assert 'origin=' in text
    assert parse(text) == program


def test_expression_precedence():
    program = parse(
        "domain 4;\n"
        "addresses x;\n"
        "thread t1 {\n"
        "  init q0;\n"
        "  q0 -> q1 : load r1 <- x;\n"
        "  q1 -> q2 : assume r1 + 1 * 2 == 3 || !r1;\n"
        "}\n"
    )
    expected = BinOp('||',
                     BinOp('==', BinOp('+', Reg('r1'), BinOp('*', Const(1), Const(2))), Const(3)),
                     Not(Reg('r1')))
    assert program.instruction('t1.q1.q2.1').cmd.expr == expected


def test_expr_text_minimal_parentheses():
    assert expr_text(BinOp('-', Const(1), BinOp('-', Reg('a'), Reg('b')))) == "1 - (a - b)"
    assert expr_text(BinOp('-', BinOp('-', Reg('a'), Reg('b')), Const(1))) == "a - b - 1"
    assert expr_text(BinOp('*', BinOp('+', Reg('a'), Const(1)), Const(2))) == "(a + 1) * 2"
    assert expr_text(Not(BinOp('==', Reg('a'), Const(1)))) == "!(a == 1)"


def test_goal_state_sets_and_values():
    program = parse(
        "domain 2;\n"
        "thread t1 { init q0; q0 -> q1 : store x <- 1; q0 -> q2 : mfence; }\n"
        "goal { t1 @ {q1, q2}; where x == 1; }\n"
    )
    assert program.goal.pcs == (('t1', ('t1.q1', 't1.q2')),)
    assert program.goal.values == (('x', 1),)
    assert program.addresses == ('x',)


def test_constant_outside_domain_is_rejected():
    with pytest.raises(ProgramValidationError) as info:
        parse("domain 2;\nthread t1 { init q0; q0 -> q1 : store x <- 5; }\n")
    assert 'constant-range' in {d.code for d in info.value.diagnostics}


def test_cross_thread_register_is_rejected():
    with pytest.raises(ProgramValidationError) as info:
        parse(
            "domain 2;\n"
            "thread t1 { init q0; q0 -> q1 : load r1 <- x; }\n"
            "thread t2 { init q0; q0 -> q1 : store x <- r1; }\n"
        )
    assert [d.code for d in info.value.diagnostics] == ['cross-thread-register']


def test_goal_naming_unknown_thread_is_rejected():
    with pytest.raises(ProgramValidationError) as info:
        parse("domain 2;\nthread t1 { init q0; q0 -> q1 : mfence; }\ngoal { t9 @ q1; }\n")
    assert 'goal-thread' in {d.code for d in info.value.diagnostics}


def test_too_many_addresses_for_domain():
    with pytest.raises(ProgramValidationError) as info:
        parse("domain 2;\naddresses a, b, c;\nthread t1 { init q0; q0 -> q1 : mfence; }\n")
    assert 'address-range' in {d.code for d in info.value.diagnostics}


def test_syntax_error_reports_position():
    with pytest.raises(ProgramSyntaxError) as info:
        parse("domain 2;\nthread t1 {\n  init q0;\n  q0 -> q1 mfence;\n}\n")
    assert info.value.line == 4
    assert info.value.column == 12


def test_duplicate_thread_is_a_syntax_error():
    with pytest.raises(ProgramSyntaxError):
        parse("domain 2;\nthread t1 { init q0; }\nthread t1 { init q0; }\n")


def test_unroll_cyclic_program():
    program = load_program(CORPUS / 'flip_loop.prog')
    assert not is_acyclic(program)

    unrolled = unroll(program, 3)
    assert is_acyclic(unrolled)
    assert validate(unrolled) == []
    t1 = unrolled.thread('t1')
    assert longest_path(t1) == 3
    # three instructions leave q0 at each of the three levels
    assert len(t1.instructions) == 9
    assert unrolled.goal.pc_constraint('t1') == ('t1.qf__u1', 't1.qf__u2', 't1.qf__u3')
    for inst in unrolled.instruction_map.values():
        assert origin_of(unrolled, inst.id) in program.instruction_map


def test_unroll_needs_positive_bound():
    with pytest.raises(ValueError):
        unroll(load_program(CORPUS / 'flip_loop.prog'), 0)


def test_origin_of_source_instruction_is_itself():
    program = load_program(CORPUS / 'dekker.prog')
    assert origin_of(program, 't2.q1.q2.1') == 't2.q1.q2.1'


def main():
    """Run every test in this file"""
    print("🚀 Starting program IR tests...\n")
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

#!/usr/bin/env python3
"""
Tests for happens-before graphs of TSO computations
"""

import sys
from collections import defaultdict
from pathlib import Path

import pytest

from lazy_tso.errors import HbError
from lazy_tso.generators import RandomShape, random_programs
from lazy_tso.hb import build_hb, export_edges, hb_equal, hb_key, hb_reaches
from lazy_tso.program_parser import load_program, parse
from lazy_tso.semantics import TSO, Event, enumerate_computations, replay

CORPUS = Path(__file__).parent / 'corpus'

X, Y = 0, 1

# t1 delays its store to x past its load of y; t2 runs in between
DEKKER_WITNESS = [
    Event('t1', 0, 't1.q0.q1.0', 'store', X),
    Event('t1', 1, 't1.q1.q2.1', 'load', Y),
    Event('t2', 0, 't2.q0.q1.0', 'store', Y),
    Event('t2', 0, 't2.q0.q1.0', 'flush', Y),
    Event('t2', 1, 't2.q1.q2.1', 'load', X),
    Event('t1', 0, 't1.q0.q1.0', 'flush', X),
]


def test_dekker_witness_has_six_edges():
    program = load_program(CORPUS / 'dekker.prog')
    computation = replay(program, DEKKER_WITNESS, TSO)
    graph = build_hb(computation)
    assert graph.edges() == [
        ('cf', 1, 3),
        ('cf', 4, 5),
        ('eq', 0, 5),
        ('eq', 2, 3),
        ('po', 0, 1),
        ('po', 2, 4),
    ]
    assert graph.edge_count == 6


def test_hb_cycle_in_dekker_witness():
    graph = build_hb(DEKKER_WITNESS)
    # load y -> flush y ~ store y -> load x -> flush x ~ store x -> load y
    assert hb_reaches(graph, 1, 1)
    assert hb_reaches(graph, 4, 1)


def test_early_read_edge():
    program = parse(
        "domain 2;\naddresses x;\n"
        "thread t1 { init q0; q0 -> q1 : store x <- 1; q1 -> q2 : load r1 <- x; }\n"
    )
    events = [
        Event('t1', 0, 't1.q0.q1.0', 'store', X),
        Event('t1', 1, 't1.q1.q2.1', 'load', X),
        Event('t1', 0, 't1.q0.q1.0', 'flush', X),
    ]
    replay(program, events, TSO)
    graph = build_hb(events)
    assert graph.cf == frozenset({(0, 1)})
    # an early read is not ordered before the flush of its own store
    assert (1, 2) not in graph.cf


def test_flush_without_store_is_rejected():
    with pytest.raises(HbError):
        build_hb([Event('t1', 0, 't1.q0.q1.0', 'flush', X)])


def test_export_edges_lists_each_edge_once():
    text = export_edges(build_hb(DEKKER_WITNESS))
    lines = text.splitlines()
    assert len(lines) == 6
    assert sum(line.startswith('eq ') for line in lines) == 2


def test_hb_equal_ignores_commuting_events():
    swapped = list(DEKKER_WITNESS)
    # t1's load of y and t2's store of y touch different threads' state and commute
    swapped[1], swapped[2] = swapped[2], swapped[1]
    assert hb_equal(DEKKER_WITNESS, swapped)

    reordered = [DEKKER_WITNESS[i] for i in (0, 5, 1, 2, 3, 4)]
    assert not hb_equal(DEKKER_WITNESS, reordered)


def test_same_hb_same_reached_state():
    """Computations with equal hb relations end in the same state"""
    checked = 0
    shape = RandomShape(max_instructions=6)
    for case, text, program in random_programs(40, seed=7, shape=shape):
        groups = defaultdict(set)
        for computation in enumerate_computations(program):
            state = computation.reached
            groups[hb_key(build_hb(computation))].add((state.pc, state.val))
        for key, reached in groups.items():
            assert len(reached) == 1, f"case {case}:\n{text}"
        checked += 1
    assert checked == 40


def main():
    """Run every test in this file"""
    print("🚀 Starting happens-before tests...\n")
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

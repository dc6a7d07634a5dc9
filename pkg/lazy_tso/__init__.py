"""
Lazy TSO - Package
Decides goal reachability of finite-data parallel programs under TSO
"""

from lazy_tso.hb import build_hb, hb_equal
from lazy_tso.lazy_engine import LazyConfig, extend, lazy_reach, semi_decide
from lazy_tso.oracle import enumerate_attacks, find_witness, oracle, project
from lazy_tso.program_ir import is_acyclic, unroll, validate
from lazy_tso.program_parser import parse, print_program
from lazy_tso.semantics import SC, TSO, reach, step_sc, step_tso

__all__ = [
    'SC', 'TSO',
    'parse', 'print_program', 'validate', 'is_acyclic', 'unroll',
    'step_tso', 'step_sc', 'reach',
    'build_hb', 'hb_equal',
    'enumerate_attacks', 'find_witness', 'oracle', 'project',
    'extend', 'lazy_reach', 'semi_decide', 'LazyConfig',
]

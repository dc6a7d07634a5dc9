"""
Lazy TSO - Value Sets
Flow-insensitive value-set analysis used to discharge goals before any search
"""

import logging
from itertools import product
from typing import Dict, List, Set

from lazy_tso.program_ir import (Assign, Assume, Expr, Load, Program, Store, expr_registers)
from lazy_tso.semantics import eval_expr

logger = logging.getLogger(__name__)

COMBINATION_CAP = 4096


class ValueSetAnalysis:
    """
    VALUE-SET ANALYSIS
    - One value set per memory cell and per register, all starting at {0}
    - Control states become reachable once an instruction into them is feasible
    - Sound for SC and TSO alike: buffered values are stored values
    """

    def __init__(self, program: Program, combination_cap: int = COMBINATION_CAP):
        self.program = program
        self.size = program.domain.size
        self.combination_cap = combination_cap
        self.memory: List[Set[int]] = [{0} for _ in range(self.size)]
        self.registers: Dict[str, Set[int]] = {
            reg: {0} for thread in program.threads for reg in thread.registers
        }
        self.reached: Dict[str, Set[str]] = {t.name: {t.init} for t in program.threads}
        self.rounds = 0

    def values(self, expr: Expr) -> Set[int]:
        names = expr_registers(expr)
        choices = [sorted(self.registers[name]) for name in names]
        combinations = 1
        for choice in choices:
            combinations *= len(choice)
        if combinations > self.combination_cap:
            return set(range(self.size))
        return {eval_expr(dict(zip(names, combo)), expr, self.size) for combo in product(*choices)}

    def _grow(self, target: Set[int], new: Set[int]) -> bool:
        if new <= target:
            return False
        target |= new
        return True

    def run(self) -> "ValueSetAnalysis":
        changed = True
        while changed:
            changed = False
            self.rounds += 1
            for thread in self.program.threads:
                reached = self.reached[thread.name]
                for inst in thread.instructions:
                    if inst.src not in reached:
                        continue
                    cmd = inst.cmd
                    enabled = True
                    if isinstance(cmd, Load):
                        loaded: Set[int] = set()
                        for addr in self.values(cmd.addr):
                            loaded |= self.memory[addr]
                        changed |= self._grow(self.registers[cmd.reg], loaded)
                    elif isinstance(cmd, Store):
                        stored = self.values(cmd.value)
                        for addr in self.values(cmd.addr):
                            changed |= self._grow(self.memory[addr], stored)
                    elif isinstance(cmd, Assign):
                        changed |= self._grow(self.registers[cmd.reg], self.values(cmd.expr))
                    elif isinstance(cmd, Assume):
                        enabled = any(v != 0 for v in self.values(cmd.expr))
                    if enabled and inst.dst not in reached:
                        reached.add(inst.dst)
                        changed = True
        return self

    def goal_feasible(self) -> bool:
        goal = self.program.goal
        for name, states in goal.pcs:
            if not self.reached[name] & set(states):
                return False
        for symbol, value in goal.values:
            if symbol in self.registers:
                if value not in self.registers[symbol]:
                    return False
            elif value not in self.memory[self.program.address_values[symbol]]:
                return False
        return True


def goal_provably_unreachable(program: Program) -> bool:
    """True when value sets alone rule out every goal state (SC and TSO)"""
    analysis = ValueSetAnalysis(program).run()
    unreachable = not analysis.goal_feasible()
    if unreachable:
        logger.info(f"✅ Value-set analysis discharged the goal after {analysis.rounds} rounds")
    return unreachable

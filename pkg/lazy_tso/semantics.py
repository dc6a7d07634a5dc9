"""
Lazy TSO - Semantics
Small-step TSO and SC semantics over compiled programs, plus the
breadth-first reachability explorer
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import (Callable, Dict, FrozenSet, Iterator, List, Mapping, NamedTuple,
                    Optional, Sequence, Set, Tuple, Union)

from lazy_tso.errors import BudgetExhausted, ReplayError, UnboundedBufferError
from lazy_tso.program_ir import (
    AddrRef, Assign, Assume, BinOp, Const, Expr, Load, Mfence, Not, Program, Reg, Store,
    command_defs, command_uses, is_acyclic,
)

logger = logging.getLogger(__name__)

SC = 'sc'
TSO = 'tso'

# Successor rule order within one thread
RULE_ORDER = ('load', 'store', 'flush', 'fence', 'assign', 'assume')


# ---------------------------------------------------------------------------
# Expression evaluation
# ---------------------------------------------------------------------------

def _apply(op: str, a: int, b: int, size: int) -> int:
    if op == '+':
        return (a + b) % size
    if op == '-':
        return (a - b) % size
    if op == '*':
        return (a * b) % size
    if op == '==':
        return int(a == b)
    if op == '!=':
        return int(a != b)
    if op == '<':
        return int(a < b)
    if op == '&&':
        return int(a != 0 and b != 0)
    if op == '||':
        return int(a != 0 or b != 0)
    raise ValueError(f"unknown operator {op}")


def eval_expr(val: Mapping[str, int], expr: Expr, size: int) -> int:
    """
    Evaluate an expression under a valuation

    Args:
        val: register (and address) values by name
        expr: expression tree
        size: domain size; arithmetic wraps modulo it

    Returns:
        int: value in 0..size-1
    """
    if isinstance(expr, Const):
        return expr.value % size
    if isinstance(expr, Reg):
        return val[expr.name]
    if isinstance(expr, AddrRef):
        return expr.value
    if isinstance(expr, Not):
        return int(eval_expr(val, expr.operand, size) == 0)
    return _apply(expr.op, eval_expr(val, expr.left, size), eval_expr(val, expr.right, size), size)


def _compile_expr(expr: Expr, slots: Dict[str, int], size: int) -> Callable[[tuple], int]:
    if isinstance(expr, Const):
        value = expr.value % size
        return lambda v: value
    if isinstance(expr, AddrRef):
        value = expr.value
        return lambda v: value
    if isinstance(expr, Reg):
        slot = slots[expr.name]
        return lambda v: v[slot]
    if isinstance(expr, Not):
        inner = _compile_expr(expr.operand, slots, size)
        return lambda v: 0 if inner(v) else 1
    left = _compile_expr(expr.left, slots, size)
    right = _compile_expr(expr.right, slots, size)
    op = expr.op
    return lambda v: _apply(op, left(v), right(v), size)


# ---------------------------------------------------------------------------
# States, events, computations
# ---------------------------------------------------------------------------

class Event(NamedTuple):
    """One event: flushes carry the id and instruction of their store"""
    thread: str
    eid: int
    inst: str
    kind: str
    addr: Optional[int] = None

    @property
    def is_flush(self) -> bool:
        return self.kind == 'flush'

    @property
    def identity(self) -> Tuple[str, int, str, str]:
        return (self.thread, self.eid, self.inst, self.kind)

    def __str__(self) -> str:
        where = "" if self.addr is None else f"@{self.addr}"
        return f"{self.thread}#{self.eid}:{self.kind}{where}[{self.inst}]"


class MachineState(NamedTuple):
    """
    (pc, val, buf) plus event counters
    - pc: control-state index per thread
    - val: memory cells 0..D-1 followed by every register
    - buf: per thread, newest entry first; entries are (eid, addr, value, inst)
    - ec: next event id per thread
    """
    pc: Tuple[int, ...]
    val: Tuple[int, ...]
    buf: Tuple[tuple, ...]
    ec: Tuple[int, ...]

    @property
    def buffers_empty(self) -> bool:
        return not any(self.buf)


@dataclass(frozen=True)
class Computation:
    events: Tuple[Event, ...]
    reached: MachineState

    def __len__(self) -> int:
        return len(self.events)

    def text(self) -> str:
        return " ".join(str(e) for e in self.events)


@dataclass(frozen=True)
class Verdict:
    reachable: bool
    trace: Optional[Computation]
    states_explored: int
    mode: str
    por: bool = False


# ---------------------------------------------------------------------------
# Compiled program
# ---------------------------------------------------------------------------

class _Op(NamedTuple):
    kind: str
    inst: str
    dst: int
    first: Optional[Callable[[tuple], int]]
    second: Optional[Callable[[tuple], int]]
    slot: int


class CompiledProgram:
    """
    COMPILED PROGRAM
    - Integer control states, one flat valuation tuple, closures for expressions
    - Per (thread, state): operations in canonical rule order
    - Liveness tables for dead-register canonicalisation of visited keys
    """

    def __init__(self, program: Program, buffer_bound: Optional[int] = None):
        self.program = program
        self.size = program.domain.size
        self.buffer_bound = buffer_bound
        self.thread_names = [t.name for t in program.threads]
        self.acyclic = is_acyclic(program)

        self.slot_names: List[str] = [
            program.addresses[i] if i < len(program.addresses) else f"[{i}]"
            for i in range(self.size)
        ]
        self.slots: Dict[str, int] = {}
        for thread in program.threads:
            for reg in thread.registers:
                self.slots[reg] = len(self.slot_names)
                self.slot_names.append(reg)
        self.symbol_slots: Dict[str, int] = {name: i for i, name in enumerate(self.slot_names)}

        self.state_names: List[List[str]] = []
        self.state_index: List[Dict[str, int]] = []
        self.ops: List[List[Tuple[_Op, ...]]] = []
        for thread in program.threads:
            names = list(thread.states)
            index = {name: i for i, name in enumerate(names)}
            table = []
            for name in names:
                ops = [self._compile_op(inst, index) for inst in thread.outgoing.get(name, ())]
                ops.sort(key=lambda op: RULE_ORDER.index(op.kind))
                table.append(tuple(ops))
            self.state_names.append(names)
            self.state_index.append(index)
            self.ops.append(table)

        self._compile_goal()
        self._compile_liveness()
        self._compile_por()

    def _compile_op(self, inst, index: Dict[str, int]) -> _Op:
        cmd = inst.cmd
        dst = index[inst.dst]
        compile_ = lambda e: _compile_expr(e, self.slots, self.size)
        if isinstance(cmd, Load):
            return _Op('load', inst.id, dst, compile_(cmd.addr), None, self.slots[cmd.reg])
        if isinstance(cmd, Store):
            return _Op('store', inst.id, dst, compile_(cmd.addr), compile_(cmd.value), -1)
        if isinstance(cmd, Mfence):
            return _Op('fence', inst.id, dst, None, None, -1)
        if isinstance(cmd, Assign):
            return _Op('assign', inst.id, dst, compile_(cmd.expr), None, self.slots[cmd.reg])
        return _Op('assume', inst.id, dst, compile_(cmd.expr), None, -1)

    def _compile_goal(self) -> None:
        goal = self.program.goal
        self.goal_pcs: List[Optional[FrozenSet[int]]] = []
        for ti, name in enumerate(self.thread_names):
            states = goal.pc_constraint(name)
            if states is None:
                self.goal_pcs.append(None)
            else:
                self.goal_pcs.append(frozenset(self.state_index[ti][s] for s in states
                                               if s in self.state_index[ti]))
        self.goal_values = tuple((self.symbol_slots[sym], value) for sym, value in goal.values)
        self.goal_slots = frozenset(slot for slot, _ in self.goal_values)

    def _compile_liveness(self) -> None:
        # dead[ti][pc]: register slots that no path from pc reads before writing
        self.dead: List[List[Tuple[int, ...]]] = []
        for ti, thread in enumerate(self.program.threads):
            live: Dict[str, Set[str]] = {state: set() for state in thread.states}
            changed = True
            while changed:
                changed = False
                for inst in thread.instructions:
                    flowing = set(command_uses(inst.cmd)) | (live[inst.dst] - set(command_defs(inst.cmd)))
                    if not flowing <= live[inst.src]:
                        live[inst.src] |= flowing
                        changed = True
            regs = [self.slots[r] for r in thread.registers]
            table = []
            for state in self.state_names[ti]:
                keep = {self.slots[r] for r in live[state]} | self.goal_slots
                table.append(tuple(slot for slot in regs if slot not in keep))
            self.dead.append(table)

    def _compile_por(self) -> None:
        # por_ok[ti][pc]: every operation out of pc is a goal-invisible register-local step
        self.por_ok: List[List[bool]] = []
        for ti in range(len(self.thread_names)):
            goal_states = self.goal_pcs[ti]
            row = []
            for pc, ops in enumerate(self.ops[ti]):
                ok = bool(ops) and all(op.kind in ('assign', 'assume') for op in ops)
                if ok and goal_states is not None:
                    ok = pc not in goal_states and all(op.dst not in goal_states for op in ops)
                if ok:
                    ok = all(op.slot not in self.goal_slots for op in ops if op.kind == 'assign')
                row.append(ok)
            self.por_ok.append(row)

    # -- states ---------------------------------------------------------------

    def initial_state(self) -> MachineState:
        n = len(self.thread_names)
        init = tuple(self.state_index[ti][t.init] for ti, t in enumerate(self.program.threads))
        return MachineState(pc=init, val=(0,) * len(self.slot_names), buf=((),) * n, ec=(0,) * n)

    def is_goal(self, state: MachineState) -> bool:
        if any(state.buf):
            return False
        for ti, allowed in enumerate(self.goal_pcs):
            if allowed is not None and state.pc[ti] not in allowed:
                return False
        val = state.val
        return all(val[slot] == value for slot, value in self.goal_values)

    def key(self, state: MachineState) -> tuple:
        """Visited-set key: event ids dropped, dead registers zeroed"""
        val = state.val
        zero = [slot for ti, pc in enumerate(state.pc) for slot in self.dead[ti][pc]]
        if zero:
            cells = list(val)
            for slot in zero:
                cells[slot] = 0
            val = tuple(cells)
        return (state.pc, val, self._buffer_key(state))

    def exact_key(self, state: MachineState) -> tuple:
        return (state.pc, state.val, self._buffer_key(state))

    @staticmethod
    def _buffer_key(state: MachineState) -> tuple:
        if not any(state.buf):
            return ()
        return tuple(tuple((entry[1], entry[2]) for entry in buf) for buf in state.buf)

    def pc_names(self, state: MachineState) -> Tuple[str, ...]:
        return tuple(self.state_names[ti][pc] for ti, pc in enumerate(state.pc))

    def value(self, state: MachineState, symbol: str) -> int:
        return state.val[self.symbol_slots[symbol]]

    # -- transitions ----------------------------------------------------------

    def thread_steps(self, state: MachineState, ti: int, mode: str) -> List[Tuple[Tuple[Event, ...], MachineState]]:
        """Successors contributed by one thread, in rule order"""
        name = self.thread_names[ti]
        pc, val, bufs, ecs = state
        buf = bufs[ti]
        ec = ecs[ti]
        out: List[Tuple[Tuple[Event, ...], MachineState]] = []
        flushed = False

        for op in self.ops[ti][pc[ti]]:
            if mode == TSO and not flushed and RULE_ORDER.index(op.kind) > 2:
                flushed = True
                out.extend(self._flush(state, ti))
            kind = op.kind
            new_pc = pc[:ti] + (op.dst,) + pc[ti + 1:]
            new_ec = ecs[:ti] + (ec + 1,) + ecs[ti + 1:]
            if kind == 'load':
                addr = op.first(val)
                value = None
                for entry in buf:
                    if entry[1] == addr:
                        value = entry[2]
                        break
                if value is None:
                    value = val[addr]
                new_val = val[:op.slot] + (value,) + val[op.slot + 1:]
                event = Event(name, ec, op.inst, 'load', addr)
                out.append(((event,), MachineState(new_pc, new_val, bufs, new_ec)))
            elif kind == 'store':
                addr = op.first(val)
                value = op.second(val)
                event = Event(name, ec, op.inst, 'store', addr)
                if mode == SC:
                    new_val = val[:addr] + (value,) + val[addr + 1:]
                    flush = Event(name, ec, op.inst, 'flush', addr)
                    out.append(((event, flush), MachineState(new_pc, new_val, bufs, new_ec)))
                else:
                    if self.buffer_bound is not None and len(buf) >= self.buffer_bound:
                        continue
                    new_buf = ((ec, addr, value, op.inst),) + buf
                    new_bufs = bufs[:ti] + (new_buf,) + bufs[ti + 1:]
                    out.append(((event,), MachineState(new_pc, val, new_bufs, new_ec)))
            elif kind == 'fence':
                if buf:
                    continue
                event = Event(name, ec, op.inst, 'fence')
                out.append(((event,), MachineState(new_pc, val, bufs, new_ec)))
            elif kind == 'assign':
                value = op.first(val)
                new_val = val[:op.slot] + (value,) + val[op.slot + 1:]
                event = Event(name, ec, op.inst, 'assign')
                out.append(((event,), MachineState(new_pc, new_val, bufs, new_ec)))
            else:
                if op.first(val) == 0:
                    continue
                event = Event(name, ec, op.inst, 'assume')
                out.append(((event,), MachineState(new_pc, val, bufs, new_ec)))

        if mode == TSO and not flushed:
            out.extend(self._flush(state, ti))
        return out

    def _flush(self, state: MachineState, ti: int) -> List[Tuple[Tuple[Event, ...], MachineState]]:
        buf = state.buf[ti]
        if not buf:
            return []
        eid, addr, value, inst = buf[-1]
        new_val = state.val[:addr] + (value,) + state.val[addr + 1:]
        new_bufs = state.buf[:ti] + (buf[:-1],) + state.buf[ti + 1:]
        event = Event(self.thread_names[ti], eid, inst, 'flush', addr)
        return [((event,), MachineState(state.pc, new_val, new_bufs, state.ec))]

    def steps(self, state: MachineState, mode: str) -> List[Tuple[Tuple[Event, ...], MachineState]]:
        out = []
        for ti in range(len(self.thread_names)):
            out.extend(self.thread_steps(state, ti, mode))
        return out

    def ample_steps(self, state: MachineState, mode: str):
        """Successors of the first thread whose enabled steps form an ample set, else None"""
        for ti, pc in enumerate(state.pc):
            if self.por_ok[ti][pc]:
                steps = self.thread_steps(state, ti, mode)
                # a TSO flush of the same thread is independent but not part of the ample set
                steps = [s for s in steps if not s[0][0].is_flush]
                if steps:
                    return steps
        return None


def compile_program(program: Union[Program, CompiledProgram],
                    buffer_bound: Optional[int] = None) -> CompiledProgram:
    if isinstance(program, CompiledProgram):
        return program
    return CompiledProgram(program, buffer_bound)


def step_tso(program: Union[Program, CompiledProgram], state: MachineState) -> List[Tuple[Event, MachineState]]:
    """
    TSO successors of a state in canonical order

    Args:
        program: program or its compiled form
        state: source state

    Returns:
        List[Tuple[Event, MachineState]]: empty when the state is stuck
    """
    compiled = compile_program(program)
    return [(events[0], succ) for events, succ in compiled.steps(state, TSO)]


def step_sc(program: Union[Program, CompiledProgram], state: MachineState) -> List[Tuple[Tuple[Event, ...], MachineState]]:
    """SC successors; a store yields its store and flush events together"""
    compiled = compile_program(program)
    return compiled.steps(state, SC)


def initial_state(program: Union[Program, CompiledProgram]) -> MachineState:
    return compile_program(program).initial_state()


# ---------------------------------------------------------------------------
# Exploration
# ---------------------------------------------------------------------------

def _require_bound(compiled: CompiledProgram, mode: str) -> None:
    if mode == TSO and not compiled.acyclic and compiled.buffer_bound is None:
        raise UnboundedBufferError(
            "direct TSO exploration of a cyclic program needs a buffer bound")


def reach(program: Union[Program, CompiledProgram], mode: str = SC, limit: Optional[int] = None,
          buffer_bound: Optional[int] = None, por: bool = False, verify: bool = False) -> Verdict:
    """
    Breadth-first search for a goal state with empty buffers

    Args:
        program: program (or compiled program) with its goal
        mode: SC or TSO
        limit: optional budget on distinct visited states
        buffer_bound: cap on buffer length (required for TSO on cyclic programs)
        por: enable the ample-set reduction
        verify: replay the trace found and check it ends in the goal

    Returns:
        Verdict: minimal-length trace when reachable (without POR)

    Raises:
        BudgetExhausted: the budget ran out before a decision
        UnboundedBufferError: TSO on a cyclic program without a buffer bound
    """
    compiled = compile_program(program, buffer_bound)
    _require_bound(compiled, mode)

    init = compiled.initial_state()
    init_key = compiled.key(init)
    parents: Dict[tuple, Optional[Tuple[tuple, Tuple[Event, ...]]]] = {init_key: None}
    queue = deque([(init_key, init)])
    logger.debug(f"🔍 Exploring {mode.upper()} ({len(compiled.thread_names)} threads, por={por})")

    while queue:
        key, state = queue.popleft()
        if compiled.is_goal(state):
            events: List[Event] = []
            cursor = key
            while parents[cursor] is not None:
                cursor, step = parents[cursor]
                events[:0] = step
            trace = Computation(tuple(events), state)
            if verify:
                replayed = replay(compiled, trace.events, mode)
                assert compiled.is_goal(replayed.reached), "replayed trace misses the goal"
            logger.info(f"✅ {mode.upper()} goal reachable: {len(parents)} states, trace of {len(events)} events")
            return Verdict(True, trace, len(parents), mode, por)

        successors = None
        if por:
            successors = compiled.ample_steps(state, mode)
            if successors is not None and any(compiled.key(succ) in parents for _, succ in successors):
                successors = None
        if successors is None:
            successors = compiled.steps(state, mode)

        for step, succ in successors:
            succ_key = compiled.key(succ)
            if succ_key in parents:
                continue
            parents[succ_key] = (key, step)
            if limit is not None and len(parents) > limit:
                raise BudgetExhausted(len(parents), limit)
            queue.append((succ_key, succ))

    logger.info(f"📊 {mode.upper()} goal unreachable: {len(parents)} states explored")
    return Verdict(False, None, len(parents), mode, por)


def replay(program: Union[Program, CompiledProgram], events: Sequence[Event], mode: str = TSO,
           buffer_bound: Optional[int] = None) -> Computation:
    """
    Re-execute an event sequence from the initial state

    Args:
        program: program the events belong to
        events: event list (in SC mode each store is followed by its flush)
        mode: SC or TSO

    Returns:
        Computation: the events with the state they reach

    Raises:
        ReplayError: some event is not enabled where it occurs
    """
    compiled = compile_program(program, buffer_bound)
    state = compiled.initial_state()
    i = 0
    while i < len(events):
        event = events[i]
        ti = compiled.thread_names.index(event.thread) if event.thread in compiled.thread_names else -1
        if ti < 0:
            raise ReplayError(f"event {event} names unknown thread")
        for step, succ in compiled.thread_steps(state, ti, mode):
            if step[0].identity == event.identity:
                if tuple(events[i:i + len(step)]) != step:
                    raise ReplayError(f"event {event} at position {i} does not match {step}")
                state = succ
                i += len(step)
                break
        else:
            raise ReplayError(f"event {event} at position {i} is not enabled")
    return Computation(tuple(events), state)


def enumerate_computations(program: Union[Program, CompiledProgram], limit: Optional[int] = None,
                           buffer_bound: Optional[int] = None) -> Iterator[Computation]:
    """
    Every TSO computation of a small program that ends with empty buffers

    Args:
        program: acyclic (or buffer-bounded) program
        limit: stop after this many computations

    Yields:
        Computation: in depth-first canonical order, the empty one first
    """
    compiled = compile_program(program, buffer_bound)
    _require_bound(compiled, TSO)
    if not compiled.acyclic:
        raise UnboundedBufferError("computation enumeration needs an acyclic program")

    produced = 0
    stack: List[Tuple[Tuple[Event, ...], MachineState]] = [((), compiled.initial_state())]
    while stack:
        events, state = stack.pop()
        if state.buffers_empty:
            yield Computation(events, state)
            produced += 1
            if limit is not None and produced >= limit:
                return
        for step, succ in reversed(compiled.steps(state, TSO)):
            stack.append((events + step, succ))


def reachable_states(program: Union[Program, CompiledProgram], mode: str = TSO,
                     symbols: Optional[Sequence[str]] = None,
                     states: Optional[Set[str]] = None,
                     buffer_bound: Optional[int] = None) -> Set[Tuple[Tuple[str, ...], Tuple[int, ...]]]:
    """
    Exhaustive reach set: (pc, projected valuation) of every reachable empty-buffer state

    Args:
        program: program to explore (no reductions applied)
        mode: SC or TSO
        symbols: registers/addresses to keep, defaults to every memory cell and register
        states: when given, only states whose every pc lies in this set are kept

    Returns:
        Set of (qualified pc names, values in `symbols` order)
    """
    compiled = compile_program(program, buffer_bound)
    _require_bound(compiled, mode)
    names = list(symbols) if symbols is not None else list(compiled.slot_names)
    slots = [compiled.symbol_slots[name] for name in names]

    init = compiled.initial_state()
    seen = {compiled.exact_key(init)}
    queue = deque([init])
    found: Set[Tuple[Tuple[str, ...], Tuple[int, ...]]] = set()
    while queue:
        state = queue.popleft()
        if state.buffers_empty:
            pcs = compiled.pc_names(state)
            if states is None or all(pc in states for pc in pcs):
                found.add((pcs, tuple(state.val[slot] for slot in slots)))
        for _, succ in compiled.steps(state, mode):
            succ_key = compiled.exact_key(succ)
            if succ_key not in seen:
                seen.add(succ_key)
                queue.append(succ)
    logger.debug(f"📊 {mode.upper()} reach set: {len(found)} states ({len(seen)} explored)")
    return found

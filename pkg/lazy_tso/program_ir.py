"""
Lazy TSO - Program IR
Automata-based parallel programs: expressions, commands, threads and goals,
plus validation, acyclicity and bounded unrolling
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import ClassVar, Dict, Iterable, List, Optional, Set, Tuple, Union

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Domain and expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainConfig:
    """Finite value domain 0..size-1, shared by values and addresses"""
    size: int

    def contains(self, value: int) -> bool:
        return 0 <= value < self.size


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Reg:
    name: str


@dataclass(frozen=True)
class AddrRef:
    """Named address; evaluates to the value bound to the name"""
    name: str
    value: int


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


Expr = Union[Const, Reg, AddrRef, BinOp, Not]

# Binding strength, loosest first
PRECEDENCE: Dict[str, int] = {
    '||': 1,
    '&&': 2,
    '==': 3, '!=': 3,
    '<': 4,
    '+': 5, '-': 5,
    '*': 6,
}
BINARY_OPS = tuple(PRECEDENCE)
UNARY_PRECEDENCE = 7


def expr_registers(expr: Expr) -> Tuple[str, ...]:
    """Registers read by an expression, in first-occurrence order"""
    found: List[str] = []

    def walk(e: Expr) -> None:
        if isinstance(e, Reg):
            if e.name not in found:
                found.append(e.name)
        elif isinstance(e, BinOp):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, Not):
            walk(e.operand)

    walk(expr)
    return tuple(found)


def expr_constants(expr: Expr) -> Tuple[int, ...]:
    if isinstance(expr, Const):
        return (expr.value,)
    if isinstance(expr, BinOp):
        return expr_constants(expr.left) + expr_constants(expr.right)
    if isinstance(expr, Not):
        return expr_constants(expr.operand)
    return ()


def expr_addresses(expr: Expr) -> Tuple[AddrRef, ...]:
    if isinstance(expr, AddrRef):
        return (expr,)
    if isinstance(expr, BinOp):
        return expr_addresses(expr.left) + expr_addresses(expr.right)
    if isinstance(expr, Not):
        return expr_addresses(expr.operand)
    return ()


def _precedence(expr: Expr) -> int:
    if isinstance(expr, BinOp):
        return PRECEDENCE[expr.op]
    if isinstance(expr, Not):
        return UNARY_PRECEDENCE
    return UNARY_PRECEDENCE + 1


def expr_text(expr: Expr) -> str:
    """Render an expression with the fewest parentheses that re-parse identically"""
    if isinstance(expr, Const):
        return str(expr.value)
    if isinstance(expr, (Reg, AddrRef)):
        return expr.name
    if isinstance(expr, Not):
        inner = expr_text(expr.operand)
        if _precedence(expr.operand) < UNARY_PRECEDENCE:
            inner = f"({inner})"
        return f"!{inner}"

    prec = PRECEDENCE[expr.op]
    left = expr_text(expr.left)
    right = expr_text(expr.right)
    if _precedence(expr.left) < prec:
        left = f"({left})"
    # binary operators associate to the left
    if _precedence(expr.right) <= prec:
        right = f"({right})"
    return f"{left} {expr.op} {right}"


# ---------------------------------------------------------------------------
# Commands and instructions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Load:
    reg: str
    addr: Expr
    op: ClassVar[str] = 'load'


@dataclass(frozen=True)
class Store:
    addr: Expr
    value: Expr
    op: ClassVar[str] = 'store'


@dataclass(frozen=True)
class Mfence:
    op: ClassVar[str] = 'mfence'


@dataclass(frozen=True)
class Assign:
    reg: str
    expr: Expr
    op: ClassVar[str] = 'assign'


@dataclass(frozen=True)
class Assume:
    expr: Expr
    op: ClassVar[str] = 'assume'


Command = Union[Load, Store, Mfence, Assign, Assume]


def command_text(cmd: Command) -> str:
    if isinstance(cmd, Load):
        return f"load {cmd.reg} <- {expr_text(cmd.addr)}"
    if isinstance(cmd, Store):
        return f"store {expr_text(cmd.addr)} <- {expr_text(cmd.value)}"
    if isinstance(cmd, Mfence):
        return "mfence"
    if isinstance(cmd, Assign):
        return f"{cmd.reg} := {expr_text(cmd.expr)}"
    return f"assume {expr_text(cmd.expr)}"


def command_exprs(cmd: Command) -> Tuple[Expr, ...]:
    if isinstance(cmd, Load):
        return (cmd.addr,)
    if isinstance(cmd, Store):
        return (cmd.addr, cmd.value)
    if isinstance(cmd, (Assign, Assume)):
        return (cmd.expr,)
    return ()


def command_uses(cmd: Command) -> Tuple[str, ...]:
    """Registers read by a command"""
    used: List[str] = []
    for expr in command_exprs(cmd):
        for name in expr_registers(expr):
            if name not in used:
                used.append(name)
    return tuple(used)


def command_defs(cmd: Command) -> Tuple[str, ...]:
    """Registers written by a command"""
    if isinstance(cmd, (Load, Assign)):
        return (cmd.reg,)
    return ()


def is_register_local(cmd: Command) -> bool:
    """Assignments and conditionals touch registers only"""
    return isinstance(cmd, (Assign, Assume))


@dataclass(frozen=True)
class Instruction:
    """
    INSTRUCTION (src, cmd, dst)
    - id: stable `thread.src.dst.index` string
    - origin: provenance id after unrolling (None for source instructions)
    """
    id: str
    thread: str
    src: str
    cmd: Command
    dst: str
    origin: Optional[str] = None

    @property
    def text(self) -> str:
        return f"{local_name(self.src)} -> {local_name(self.dst)} : {command_text(self.cmd)}"


def qualify(thread: str, local: str) -> str:
    """Control-state id of a thread-local state name"""
    return f"{thread}.{local}"


def local_name(state: str) -> str:
    return state.split('.', 1)[1] if '.' in state else state


def default_instruction_id(thread: str, src: str, dst: str, index: int) -> str:
    return f"{thread}.{local_name(src)}.{local_name(dst)}.{index}"


def fresh_instruction_id(thread: str, src: str, dst: str, taken: Set[str], start: int) -> Tuple[str, int]:
    """First unused default id at or after `start`; returns (id, next index)"""
    index = start
    while True:
        candidate = default_instruction_id(thread, src, dst, index)
        if candidate not in taken:
            taken.add(candidate)
            return candidate, index + 1
        index += 1


# ---------------------------------------------------------------------------
# Threads, goals, programs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Thread:
    name: str
    init: str
    states: Tuple[str, ...]
    registers: Tuple[str, ...]
    instructions: Tuple[Instruction, ...]

    @cached_property
    def outgoing(self) -> Dict[str, Tuple[Instruction, ...]]:
        table: Dict[str, List[Instruction]] = {state: [] for state in self.states}
        for inst in self.instructions:
            table.setdefault(inst.src, []).append(inst)
        return {state: tuple(insts) for state, insts in table.items()}

    @cached_property
    def store_count(self) -> int:
        return sum(1 for inst in self.instructions if isinstance(inst.cmd, Store))


def make_thread(name: str, init: str, instructions: Iterable[Instruction],
                extra_states: Iterable[str] = (), extra_registers: Iterable[str] = ()) -> Thread:
    """
    Build a thread whose state and register sets are derived from its instructions

    Args:
        name: thread name
        init: qualified initial control state
        instructions: instruction list in declaration order
        extra_states: states with no instruction touching them
        extra_registers: registers kept even when no instruction defines them

    Returns:
        Thread: states in first-mention order, registers after extra_registers in first-definition order
    """
    insts = tuple(instructions)
    states: List[str] = [init]
    for state in extra_states:
        if state not in states:
            states.append(state)
    registers: List[str] = list(dict.fromkeys(extra_registers))
    for inst in insts:
        for state in (inst.src, inst.dst):
            if state not in states:
                states.append(state)
        for reg in command_defs(inst.cmd):
            if reg not in registers:
                registers.append(reg)
    return Thread(name=name, init=init, states=tuple(states),
                  registers=tuple(registers), instructions=insts)


@dataclass(frozen=True)
class GoalSpec:
    """
    GOAL STATES
    - pcs: per constrained thread, the control states that satisfy it
    - values: conjunctive equalities over registers and named addresses
    - buffers are implicitly required empty
    """
    pcs: Tuple[Tuple[str, Tuple[str, ...]], ...] = ()
    values: Tuple[Tuple[str, int], ...] = ()

    def pc_constraint(self, thread: str) -> Optional[Tuple[str, ...]]:
        for name, states in self.pcs:
            if name == thread:
                return states
        return None

    @property
    def registers(self) -> Tuple[str, ...]:
        return tuple(symbol for symbol, _ in self.values)


@dataclass(frozen=True)
class Program:
    domain: DomainConfig
    addresses: Tuple[str, ...]
    threads: Tuple[Thread, ...]
    goal: GoalSpec = field(default_factory=GoalSpec)

    @cached_property
    def instruction_map(self) -> Dict[str, Instruction]:
        return {inst.id: inst for thread in self.threads for inst in thread.instructions}

    @cached_property
    def thread_index(self) -> Dict[str, int]:
        return {thread.name: i for i, thread in enumerate(self.threads)}

    @cached_property
    def register_owner(self) -> Dict[str, str]:
        return {reg: thread.name for thread in self.threads for reg in thread.registers}

    @cached_property
    def address_values(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.addresses)}

    def thread(self, name: str) -> Thread:
        return self.threads[self.thread_index[name]]

    def instruction(self, inst_id: str) -> Instruction:
        return self.instruction_map[inst_id]

    @property
    def instruction_count(self) -> int:
        return sum(len(thread.instructions) for thread in self.threads)

    @property
    def state_count(self) -> int:
        return sum(len(thread.states) for thread in self.threads)

    def replace_thread(self, thread: Thread) -> "Program":
        threads = tuple(thread if t.name == thread.name else t for t in self.threads)
        return Program(domain=self.domain, addresses=self.addresses,
                       threads=threads, goal=self.goal)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    """A violated invariant; `code` names it"""
    code: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


def validate(program: Program) -> List[Diagnostic]:
    """
    Check every structural invariant of a program

    Args:
        program: parsed or constructed program

    Returns:
        List[Diagnostic]: empty iff the program is well formed
    """
    diags: List[Diagnostic] = []
    size = program.domain.size
    if size < 1:
        diags.append(Diagnostic('domain-size', f"domain size {size} must be at least 1"))

    if len(set(program.addresses)) != len(program.addresses):
        diags.append(Diagnostic('address-duplicate', "address names must be distinct"))
    if len(program.addresses) > max(size, 0):
        diags.append(Diagnostic(
            'address-range', f"{len(program.addresses)} named addresses do not fit domain {size}"))

    names = [thread.name for thread in program.threads]
    for name in sorted({n for n in names if names.count(n) > 1}):
        diags.append(Diagnostic('thread-duplicate', f"thread {name} declared twice"))

    owners: Dict[str, str] = {}
    state_owner: Dict[str, str] = {}
    seen_ids: Set[str] = set()
    for thread in program.threads:
        if thread.init not in thread.states:
            diags.append(Diagnostic('initial-state', f"{thread.name}: init {thread.init} not a state"))
        for reg in thread.registers:
            if reg in owners and owners[reg] != thread.name:
                diags.append(Diagnostic(
                    'register-disjointness', f"register {reg} shared by {owners[reg]} and {thread.name}"))
            owners.setdefault(reg, thread.name)
            if reg in program.addresses:
                diags.append(Diagnostic('symbol-clash', f"{reg} is both a register and an address"))
        for state in thread.states:
            if state in state_owner and state_owner[state] != thread.name:
                diags.append(Diagnostic(
                    'state-disjointness',
                    f"control state {state} shared by {state_owner[state]} and {thread.name}"))
            state_owner.setdefault(state, thread.name)

    for thread in program.threads:
        states = set(thread.states)
        for inst in thread.instructions:
            if inst.id in seen_ids:
                diags.append(Diagnostic('instruction-id', f"duplicate instruction id {inst.id}"))
            seen_ids.add(inst.id)
            if inst.thread != thread.name:
                diags.append(Diagnostic('instruction-thread', f"{inst.id} listed under {thread.name}"))
            for state in (inst.src, inst.dst):
                if state not in states:
                    diags.append(Diagnostic('endpoint', f"{inst.id}: {state} not a state of {thread.name}"))
            for reg in command_uses(inst.cmd) + command_defs(inst.cmd):
                if reg in thread.registers:
                    continue
                if reg in owners:
                    diags.append(Diagnostic(
                        'cross-thread-register', f"{inst.id} uses register {reg} of {owners[reg]}"))
                else:
                    diags.append(Diagnostic('unknown-register', f"{inst.id} reads undefined register {reg}"))
            for expr in command_exprs(inst.cmd):
                for value in expr_constants(expr):
                    if not 0 <= value < size:
                        diags.append(Diagnostic('constant-range', f"{inst.id}: constant {value} outside domain"))
                for ref in expr_addresses(expr):
                    if program.address_values.get(ref.name) != ref.value:
                        diags.append(Diagnostic('unknown-address', f"{inst.id}: address {ref.name} unresolved"))

    for name, goal_states in program.goal.pcs:
        if name not in program.thread_index:
            diags.append(Diagnostic('goal-thread', f"goal names unknown thread {name}"))
            continue
        known = set(program.thread(name).states)
        for state in goal_states:
            if state not in known:
                diags.append(Diagnostic('goal-state', f"goal names unknown state {state} of {name}"))
    for symbol, value in program.goal.values:
        if symbol not in owners and symbol not in program.address_values:
            diags.append(Diagnostic('goal-symbol', f"goal names unknown register or address {symbol}"))
        if not 0 <= value < size:
            diags.append(Diagnostic('goal-value', f"goal value {value} for {symbol} outside domain"))

    if diags:
        logger.debug(f"🔍 Validation found {len(diags)} problems")
    return diags


# ---------------------------------------------------------------------------
# Control-flow structure
# ---------------------------------------------------------------------------

def topological_states(thread: Thread) -> Optional[List[str]]:
    """Kahn order of the thread's states, or None if the thread has a cycle"""
    indegree = {state: 0 for state in thread.states}
    for inst in thread.instructions:
        indegree[inst.dst] = indegree.get(inst.dst, 0) + 1
    queue = deque(state for state in thread.states if indegree[state] == 0)
    order: List[str] = []
    while queue:
        state = queue.popleft()
        order.append(state)
        for inst in thread.outgoing.get(state, ()):
            indegree[inst.dst] -= 1
            if indegree[inst.dst] == 0:
                queue.append(inst.dst)
    return order if len(order) == len(indegree) else None


def is_acyclic(program: Program) -> bool:
    return all(topological_states(thread) is not None for thread in program.threads)


def longest_path(thread: Thread) -> int:
    """Instructions on the longest path of an acyclic thread"""
    order = topological_states(thread)
    if order is None:
        raise ValueError(f"thread {thread.name} is cyclic")
    depth = {state: 0 for state in order}
    for state in order:
        for inst in thread.outgoing.get(state, ()):
            depth[inst.dst] = max(depth[inst.dst], depth[state] + 1)
    return max(depth.values(), default=0)


def reachable_states(thread: Thread, start: str, allow=lambda inst: True) -> Set[str]:
    """Control states reachable from `start` through instructions accepted by `allow`"""
    seen = {start}
    stack = [start]
    while stack:
        state = stack.pop()
        for inst in thread.outgoing.get(state, ()):
            if allow(inst) and inst.dst not in seen:
                seen.add(inst.dst)
                stack.append(inst.dst)
    return seen


def unroll(program: Program, k: int) -> Program:
    """
    Unroll every thread into a DAG bounding its instruction executions at k

    Copy (q, i) of a control state means "at q after i instructions". Only copies
    reachable from (init, 0) are created. Each copied instruction records the id
    it was copied from in `origin`; goal control states are lifted to every copy.

    Args:
        program: any valid program
        k: bound on instructions executed per thread (k >= 1)

    Returns:
        Program: acyclic unrolled program
    """
    if k < 1:
        raise ValueError(f"unroll bound must be positive, got {k}")

    copies: Dict[str, Dict[str, List[str]]] = {}
    threads: List[Thread] = []
    for thread in program.threads:
        def copy_of(state: str, level: int) -> str:
            return qualify(thread.name, f"{local_name(state)}__u{level}")

        init = copy_of(thread.init, 0)
        lifted: Dict[str, List[str]] = {thread.init: [init]}
        instructions: List[Instruction] = []
        frontier = [thread.init]
        for level in range(k):
            next_frontier: List[str] = []
            for state in frontier:
                for inst in thread.outgoing.get(state, ()):
                    src = copy_of(state, level)
                    dst = copy_of(inst.dst, level + 1)
                    instructions.append(Instruction(
                        id=default_instruction_id(thread.name, src, dst, len(instructions)),
                        thread=thread.name, src=src, cmd=inst.cmd, dst=dst, origin=inst.id))
                    if inst.dst not in next_frontier:
                        next_frontier.append(inst.dst)
                        lifted.setdefault(inst.dst, []).append(dst)
            frontier = next_frontier
            if not frontier:
                break
        copies[thread.name] = lifted
        threads.append(make_thread(thread.name, init, instructions, extra_registers=thread.registers))

    pcs = []
    for name, goal_states in program.goal.pcs:
        lifted_states: List[str] = []
        for state in goal_states:
            lifted_states.extend(copies.get(name, {}).get(state, []))
        pcs.append((name, tuple(lifted_states)))

    unrolled = Program(domain=program.domain, addresses=program.addresses, threads=tuple(threads),
                       goal=GoalSpec(pcs=tuple(pcs), values=program.goal.values))
    logger.debug(f"📊 Unrolled to k={k}: {unrolled.instruction_count} instructions")
    return unrolled


def origin_of(program: Program, inst_id: str) -> str:
    """Provenance of an instruction (itself for source instructions)"""
    inst = program.instruction_map.get(inst_id)
    if inst is None or inst.origin is None:
        return inst_id
    return inst.origin

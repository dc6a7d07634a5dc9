"""
Lazy TSO - Robustness Oracle
Witness search over attacker-shaped TSO computations and the projection
bookkeeping that maps extended programs back to their originals
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Set, Tuple, Union

from lazy_tso.errors import (BoundExhausted, OracleContractError, ProjectionError,
                             ReplayError, UnboundedBufferError)
from lazy_tso.hb import build_hb, hb_reachable_from
from lazy_tso.program_ir import Load, Mfence, Program, Store, reachable_states as control_reachable
from lazy_tso.semantics import (SC, TSO, CompiledProgram, Computation, Event, MachineState,
                                compile_program, replay)

logger = logging.getLogger(__name__)

Attack = Tuple[str, str, str]
InstructionSeq = Tuple[str, ...]

SEGMENT_LABELS = ('τ1', 'st', 'τ2', 'ld', 'τ3', 'fl', 'τ4')


# ---------------------------------------------------------------------------
# Attacks and instruction sequences
# ---------------------------------------------------------------------------

def enumerate_attacks(program: Program) -> List[Attack]:
    """
    Candidate (thread, store, load) triples

    Args:
        program: valid program

    Returns:
        List[Attack]: triples with a fence-free path from dst(store) to src(load),
        in thread, store, load declaration order
    """
    attacks: List[Attack] = []
    for thread in program.threads:
        stores = [inst for inst in thread.instructions if isinstance(inst.cmd, Store)]
        loads = [inst for inst in thread.instructions if isinstance(inst.cmd, Load)]
        for store in stores:
            ahead = control_reachable(thread, store.dst, lambda inst: not isinstance(inst.cmd, Mfence))
            for load in loads:
                if load.src in ahead:
                    attacks.append((thread.name, store.id, load.id))
    return attacks


def check_sequence(program: Program, sigma: Sequence[str]) -> None:
    """
    Enforce the oracle contract on a non-empty sequence

    Raises:
        OracleContractError: not a chained, fence-free store...load sequence of one thread
    """
    if not sigma:
        raise OracleContractError("empty instruction sequence")
    try:
        insts = [program.instruction(inst_id) for inst_id in sigma]
    except KeyError as e:
        raise OracleContractError(f"sequence names unknown instruction {e}") from e
    if not isinstance(insts[0].cmd, Store):
        raise OracleContractError(f"sequence starts with {insts[0].id}, not a store")
    if not isinstance(insts[-1].cmd, Load):
        raise OracleContractError(f"sequence ends with {insts[-1].id}, not a load")
    for prev, inst in zip(insts, insts[1:]):
        if inst.thread != insts[0].thread:
            raise OracleContractError(f"{inst.id} belongs to another thread")
        if prev.dst != inst.src:
            raise OracleContractError(f"{prev.id} does not chain into {inst.id}")
    if any(isinstance(inst.cmd, Mfence) for inst in insts):
        raise OracleContractError("sequence contains a fence")


# ---------------------------------------------------------------------------
# Witnesses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Witness:
    """
    WITNESS tau1 . st . tau2 . ld . tau3 . fl . tau4
    - the attacker buffers st and every later store until ld has executed
    - every event after ld is hb-after ld, closing a cycle through st's flush
    """
    thread: str
    store: str
    load: str
    computation: Computation
    st_index: int
    ld_index: int
    fl_index: int

    @property
    def events(self) -> Tuple[Event, ...]:
        return self.computation.events

    @property
    def attack(self) -> Attack:
        return (self.thread, self.store, self.load)

    @property
    def sigma(self) -> InstructionSeq:
        """Attacker instructions of st . tau2 . ld"""
        return tuple(e.inst for e in self.events[self.st_index:self.ld_index + 1]
                     if e.thread == self.thread and not e.is_flush)

    def segments(self) -> List[Tuple[str, Tuple[Event, ...]]]:
        ev = self.events
        st, ld, fl = self.st_index, self.ld_index, self.fl_index
        parts = (ev[:st], ev[st:st + 1], ev[st + 1:ld], ev[ld:ld + 1], ev[ld + 1:fl], ev[fl:fl + 1], ev[fl + 1:])
        return list(zip(SEGMENT_LABELS, parts))


def dump_witness(witness: Witness) -> str:
    """Event list with segment labels, one segment per line"""
    lines = [f"attack {witness.thread} {witness.store} {witness.load}"]
    for label, events in witness.segments():
        lines.append(f"{label}: {' '.join(str(e) for e in events) if events else 'ε'}")
    return "\n".join(lines) + "\n"


class _Flags:
    """Forward-reachability flags of tau3 events from ld"""
    __slots__ = ()

    @staticmethod
    def initial(ld_addr: int) -> tuple:
        # (reached threads, last flush reached, loads since flush reached, all reached)
        return (0, frozenset(), frozenset((ld_addr,)), True)

    @staticmethod
    def advance(flags: tuple, ti: int, step: Tuple[Event, ...]) -> tuple:
        reached, last_flush, loads_since, pure = flags
        bit = 1 << ti
        event = step[0]
        addr = event.addr
        if event.kind == 'load':
            hit = bool(reached & bit) or addr in last_flush
            if hit:
                loads_since = loads_since | {addr}
        elif event.kind == 'store':
            hit = bool(reached & bit) or addr in last_flush or addr in loads_since
            last_flush = last_flush | {addr} if hit else last_flush - {addr}
            loads_since = loads_since - {addr}
        else:
            hit = bool(reached & bit)
        if hit:
            reached |= bit
        else:
            pure = False
        return (reached, last_flush, loads_since, pure)

    @staticmethod
    def flagged(flags: tuple, addr: int) -> bool:
        return addr in flags[1] or addr in flags[2]


@dataclass
class _Node:
    state: MachineState
    phase: int
    attack: Optional[Tuple[int, str, Optional[str]]]
    st_eid: int = -1
    ld_eid: int = -1
    flags: Optional[tuple] = None
    depth: int = 0


class WitnessSearch:
    """
    WITNESS SEARCH
    - Phase 0: SC steps of every thread
    - Phase 1: entered by buffering the attacker's store; the attacker runs
      TSO steps without flushes or fences, everyone else runs SC steps
    - Phase 2: entered by an attacker load served from memory; only other
      threads run SC steps while reachability flags are tracked
    - Per attack the first candidate meeting every witness condition wins
    """

    def __init__(self, program: Union[Program, CompiledProgram], bound: Optional[int] = None):
        self.compiled = compile_program(program)
        self.bound = bound
        self.truncated = False
        self.nodes_explored = 0
        if not self.compiled.acyclic and bound is None:
            raise UnboundedBufferError("witness search on a cyclic program needs a depth bound")

    def run(self) -> Dict[Attack, Witness]:
        compiled = self.compiled
        init = compiled.initial_state()
        root_key = (0, None, compiled.key(init), None)
        parents: Dict[tuple, Optional[Tuple[tuple, Tuple[Event, ...]]]] = {root_key: None}
        queue = deque([(root_key, _Node(init, 0, None))])
        found: Dict[Attack, Witness] = {}

        while queue:
            key, node = queue.popleft()
            self.nodes_explored += 1
            attack = None
            if node.phase == 2:
                ti, store_id, load_id = node.attack
                attack = (compiled.thread_names[ti], store_id, load_id)
                if attack in found:
                    continue
                witness = self._accept(parents, key, node, attack)
                if witness is not None:
                    found[attack] = witness
                    continue
                if not node.flags[3]:
                    # an event outside hb+ of ld never leaves the computation
                    continue

            successors = self._expand(node)
            if self.bound is not None and node.depth >= self.bound:
                if successors:
                    self.truncated = True
                continue
            for succ_key, step, succ in successors:
                if succ_key in parents:
                    continue
                parents[succ_key] = (key, step)
                queue.append((succ_key, succ))

        logger.debug(f"📊 Witness search: {self.nodes_explored} nodes, {len(found)} witnesses, "
                     f"truncated={self.truncated}")
        return found

    def _expand(self, node: _Node) -> List[Tuple[tuple, Tuple[Event, ...], _Node]]:
        compiled = self.compiled
        state = node.state
        depth = node.depth + 1
        out = []
        for ti in range(len(compiled.thread_names)):
            if node.phase == 0:
                for step, succ in compiled.thread_steps(state, ti, SC):
                    out.append(((0, None, compiled.key(succ), None), step,
                                _Node(succ, 0, None, depth=depth)))
                for step, succ in compiled.thread_steps(state, ti, TSO):
                    event = step[0]
                    if event.kind != 'store':
                        continue
                    attack = (ti, event.inst, None)
                    out.append(((1, attack, compiled.key(succ), None), step,
                                _Node(succ, 1, attack, st_eid=event.eid, depth=depth)))
                continue

            attacker = node.attack[0]
            if ti != attacker:
                for step, succ in compiled.thread_steps(state, ti, SC):
                    flags = node.flags
                    if node.phase == 2:
                        flags = _Flags.advance(flags, ti, step)
                    out.append(((node.phase, node.attack, compiled.key(succ), flags), step,
                                _Node(succ, node.phase, node.attack, node.st_eid, node.ld_eid, flags, depth)))
                continue
            if node.phase == 2:
                continue

            for step, succ in compiled.thread_steps(state, ti, TSO):
                event = step[0]
                if event.kind in ('flush', 'fence'):
                    continue
                out.append(((1, node.attack, compiled.key(succ), None), step,
                            _Node(succ, 1, node.attack, node.st_eid, depth=depth)))
                if event.kind == 'load' and all(entry[1] != event.addr for entry in state.buf[ti]):
                    attack = (ti, node.attack[1], event.inst)
                    flags = _Flags.initial(event.addr)
                    out.append(((2, attack, compiled.key(succ), flags), step,
                                _Node(succ, 2, attack, node.st_eid, event.eid, flags, depth)))
        return out

    def _accept(self, parents, key, node: _Node, attack: Attack) -> Optional[Witness]:
        ti = node.attack[0]
        buf = node.state.buf[ti]
        flags = node.flags
        store_addr = buf[-1][1]
        if not (flags[3] and _Flags.flagged(flags, store_addr)):
            return None

        events: List[Event] = []
        cursor = key
        while parents[cursor] is not None:
            cursor, step = parents[cursor]
            events[:0] = step
        fl_index = len(events)
        state = node.state
        while state.buf[ti]:
            (event,), state = self.compiled._flush(state, ti)[0]
            events.append(event)

        thread = attack[0]
        st_index = next(i for i, e in enumerate(events)
                        if e.thread == thread and e.eid == node.st_eid and e.kind == 'store')
        ld_index = next(i for i, e in enumerate(events)
                        if e.thread == thread and e.eid == node.ld_eid and e.kind == 'load')
        return Witness(thread=thread, store=attack[1], load=attack[2],
                       computation=Computation(tuple(events), state),
                       st_index=st_index, ld_index=ld_index, fl_index=fl_index)


def iter_witnesses(program: Union[Program, CompiledProgram], bound: Optional[int] = None) -> Iterator[Witness]:
    """
    One witness per attack, in canonical attack order

    Args:
        program: acyclic program, or any program with a depth bound
        bound: depth bound on the witness search (required for cyclic programs)

    Yields:
        Witness: the first witness found for each attack that admits one

    Raises:
        BoundExhausted: the bounded search was truncated and found nothing
    """
    compiled = compile_program(program)
    search = WitnessSearch(compiled, bound)
    found = search.run()
    if not found and search.truncated:
        raise BoundExhausted(bound)
    for attack in enumerate_attacks(compiled.program):
        if attack in found:
            yield found[attack]


def find_witness(program: Union[Program, CompiledProgram], bound: Optional[int] = None) -> Optional[Witness]:
    """First witness in canonical order, or None for robust programs"""
    return next(iter_witnesses(program, bound), None)


def oracle(program: Union[Program, CompiledProgram], bound: Optional[int] = None) -> InstructionSeq:
    """
    Attacker instruction sequence of the canonical witness

    Returns:
        InstructionSeq: empty iff no witness exists
    """
    witness = find_witness(program, bound)
    if witness is None:
        logger.info("✅ Oracle: no witness, program is robust")
        return ()
    logger.info(f"🔍 Oracle: witness for {witness.thread}, σ = {' '.join(witness.sigma)}")
    return witness.sigma


def verify_witness(program: Union[Program, CompiledProgram], witness: Witness) -> List[str]:
    """
    Independent re-check of a witness

    Returns:
        List[str]: names of violated conditions ('replay', 'W1'..'W5'); empty when valid
    """
    compiled = compile_program(program)
    events = witness.events
    st, ld, fl = witness.st_index, witness.ld_index, witness.fl_index
    attacker = witness.thread
    problems: List[str] = []

    try:
        reached = replay(compiled, events, TSO).reached
        if not reached.buffers_empty:
            problems.append('replay')
    except ReplayError as e:
        logger.warning(f"⚠️ Witness does not replay: {e}")
        return ['replay']

    for i, event in enumerate(events):
        if event.kind == 'store' and event.thread != attacker:
            follower = events[i + 1] if i + 1 < len(events) else None
            if follower is None or follower.kind != 'flush' or follower.identity[:3] != event.identity[:3]:
                problems.append('W1')
                break

    store_event, flush_event = events[st], events[fl]
    if (store_event.kind != 'store' or flush_event.kind != 'flush'
            or flush_event.identity[:3] != store_event.identity[:3]):
        problems.append('W2')
    elif any(e.thread == attacker and e.kind in ('flush', 'fence') for e in events[st + 1:fl]):
        problems.append('W2')
    elif any(e.thread == attacker and e.kind == 'store' and not _flushed_before(events, i, st)
             for i, e in enumerate(events[:st])):
        problems.append('W2')

    if any(e.thread == attacker for e in events[ld + 1:fl]):
        problems.append('W3')

    load_addr = events[ld].addr
    if any(e.thread != attacker or not e.is_flush or e.addr == load_addr for e in events[fl + 1:]):
        problems.append('W4')

    graph = build_hb(events)
    after_load = hb_reachable_from(graph, ld)
    if any(i not in after_load for i in range(ld + 1, fl + 1)):
        problems.append('W5')
    return problems


def _flushed_before(events: Sequence[Event], store_index: int, limit: int) -> bool:
    target = events[store_index].identity[:3]
    return any(e.is_flush and e.identity[:3] == target for e in events[store_index + 1:limit])


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectionMap:
    """Instruction id of an extended program -> original id (None for added glue)"""
    mapping: Mapping[str, Optional[str]] = field(default_factory=dict)

    @classmethod
    def identity(cls, program: Program) -> "ProjectionMap":
        return cls({inst_id: inst_id for inst_id in program.instruction_map})

    def __getitem__(self, inst_id: str) -> Optional[str]:
        try:
            return self.mapping[inst_id]
        except KeyError:
            raise ProjectionError(f"unknown instruction {inst_id}") from None

    def __contains__(self, inst_id: str) -> bool:
        return inst_id in self.mapping

    def compose(self, later: "ProjectionMap") -> "ProjectionMap":
        """Map for `later`'s program straight to this map's originals"""
        composed: Dict[str, Optional[str]] = {}
        for inst_id, middle in later.mapping.items():
            composed[inst_id] = None if middle is None else self[middle]
        return ProjectionMap(composed)


def project(mapping: ProjectionMap, seq: Sequence[str]) -> InstructionSeq:
    """Homomorphic image of a sequence, glue instructions dropped"""
    out: List[str] = []
    for inst_id in seq:
        original = mapping[inst_id]
        if original is not None:
            out.append(original)
    return tuple(out)

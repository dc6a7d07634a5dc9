"""
Lazy TSO - Lazy Engine
Program extension by attacker sequences, the lazy TSO reachability loop and
the bounded-unrolling semi-decision wrapper
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple

from lazy_tso.config import Settings
from lazy_tso.errors import BoundExhausted, ExtensionError, OracleContractError, UnboundedBufferError
from lazy_tso.oracle import (InstructionSeq, ProjectionMap, check_sequence, iter_witnesses, project)
from lazy_tso.program_ir import (
    Assign, Assume, BinOp, Command, Instruction, Load, Mfence, Program, Reg, Store,
    fresh_instruction_id, is_acyclic, longest_path, make_thread, origin_of, qualify,
    unroll,
)
from lazy_tso.semantics import SC, Computation, reach
from lazy_tso.value_sets import goal_provably_unreachable

logger = logging.getLogger(__name__)

REACHABLE = 'reachable'
UNREACHABLE = 'unreachable'
INCONCLUSIVE = 'inconclusive'
SAFE_UP_TO_K = 'safe-up-to-k'


@dataclass(frozen=True)
class LazyConfig:
    """
    LAZY LOOP CONFIGURATION
    - delete_first_store: drop inst_1 from the attacker (terminating mode)
    - witnesses_per_round: sequences taken per round
    - max_iterations: round cap for keep mode
    - unroll: ascending schedule of unrolling bounds for cyclic programs
    """
    delete_first_store: bool = False
    max_iterations: Optional[int] = 64
    witnesses_per_round: int = 4
    unroll: Tuple[int, ...] = tuple(range(1, 13))
    oracle_bound: Optional[int] = None
    state_budget: Optional[int] = None
    por: bool = False
    static_check: bool = True
    development: bool = False

    def __post_init__(self):
        if self.witnesses_per_round < 1:
            raise ValueError("witnesses_per_round must be at least 1")
        if not self.unroll or min(self.unroll) < 1:
            raise ValueError("unroll schedule needs positive bounds")

    @classmethod
    def from_settings(cls, settings: Settings, **overrides) -> "LazyConfig":
        base = cls(max_iterations=settings.max_iterations,
                   witnesses_per_round=settings.witnesses_per_round,
                   unroll=settings.unroll,
                   oracle_bound=settings.oracle_bound,
                   state_budget=settings.state_budget,
                   development=settings.development)
        return replace(base, **overrides)


# ---------------------------------------------------------------------------
# Extension
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExtensionAux:
    thread: str
    tag: int
    sigma: InstructionSeq
    address_registers: Tuple[str, ...]
    value_registers: Tuple[str, ...]
    hat_states: Tuple[str, ...]
    chain_states: Tuple[str, ...]

    @property
    def max(self) -> int:
        return len(self.address_registers)


@dataclass(frozen=True)
class ExtensionResult:
    program: Program
    projection: ProjectionMap
    aux: ExtensionAux
    added: Tuple[str, ...]


class _ThreadExtender:
    """Builds the added instructions of one extension, recording their projection"""

    def __init__(self, program: Program, thread: str, tag: int):
        self.program = program
        self.thread = program.thread(thread)
        self.tag = tag
        self.taken: Set[str] = set(program.instruction_map)
        self.added: List[Instruction] = []
        self.projection: Dict[str, Optional[str]] = {}
        self.chain_states: List[str] = []
        self.next_index = len(self.thread.instructions)

    def chain_state(self) -> str:
        state = qualify(self.thread.name, f"__x{self.tag}_s{len(self.chain_states)}")
        self.chain_states.append(state)
        return state

    def emit(self, src: str, cmd: Command, dst: str, maps_to: Optional[str] = None) -> Instruction:
        inst_id, self.next_index = fresh_instruction_id(self.thread.name, src, dst, self.taken, self.next_index)
        inst = Instruction(id=inst_id, thread=self.thread.name, src=src, cmd=cmd, dst=dst)
        self.added.append(inst)
        self.projection[inst_id] = maps_to
        return inst

    def emit_path(self, src: str, cmds: Sequence[Command], dst: str, first_maps_to: Optional[str] = None) -> None:
        """src -cmd_1-> s -cmd_2-> ... -cmd_k-> dst through fresh chain states"""
        current = src
        for i, cmd in enumerate(cmds):
            target = dst if i == len(cmds) - 1 else self.chain_state()
            self.emit(current, cmd, target, first_maps_to if i == 0 else None)
            current = target


def _flush_stores(address_registers: Sequence[str], value_registers: Sequence[str], count: int) -> List[Command]:
    return [Store(Reg(address_registers[j]), Reg(value_registers[j])) for j in range(count)]


def extend(program: Program, sigma: Sequence[str], delete_first_store: bool = False,
           tag: int = 1) -> ExtensionResult:
    """
    Extend the attacker thread so delaying sigma's first store past its last load
    becomes an SC behaviour

    Args:
        program: program R the sequence was computed for
        sigma: chained, fence-free store...load instruction ids of one thread
        delete_first_store: remove inst_1 from the attacker thread
        tag: serial number keeping fresh registers and states distinct across rounds

    Returns:
        ExtensionResult: R + sigma with its projection onto R

    Raises:
        ExtensionError: sigma violates the oracle contract or is not in R
    """
    try:
        check_sequence(program, sigma)
    except OracleContractError as e:
        raise ExtensionError(f"cannot extend by {list(sigma)}: {e}") from e

    insts = [program.instruction(inst_id) for inst_id in sigma]
    n = len(insts)
    name = insts[0].thread
    builder = _ThreadExtender(program, name, tag)
    total_stores = sum(1 for inst in insts if isinstance(inst.cmd, Store))
    ar = tuple(f"__ar{j}__{tag}" for j in range(1, total_stores + 1))
    vr = tuple(f"__vr{j}__{tag}" for j in range(1, total_stores + 1))
    clash = (set(ar) | set(vr)) & (set(program.register_owner) | set(program.addresses))
    if clash:
        raise ExtensionError(f"auxiliary registers {sorted(clash)} already in use")

    hats = [insts[0].src] + [qualify(name, f"__x{tag}_q{i}") for i in range(1, n + 1)]
    stores_before: List[int] = []
    count = 0
    for i, inst in enumerate(insts, start=1):
        stores_before.append(count)
        src, dst, cmd = hats[i - 1], hats[i], inst.cmd
        if isinstance(cmd, Store):
            count += 1
            builder.emit_path(src, [Assign(ar[count - 1], cmd.addr), Assign(vr[count - 1], cmd.value)],
                              dst, first_maps_to=inst.id)
        elif isinstance(cmd, Load):
            current = src
            for j in range(count, 0, -1):
                hit = builder.chain_state()
                maps_to = inst.id if current == src else None
                builder.emit(current, Assume(BinOp('==', Reg(ar[j - 1]), cmd.addr)), hit, maps_to)
                builder.emit(hit, Assign(cmd.reg, Reg(vr[j - 1])), dst)
                miss = builder.chain_state()
                builder.emit(current, Assume(BinOp('!=', Reg(ar[j - 1]), cmd.addr)), miss, maps_to)
                current = miss
            builder.emit(current, Load(cmd.reg, cmd.addr), dst, inst.id if current == src else None)
        else:
            builder.emit(src, cmd, dst, inst.id)

    builder.emit_path(hats[n], _flush_stores(ar, vr, total_stores), insts[-1].dst)

    thread = program.thread(name)
    for i in range(2, n + 1):
        inst_i = insts[i - 1]
        flushed = stores_before[i - 1]
        for other in thread.outgoing.get(inst_i.src, ()):
            if other.id == inst_i.id:
                continue
            builder.emit_path(hats[i - 1], _flush_stores(ar, vr, flushed) + [other.cmd], other.dst)
    for i in range(1, n):
        if i > 1 and not isinstance(insts[i - 1].cmd, Load):
            continue
        # leave after inst_i with the first store fenced, the rest still buffered
        stored = stores_before[i - 1] + (1 if isinstance(insts[i - 1].cmd, Store) else 0)
        cmds: List[Command] = [Store(Reg(ar[0]), Reg(vr[0])), Mfence()]
        cmds += [Store(Reg(ar[j]), Reg(vr[j])) for j in range(1, stored)]
        builder.emit_path(hats[i], cmds, insts[i - 1].dst)

    kept = [inst for inst in thread.instructions
            if not (delete_first_store and inst.id == insts[0].id)]
    extended_thread = make_thread(name, thread.init, kept + builder.added, extra_states=thread.states,
                                  extra_registers=thread.registers)
    extended = program.replace_thread(extended_thread)

    mapping: Dict[str, Optional[str]] = {inst_id: inst_id for inst_id in program.instruction_map}
    if delete_first_store:
        del mapping[insts[0].id]
    mapping.update(builder.projection)

    aux = ExtensionAux(thread=name, tag=tag, sigma=tuple(sigma), address_registers=ar,
                       value_registers=vr, hat_states=tuple(hats[1:]),
                       chain_states=tuple(builder.chain_states))
    logger.debug(f"📊 Extended {name} by {n} instructions (max={total_stores}): "
                 f"+{len(builder.added)} instructions")
    return ExtensionResult(program=extended, projection=ProjectionMap(mapping), aux=aux,
                           added=tuple(inst.id for inst in builder.added))


def extension_size_bound(program: Program, sigma: Sequence[str]) -> int:
    """Upper bound on instructions added by extend: (B + 4)(n + 1)(max + 1)"""
    insts = [program.instruction(inst_id) for inst_id in sigma]
    thread = program.thread(insts[0].thread)
    branching = max((len(out) for out in thread.outgoing.values()), default=0)
    stores = sum(1 for inst in insts if isinstance(inst.cmd, Store))
    return (branching + 4) * (len(insts) + 1) * (stores + 1)


# ---------------------------------------------------------------------------
# Lazy loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RoundRecord:
    iteration: int
    sigmas: Tuple[InstructionSeq, ...]
    sc_reachable: bool
    states_explored: int


@dataclass
class LazyVerdict:
    outcome: str
    trace: Optional[Computation] = None
    skeleton: Tuple[str, ...] = ()
    iterations: int = 0
    sigmas: List[InstructionSeq] = field(default_factory=list)
    sc_queries: int = 0
    states_explored: int = 0
    rounds: List[RoundRecord] = field(default_factory=list)
    anchored: List[InstructionSeq] = field(default_factory=list)
    bound: Optional[int] = None
    delete_first_store: bool = False
    static: bool = False

    @property
    def reachable(self) -> bool:
        return self.outcome == REACHABLE


class _LazyRun:
    """State of one lazy_reach call"""

    def __init__(self, program: Program, cfg: LazyConfig):
        self.original = program
        self.cfg = cfg
        self.verdict = LazyVerdict(outcome=INCONCLUSIVE)
        self.tag = 0
        self.reset(cfg.delete_first_store)

    def reset(self, delete_first_store: bool) -> None:
        self.delete = delete_first_store
        self.program = self.original
        self.projection = ProjectionMap.identity(self.original)
        self.seen: List[InstructionSeq] = []
        self.rounds_in_mode = 0
        self.verdict.delete_first_store = delete_first_store
        self.verdict.anchored = []

    def sc_query(self, program: Program):
        result = reach(program, SC, limit=self.cfg.state_budget, por=self.cfg.por,
                       verify=self.cfg.development)
        self.verdict.sc_queries += 1
        self.verdict.states_explored += result.states_explored
        return result

    def finish_reachable(self, result, projection: ProjectionMap) -> LazyVerdict:
        trace = result.trace
        steps = [e.inst for e in trace.events if not e.is_flush]
        self.verdict.outcome = REACHABLE
        self.verdict.trace = trace
        self.verdict.skeleton = project(projection, steps)
        logger.info(f"✅ Goal TSO-reachable after {self.verdict.iterations} iterations "
                    f"({self.verdict.sc_queries} SC queries)")
        return self.verdict

    def invariant_violation(self, message: str) -> None:
        if self.cfg.development:
            raise AssertionError(message)
        logger.warning(f"⚠️ {message}")

    def candidates(self, witnesses) -> List[Tuple[InstructionSeq, InstructionSeq]]:
        """
        (sigma over the current program, sigma over the original) per fresh witness

        Keep mode skips sequences whose projection was already used. Delete mode
        takes every witness: its first store leaves the program with the extension.
        """
        picked: List[Tuple[InstructionSeq, InstructionSeq]] = []
        for witness in witnesses:
            original = project(self.projection, witness.sigma)
            if not self.delete and (original in self.seen or any(original == o for _, o in picked)):
                continue
            picked.append((witness.sigma, original))
            if len(picked) >= self.cfg.witnesses_per_round:
                break
        return picked

    def run(self) -> LazyVerdict:
        cfg = self.cfg
        acyclic = is_acyclic(self.original)
        if not acyclic and (cfg.delete_first_store or cfg.oracle_bound is None):
            raise UnboundedBufferError("lazy reachability of a cyclic program needs keep mode and an "
                                       "oracle bound; use semi_decide")
        if cfg.static_check and goal_provably_unreachable(self.original):
            self.verdict.outcome = UNREACHABLE
            self.verdict.static = True
            return self.verdict
        stores = sum(1 for inst in self.original.instruction_map.values() if isinstance(inst.cmd, Store))

        while True:
            self.verdict.iterations += 1
            self.rounds_in_mode += 1
            result = self.sc_query(self.program)
            if result.reachable:
                self.record([], True, result.states_explored)
                return self.finish_reachable(result, self.projection)

            if not self.delete and cfg.max_iterations is not None and self.rounds_in_mode > cfg.max_iterations:
                logger.warning(f"⚠️ Iteration cap {cfg.max_iterations} reached")
                self.verdict.outcome = INCONCLUSIVE
                return self.verdict
            try:
                witnesses = list(iter_witnesses(self.program, None if acyclic else cfg.oracle_bound))
            except BoundExhausted as e:
                logger.warning(f"⚠️ {e}")
                self.verdict.outcome = INCONCLUSIVE
                return self.verdict
            if not witnesses:
                self.record([], False, result.states_explored)
                logger.info(f"✅ Goal unreachable: no witness after {self.verdict.iterations} iterations")
                self.verdict.outcome = UNREACHABLE
                return self.verdict

            picked = self.candidates(witnesses)
            if not picked:
                if acyclic:
                    logger.warning("⚠️ No fresh sequences in keep mode, restarting with inst_1 deleted")
                    self.reset(True)
                    continue
                self.verdict.outcome = INCONCLUSIVE
                return self.verdict

            self.record([o for _, o in picked], False, result.states_explored)
            first = None
            if len(picked) > 1:
                # candidates in canonical order; the first SC-reachable one decides
                for index, (sigma, original) in enumerate(picked):
                    ext = self.extend_with(self.program, sigma)
                    if index == 0:
                        first = ext
                    candidate = self.sc_query(ext.program)
                    if candidate.reachable:
                        self.verdict.iterations += 1
                        self.verdict.sigmas.append(original)
                        self.record([original], True, candidate.states_explored)
                        return self.finish_reachable(candidate, self.projection.compose(ext.projection))

            program, projection = self.program, self.projection
            for index, (sigma, original) in enumerate(picked):
                if any(inst_id not in program.instruction_map for inst_id in sigma):
                    logger.debug(f"🔍 Skipping {sigma}: an instruction was deleted this round")
                    continue
                if self.delete and projection[sigma[0]] is not None:
                    self.anchor(original, stores)
                ext = first if index == 0 and first is not None else self.extend_with(program, sigma)
                program, projection = ext.program, projection.compose(ext.projection)
                self.seen.append(original)
                self.verdict.sigmas.append(original)
            self.program, self.projection = program, projection

    def anchor(self, original: InstructionSeq, stores: int) -> None:
        """Sequences starting at a store of the input program are used at most once"""
        anchored = self.verdict.anchored
        if original in anchored:
            self.invariant_violation(f"sequence {original} repeats an earlier one")
        anchored.append(original)
        if len(anchored) > stores:
            self.invariant_violation(f"{len(anchored)} anchored sequences exceed {stores} stores")

    def extend_with(self, program: Program, sigma: InstructionSeq) -> ExtensionResult:
        self.tag += 1
        return extend(program, sigma, delete_first_store=self.delete, tag=self.tag)

    def record(self, sigmas, sc_reachable: bool, states: int) -> None:
        record = RoundRecord(iteration=self.verdict.iterations, sigmas=tuple(sigmas),
                             sc_reachable=sc_reachable, states_explored=states)
        self.verdict.rounds.append(record)
        logger.info(f"📊 Iteration {record.iteration}: SC {'reachable' if sc_reachable else 'unreachable'}, "
                    f"{states} states, {len(record.sigmas)} new sequences")


def lazy_reach(program: Program, cfg: Optional[LazyConfig] = None) -> LazyVerdict:
    """
    Decide TSO reachability with SC queries on successively extended programs

    Args:
        program: acyclic program (cyclic only in keep mode with an oracle bound)
        cfg: loop configuration

    Returns:
        LazyVerdict: outcome, SC trace of the final program and its original skeleton
    """
    return _LazyRun(program, cfg or LazyConfig()).run()


def semi_decide(program: Program, cfg: Optional[LazyConfig] = None) -> LazyVerdict:
    """
    Lazy reachability over the unrollings of the program, one per bound in the schedule

    Returns:
        LazyVerdict: reachable with the skeleton mapped to the program's own ids,
        or safe-up-to-k with `bound` set to the largest k tried
    """
    cfg = cfg or LazyConfig()
    if is_acyclic(program):
        verdict = lazy_reach(program, cfg)
        verdict.bound = max((longest_path(t) for t in program.threads), default=0)
        return verdict

    total = LazyVerdict(outcome=SAFE_UP_TO_K, delete_first_store=cfg.delete_first_store)
    for k in sorted(cfg.unroll):
        unrolled = unroll(program, k)
        verdict = lazy_reach(unrolled, cfg)
        total.sc_queries += verdict.sc_queries
        total.states_explored += verdict.states_explored
        total.iterations += verdict.iterations
        total.rounds.extend(verdict.rounds)
        total.bound = k
        if verdict.reachable:
            total.outcome = REACHABLE
            total.trace = verdict.trace
            total.skeleton = tuple(origin_of(unrolled, inst_id) for inst_id in verdict.skeleton)
            total.sigmas = [tuple(origin_of(unrolled, i) for i in sigma) for sigma in verdict.sigmas]
            logger.info(f"✅ Goal reachable within unrolling bound {k}")
            return total
        if verdict.outcome == INCONCLUSIVE:
            total.outcome = INCONCLUSIVE
            return total
        logger.info(f"📊 Unrolling bound {k}: unreachable")

    logger.warning(f"⚠️ Safe up to unrolling bound {total.bound}")
    return total

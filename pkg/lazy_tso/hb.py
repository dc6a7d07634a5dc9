"""
Lazy TSO - Happens-Before
Program order, store/flush equivalence and conflict order of computations
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Sequence, Set, Tuple, Union

from lazy_tso.errors import HbError
from lazy_tso.semantics import Computation, Event

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]


@dataclass(frozen=True)
class HbGraph:
    """
    HAPPENS-BEFORE GRAPH
    - Nodes are event positions in the computation
    - po: per-thread transitive order over non-flush events
    - eq: store/flush pairs, stored in both directions
    - cf: early reads (store -> load) and same-address load/flush order
    """
    events: Tuple[Event, ...]
    po: FrozenSet[Edge]
    eq: FrozenSet[Edge]
    cf: FrozenSet[Edge]
    adjacency: Dict[int, Tuple[int, ...]] = field(compare=False, repr=False, default_factory=dict)

    def edges(self) -> List[Tuple[str, int, int]]:
        out = [('po', a, b) for a, b in self.po]
        out += [('eq', a, b) for a, b in self.eq if self.events[a].kind == 'store']
        out += [('cf', a, b) for a, b in self.cf]
        return sorted(out)

    @property
    def edge_count(self) -> int:
        """eq pairs counted once"""
        return len(self.po) + len(self.eq) // 2 + len(self.cf)


def _events_of(computation: Union[Computation, Sequence[Event]]) -> Tuple[Event, ...]:
    if isinstance(computation, Computation):
        return computation.events
    return tuple(computation)


def build_hb(computation: Union[Computation, Sequence[Event]]) -> HbGraph:
    """
    Happens-before relation of a computation

    Args:
        computation: a Computation or a bare event sequence

    Returns:
        HbGraph: exactly the po, eq and cf edges of the computation

    Raises:
        HbError: a flush without a preceding matching store
    """
    events = _events_of(computation)
    po: Set[Edge] = set()
    eq: Set[Edge] = set()
    cf: Set[Edge] = set()

    by_thread: Dict[str, List[int]] = {}
    stores: Dict[Tuple[str, int, str], int] = {}
    flushed: Set[int] = set()
    # per thread, positions of stores whose flush has not happened yet
    pending: Dict[str, List[int]] = {}
    last_flush: Dict[int, int] = {}
    loads_since: Dict[int, List[int]] = {}

    for i, event in enumerate(events):
        if event.kind != 'flush':
            earlier = by_thread.setdefault(event.thread, [])
            po.update((j, i) for j in earlier)
            earlier.append(i)

        if event.kind == 'store':
            stores[(event.thread, event.eid, event.inst)] = i
            pending.setdefault(event.thread, []).append(i)

        elif event.kind == 'flush':
            store = stores.get((event.thread, event.eid, event.inst))
            if store is None or store in flushed:
                raise HbError(f"flush {event} has no unmatched store")
            flushed.add(store)
            pending[event.thread].remove(store)
            eq.add((store, i))
            eq.add((i, store))

            addr = event.addr
            if addr in last_flush:
                cf.add((last_flush[addr], i))
            cf.update((load, i) for load in loads_since.get(addr, ()))
            last_flush[addr] = i
            loads_since[addr] = []

        elif event.kind == 'load':
            addr = event.addr
            source = None
            for j in reversed(pending.get(event.thread, [])):
                if events[j].addr == addr:
                    source = j
                    break
            if source is not None:
                # early read: not ordered against other accesses to addr
                cf.add((source, i))
                continue
            if addr in last_flush:
                cf.add((last_flush[addr], i))
            loads_since.setdefault(addr, []).append(i)

    adjacency: Dict[int, List[int]] = {}
    for a, b in list(po) + list(eq) + list(cf):
        adjacency.setdefault(a, []).append(b)
    return HbGraph(events=events, po=frozenset(po), eq=frozenset(eq), cf=frozenset(cf),
                   adjacency={k: tuple(sorted(v)) for k, v in adjacency.items()})


def hb_reachable_from(graph: HbGraph, src: int) -> Set[int]:
    """Nodes reachable from src by a non-empty hb path (eq usable both ways)"""
    seen: Set[int] = set()
    queue = deque(graph.adjacency.get(src, ()))
    while queue:
        node = queue.popleft()
        if node in seen:
            continue
        seen.add(node)
        queue.extend(graph.adjacency.get(node, ()))
    return seen


def hb_reaches(graph: HbGraph, src: int, dst: int) -> bool:
    return dst in hb_reachable_from(graph, src)


def hb_key(graph: HbGraph) -> Tuple[FrozenSet, FrozenSet]:
    """Canonical form: node identities plus edges over identities"""
    ident = [event.identity for event in graph.events]
    nodes = frozenset(ident)
    edges = frozenset((kind, ident[a], ident[b]) for kind, a, b in graph.edges())
    return nodes, edges


def hb_equal(first: Union[Computation, Sequence[Event]], second: Union[Computation, Sequence[Event]]) -> bool:
    """True iff both computations have the same events and the same hb edges"""
    return hb_key(build_hb(first)) == hb_key(build_hb(second))


def export_edges(graph: HbGraph) -> str:
    """Debug edge list, one `kind src dst` line per edge, eq listed store first"""
    lines = sorted(f"{kind} {graph.events[a]} {graph.events[b]}" for kind, a, b in graph.edges())
    return "\n".join(lines) + ("\n" if lines else "")

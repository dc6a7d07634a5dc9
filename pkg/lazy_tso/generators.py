"""
Lazy TSO - Generators
Parametric corpus templates and the seeded random program family
"""

import argparse
import logging
import random
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from lazy_tso.oracle import oracle
from lazy_tso.program_ir import Program
from lazy_tso.program_parser import parse

logger = logging.getLogger(__name__)

# --- Lamport fast mutex ----------------------------------------------------

LAMPORT_THREAD_FMT = """
thread t{i} {{
  init start;
  start -> q0 : r{i} := {i};
  q0 -> q1 : store x <- r{i};
  q1 -> q2 : load ry{i} <- y;
  q2 -> q0 : assume ry{i} != 0;
  q2 -> q3 : assume ry{i} == 0;
  q3 -> q4 : store y <- r{i};
  q4 -> q5 : load rx{i} <- x;
  q5 -> q6 : assume rx{i} != r{i};
  q6 -> q7 : load ry{i} <- y;
  q7 -> q0 : assume ry{i} != r{i};
  q5 -> enter : assume rx{i} == r{i};
  enter -> q9 : store y <- 0;
}}
"""


def lamport(n: int) -> str:
    """
    Lamport's fast mutex for n threads (fast path only)

    Goal: threads t1 and t2 both in their critical section.
    """
    if n < 2:
        raise ValueError("lamport needs at least two threads")
    parts = [f"# Lamport fast mutex, {n} threads", f"domain {n + 1};", "addresses x, y;"]
    parts += [LAMPORT_THREAD_FMT.format(i=i).strip() for i in range(1, n + 1)]
    parts.append("goal { t1 @ enter, t2 @ enter; }")
    return "\n".join(parts) + "\n"


# --- Dekker with an N-branching diamond ------------------------------------

def _diamond(reg: str, addr: str, n: int) -> List[str]:
    lines = [f"  m0 -> m1 : load {reg} <- {addr};"]
    for i in range(n):
        lines.append(f"  m1 -> d{i} : assume {reg} == {i};")
        lines.append(f"  d{i} -> m2 : store {addr} <- {(i + 1) % n};")
    return lines


def diamond(n: int) -> str:
    """
    Dekker with an n-branching diamond over a private address between the
    flag store and the flag load of each thread
    """
    if n < 2:
        raise ValueError("diamond needs at least two branches")
    lines = [f"# Dekker with a {n}-branching diamond", f"domain {max(4, n)};", "addresses x, y, a, b;"]
    for name, own, other, reg, private, check in (('t1', 'x', 'y', 'r1', 'a', 'ra'),
                                                  ('t2', 'y', 'x', 'r2', 'b', 'rb')):
        lines += [f"thread {name} {{", "  init q0;", f"  q0 -> m0 : store {own} <- 1;"]
        lines += _diamond(check, private, n)
        lines += [f"  m2 -> q2 : load {reg} <- {other};",
                  f"  q2 -> qf : assume {reg} == 0;",
                  "}"]
    lines.append("goal { t1 @ qf, t2 @ qf; }")
    return "\n".join(lines) + "\n"


# --- Countdown loop --------------------------------------------------------

def countdown(n: int) -> str:
    """
    Countdown loop of length n; the goal needs two traversals of the loop.
    The flag thread is declared first so its sequences come first.
    """
    if n < 2:
        raise ValueError("countdown needs a loop of length at least 2")
    return "\n".join([
        f"# Countdown loop of length {n}: reachable under TSO after two traversals",
        f"domain {n + 1};",
        "addresses x, y;",
        "thread t2 {",
        "  init q0;",
        "  q0 -> q1 : store y <- 1;",
        "  q1 -> q2 : load r3 <- x;",
        "  q2 -> q3 : assume r3 == 1;",
        "  q3 -> q4 : load r3 <- x;",
        "  q4 -> q5 : assume r3 == 0;",
        "}",
        "thread t1 {",
        "  init q0;",
        f"  q0 -> q1 : assume r1 < {n};",
        "  q1 -> q2 : store x <- r1;",
        "  q2 -> q0 : r1 := r1 + 1;",
        f"  q0 -> q3 : assume r1 == {n};",
        "  q3 -> q0 : r1 := 0;",
        "  q3 -> q4 : load r2 <- y;",
        "  q4 -> q5 : assume r2 == 0;",
        "}",
        "goal { t2 @ q5, t1 @ q5; }",
    ]) + "\n"


def countdown_depth(n: int) -> int:
    """Instructions t1 executes on the shortest path to the goal"""
    return 6 * n + 5


TEMPLATES: Dict[str, Callable[[int], str]] = {
    'lamport': lamport,
    'diamond': diamond,
    'countdown': countdown,
}


# --- Random acyclic programs -----------------------------------------------

@dataclass(frozen=True)
class RandomShape:
    """
    RANDOM FAMILY
    - Two threads over addresses x and y
    - At most max_instructions instructions in total
    - Domain size drawn from 2..max_domain
    """
    threads: int = 2
    max_instructions: int = 8
    max_domain: int = 3
    branch_probability: float = 0.25


class RandomProgramGenerator:
    """Seeded generator of small acyclic programs (text first, then parsed)"""

    ADDRESSES = ('x', 'y')

    def __init__(self, seed: int, shape: Optional[RandomShape] = None):
        self.rng = random.Random(seed)
        self.shape = shape or RandomShape()

    def _value(self, size: int, regs: List[str]) -> str:
        if regs and self.rng.random() < 0.4:
            reg = self.rng.choice(regs)
            if self.rng.random() < 0.3:
                return f"{reg} + {self.rng.randrange(1, size)}"
            return reg
        return str(self.rng.randrange(size))

    def _command(self, size: int, thread: int, regs: List[str]) -> str:
        kinds = ['store', 'store', 'load', 'load', 'mfence', 'assume', 'assign']
        if not regs:
            kinds = [k for k in kinds if k not in ('assume', 'assign')]
        kind = self.rng.choice(kinds)
        if kind == 'store':
            return f"store {self.rng.choice(self.ADDRESSES)} <- {self._value(size, regs)}"
        if kind == 'load':
            reg = f"r{thread}{self.rng.choice('ab')}"
            if reg not in regs:
                regs.append(reg)
            return f"load {reg} <- {self.rng.choice(self.ADDRESSES)}"
        if kind == 'mfence':
            return "mfence"
        reg = self.rng.choice(regs)
        if kind == 'assume':
            return f"assume {reg} {self.rng.choice(['==', '!='])} {self.rng.randrange(size)}"
        return f"{reg} := {self._value(size, regs)}"

    def _thread(self, index: int, budget: int, size: int) -> Tuple[List[str], str, List[str]]:
        regs: List[str] = []
        lines: List[str] = []
        step = 0
        used = 0
        while used < budget:
            cmd = self._command(size, index, regs)
            lines.append(f"  q{step} -> q{step + 1} : {cmd};")
            used += 1
            if used < budget and regs and self.rng.random() < self.shape.branch_probability:
                reg = self.rng.choice(regs)
                lines.append(f"  q{step} -> q{step + 1} : assume {reg} == {self.rng.randrange(size)};")
                used += 1
            step += 1
        return lines, f"q{step}", regs

    def text(self) -> str:
        shape = self.shape
        size = self.rng.randint(2, shape.max_domain)
        total = self.rng.randint(shape.threads, shape.max_instructions)
        cuts = sorted(self.rng.sample(range(1, total), shape.threads - 1)) if shape.threads > 1 else []
        budgets = [b - a for a, b in zip([0] + cuts, cuts + [total])]

        out = [f"domain {size};", f"addresses {', '.join(self.ADDRESSES)};"]
        pcs: List[str] = []
        constraints: List[str] = []
        for index, budget in enumerate(budgets, start=1):
            lines, final, regs = self._thread(index, budget, size)
            out += [f"thread t{index} {{", "  init q0;"] + lines + ["}"]
            pcs.append(f"t{index} @ {final}")
            if regs and self.rng.random() < 0.5:
                constraints.append(f"{self.rng.choice(regs)} == {self.rng.randrange(size)}")
        if self.rng.random() < 0.3:
            constraints.append(f"{self.rng.choice(self.ADDRESSES)} == {self.rng.randrange(size)}")
        where = f" where {', '.join(constraints)};" if constraints else ""
        out.append(f"goal {{ {', '.join(pcs)};{where} }}")
        return "\n".join(out) + "\n"

    def program(self) -> Program:
        return parse(self.text())


def random_programs(count: int, seed: int = 0, shape: Optional[RandomShape] = None):
    """Yield (case seed, text, program) for `count` reproducible random programs"""
    for case in range(count):
        generator = RandomProgramGenerator(seed * 1_000_003 + case, shape)
        text = generator.text()
        yield case, text, parse(text)


def witnessed_programs(count: int, seed: int = 0, shape: Optional[RandomShape] = None,
                       max_draws: Optional[int] = None):
    """
    Yield (case seed, text, program, sigma) for the first `count` random programs
    the oracle finds a witness for

    Args:
        count: witnessed programs wanted
        seed: family seed, shared with random_programs
        shape: generator shape
        max_draws: stop after this many draws (default 1000 per wanted program)
    """
    limit = max_draws if max_draws is not None else count * 1000
    found = 0
    case = 0
    while found < count and case < limit:
        text = RandomProgramGenerator(seed * 1_000_003 + case, shape).text()
        program = parse(text)
        sigma = oracle(program)
        if sigma:
            found += 1
            yield case, text, program, sigma
        case += 1
    if found < count:
        logger.warning(f"⚠️ Only {found} of {count} random programs had a witness after {case} draws")


def write_template(directory: Path, name: str, n: int) -> Path:
    """Write `<name><n>.prog` into a corpus directory"""
    path = Path(directory) / f"{name}{n}.prog"
    path.write_text(TEMPLATES[name](n), encoding='utf-8')
    logger.info(f"✅ Wrote {path}")
    return path


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Print a parametric corpus program")
    parser.add_argument('template', choices=sorted(TEMPLATES))
    parser.add_argument('n', type=int)
    parser.add_argument('--out', type=Path, help='corpus directory to write into')
    args = parser.parse_args(argv)
    try:
        if args.out:
            write_template(args.out, args.template, args.n)
        else:
            print(TEMPLATES[args.template](args.n), end='')
    except ValueError as e:
        logger.error(f"❌ {e}")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

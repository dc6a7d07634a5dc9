"""
Lazy TSO - Program Parser
Concrete syntax for automata-based programs: tokenizer, parser, printer
"""

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from lazy_tso.errors import ProgramSyntaxError, ProgramValidationError
from lazy_tso.program_ir import (
    PRECEDENCE, AddrRef, Assign, Assume, BinOp, Command, Const, Diagnostic, DomainConfig,
    Expr, GoalSpec, Instruction, Load, Mfence, Not, Program, Reg, Store, command_text,
    default_instruction_id, expr_text, local_name, make_thread, qualify, validate,
)

logger = logging.getLogger(__name__)

KEYWORDS = frozenset({
    'domain', 'addresses', 'thread', 'init', 'goal', 'where',
    'load', 'store', 'mfence', 'assume',
})


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


# Unresolved expression leaf; becomes Reg or AddrRef once registers are known
@dataclass(frozen=True)
class _Name:
    name: str
    thread: Optional[str]
    line: int
    column: int


@dataclass
class _RawInstruction:
    src: str
    dst: str
    cmd: tuple
    attrs: Dict[str, str]
    line: int
    column: int


@dataclass
class _RawThread:
    name: str
    init: str
    body: List[_RawInstruction]
    line: int
    column: int


class ProgramParser:
    """
    PROGRAM PARSER
    - One compiled pattern per token kind, tried in declaration order
    - `#` comments run to end of line
    - Identifiers defined by `load`/`:=` in a thread are its registers; every
      other identifier is an address, numbered in declaration or first-use order
    """

    def __init__(self):
        self.token_patterns = self._compile_token_patterns()

    def _compile_token_patterns(self) -> Dict[str, re.Pattern]:
        """Compile regex patterns for tokenizing"""
        return {
            'space': re.compile(r'[ \t\r]+'),
            'newline': re.compile(r'\n'),
            'comment': re.compile(r'#[^\n]*'),
            'number': re.compile(r'\d+'),
            # dotted names only appear inside [id=..., origin=...] annotations
            'name': re.compile(r'[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z0-9_]+)*'),
            'op': re.compile(r'<-|->|:=|==|!=|&&|\|\||[<+\-*!(){};:,@\[\]=]'),
        }

    def tokenize(self, text: str) -> List[Token]:
        tokens: List[Token] = []
        pos, line, line_start = 0, 1, 0
        while pos < len(text):
            for kind, pattern in self.token_patterns.items():
                match = pattern.match(text, pos)
                if match:
                    break
            else:
                raise ProgramSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)

            if kind == 'newline':
                line += 1
                line_start = match.end()
            elif kind not in ('space', 'comment'):
                tokens.append(Token(kind, match.group(), line, pos - line_start + 1))
            pos = match.end()
        tokens.append(Token('eof', '', line, pos - line_start + 1))
        return tokens

    def parse(self, text: str) -> Program:
        """
        Parse program text

        Args:
            text: program source

        Returns:
            Program: validated program

        Raises:
            ProgramSyntaxError: malformed text
            ProgramValidationError: well-formed text describing an invalid program
        """
        self.tokens = self.tokenize(text)
        self.pos = 0

        self._expect('domain')
        size = int(self._expect_kind('number').text)
        self._expect(';')

        declared: List[str] = []
        if self._accept('addresses'):
            declared.append(self._name())
            while self._accept(','):
                declared.append(self._name())
            self._expect(';')

        raw_threads: List[_RawThread] = []
        while self._peek().text == 'thread':
            raw_threads.append(self._thread())

        raw_pcs: List[Tuple[Token, List[Token]]] = []
        raw_values: List[Tuple[_Name, int]] = []
        if self._peek().text == 'goal':
            raw_pcs, raw_values = self._goal()
        if self._peek().kind != 'eof':
            self._fail(f"unexpected {self._peek().text!r}")

        program = self._resolve(size, declared, raw_threads, raw_pcs, raw_values)
        diagnostics = validate(program)
        if diagnostics:
            raise ProgramValidationError(diagnostics)
        logger.debug(f"✅ Parsed program: {len(program.threads)} threads, "
                     f"{program.instruction_count} instructions")
        return program

    # -- token helpers ------------------------------------------------------

    def _peek(self) -> Token:
        return self.tokens[self.pos]

    def _advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def _fail(self, message: str, token: Optional[Token] = None):
        token = token or self._peek()
        raise ProgramSyntaxError(message, token.line, token.column)

    def _accept(self, text: str) -> bool:
        token = self._peek()
        if token.text == text and token.kind in ('op', 'name'):
            self.pos += 1
            return True
        return False

    def _expect(self, text: str) -> Token:
        token = self._peek()
        if token.text != text or token.kind not in ('op', 'name'):
            self._fail(f"expected {text!r}, found {token.text or 'end of input'!r}")
        return self._advance()

    def _expect_kind(self, kind: str) -> Token:
        token = self._peek()
        if token.kind != kind:
            self._fail(f"expected {kind}, found {token.text or 'end of input'!r}")
        return self._advance()

    def _name(self) -> str:
        token = self._expect_kind('name')
        if token.text in KEYWORDS or '.' in token.text:
            self._fail(f"invalid name {token.text!r}", token)
        return token.text

    # -- grammar --------------------------------------------------------------

    def _thread(self) -> _RawThread:
        start = self._expect('thread')
        name = self._name()
        self._expect('{')
        self._expect('init')
        init = self._name()
        self._accept(';')
        body: List[_RawInstruction] = []
        while not self._accept('}'):
            body.append(self._transition())
        return _RawThread(name, init, body, start.line, start.column)

    def _transition(self) -> _RawInstruction:
        first = self._peek()
        src = self._name()
        self._expect('->')
        dst = self._name()
        self._expect(':')
        cmd = self._command()
        attrs: Dict[str, str] = {}
        if self._accept('['):
            while True:
                key = self._expect_kind('name').text
                if key not in ('id', 'origin'):
                    self._fail(f"unknown attribute {key!r}")
                self._expect('=')
                attrs[key] = self._expect_kind('name').text
                if not self._accept(','):
                    break
            self._expect(']')
        self._expect(';')
        return _RawInstruction(src, dst, cmd, attrs, first.line, first.column)

    def _command(self) -> tuple:
        if self._accept('load'):
            reg = self._name()
            self._expect('<-')
            return ('load', reg, self._expr())
        if self._accept('store'):
            addr = self._expr()
            self._expect('<-')
            return ('store', addr, self._expr())
        if self._accept('mfence'):
            return ('mfence',)
        if self._accept('assume'):
            return ('assume', self._expr())
        reg = self._name()
        self._expect(':=')
        return ('assign', reg, self._expr())

    def _expr(self, min_prec: int = 1):
        left = self._unary()
        while True:
            token = self._peek()
            prec = PRECEDENCE.get(token.text) if token.kind == 'op' else None
            if prec is None or prec < min_prec:
                return left
            self._advance()
            right = self._expr(prec + 1)
            left = BinOp(token.text, left, right)

    def _unary(self):
        if self._accept('!'):
            return Not(self._unary())
        if self._accept('('):
            inner = self._expr()
            self._expect(')')
            return inner
        token = self._peek()
        if token.kind == 'number':
            self._advance()
            return Const(int(token.text))
        name = self._name()
        owner = None
        if self._accept('@'):
            owner = self._name()
        return _Name(name, owner, token.line, token.column)

    def _goal(self):
        self._expect('goal')
        self._expect('{')
        pcs: List[Tuple[Token, List[Token]]] = []
        values: List[Tuple[_Name, int]] = []
        if self._peek().kind == 'name' and self._peek().text != 'where':
            while True:
                thread = self._expect_kind('name')
                self._expect('@')
                if self._accept('{'):
                    states = [self._expect_kind('name')]
                    while self._accept(','):
                        states.append(self._expect_kind('name'))
                    self._expect('}')
                else:
                    states = [self._expect_kind('name')]
                pcs.append((thread, states))
                if not self._accept(','):
                    break
            self._accept(';')
        if self._accept('where'):
            while True:
                leaf = self._unary()
                if not isinstance(leaf, _Name):
                    self._fail("goal constraint must name a register or address")
                self._expect('==')
                values.append((leaf, int(self._expect_kind('number').text)))
                if not self._accept(','):
                    break
            self._accept(';')
        self._expect('}')
        return pcs, values

    # -- name resolution ------------------------------------------------------

    def _resolve(self, size: int, declared: List[str], raw_threads: List[_RawThread],
                 raw_pcs, raw_values) -> Program:
        registers: Dict[str, List[str]] = {}
        for raw in raw_threads:
            regs = registers.setdefault(raw.name, [])
            for inst in raw.body:
                if inst.cmd[0] in ('load', 'assign') and inst.cmd[1] not in regs:
                    regs.append(inst.cmd[1])

        addresses: List[str] = list(declared)
        diagnostics: List[Diagnostic] = []

        def symbol(leaf: _Name, thread: Optional[str]) -> Union[Reg, AddrRef]:
            if leaf.thread is not None:
                if thread is not None and leaf.thread != thread:
                    diagnostics.append(Diagnostic(
                        'cross-thread-register',
                        f"line {leaf.line}: {leaf.name}@{leaf.thread} used in thread {thread}"))
                    return Reg(leaf.name)
                if leaf.name not in registers.get(leaf.thread, []):
                    diagnostics.append(Diagnostic(
                        'unknown-register', f"line {leaf.line}: {leaf.name} is not a register of {leaf.thread}"))
                return Reg(leaf.name)
            if thread is not None and leaf.name in registers.get(thread, []):
                return Reg(leaf.name)
            for other, regs in registers.items():
                if leaf.name in regs:
                    if thread is None:
                        return Reg(leaf.name)
                    diagnostics.append(Diagnostic(
                        'cross-thread-register',
                        f"line {leaf.line}: register {leaf.name} of {other} used in thread {thread}"))
                    return Reg(leaf.name)
            if leaf.name not in addresses:
                addresses.append(leaf.name)
            return AddrRef(leaf.name, addresses.index(leaf.name))

        def expr(node, thread: str) -> Expr:
            if isinstance(node, _Name):
                return symbol(node, thread)
            if isinstance(node, BinOp):
                return BinOp(node.op, expr(node.left, thread), expr(node.right, thread))
            if isinstance(node, Not):
                return Not(expr(node.operand, thread))
            return node

        def command(raw: tuple, thread: str) -> Command:
            kind = raw[0]
            if kind == 'load':
                return Load(raw[1], expr(raw[2], thread))
            if kind == 'store':
                return Store(expr(raw[1], thread), expr(raw[2], thread))
            if kind == 'mfence':
                return Mfence()
            if kind == 'assume':
                return Assume(expr(raw[1], thread))
            return Assign(raw[1], expr(raw[2], thread))

        threads = []
        seen_threads: List[str] = []
        for raw in raw_threads:
            if raw.name in seen_threads:
                raise ProgramSyntaxError(f"duplicate thread {raw.name}", raw.line, raw.column)
            seen_threads.append(raw.name)
            instructions = []
            for index, inst in enumerate(raw.body):
                src = qualify(raw.name, inst.src)
                dst = qualify(raw.name, inst.dst)
                instructions.append(Instruction(
                    id=inst.attrs.get('id', default_instruction_id(raw.name, src, dst, index)),
                    thread=raw.name, src=src, cmd=command(inst.cmd, raw.name), dst=dst,
                    origin=inst.attrs.get('origin')))
            threads.append(make_thread(raw.name, qualify(raw.name, raw.init), instructions))

        pcs = []
        for thread_token, state_tokens in raw_pcs:
            if any(name == thread_token.text for name, _ in pcs):
                raise ProgramSyntaxError(f"thread {thread_token.text} constrained twice in goal",
                                         thread_token.line, thread_token.column)
            pcs.append((thread_token.text,
                        tuple(qualify(thread_token.text, tok.text) for tok in state_tokens)))
        values = []
        for leaf, value in raw_values:
            resolved = symbol(leaf, None)
            values.append((resolved.name, value))

        if diagnostics:
            raise ProgramValidationError(diagnostics)
        return Program(domain=DomainConfig(size), addresses=tuple(addresses),
                       threads=tuple(threads), goal=GoalSpec(pcs=tuple(pcs), values=tuple(values)))


def parse(text: str) -> Program:
    """Parse program text (see ProgramParser.parse)"""
    return ProgramParser().parse(text)


def load_program(path: Union[str, Path]) -> Program:
    """Read and parse a program file"""
    text = Path(path).read_text(encoding='utf-8')
    return parse(text)


def print_program(program: Program) -> str:
    """
    Render a program in canonical concrete syntax

    Args:
        program: any valid program

    Returns:
        str: text that parses back to an identical Program
    """
    lines = [f"domain {program.domain.size};"]
    if program.addresses:
        lines.append(f"addresses {', '.join(program.addresses)};")
    for thread in program.threads:
        lines.append(f"thread {thread.name} {{")
        lines.append(f"  init {local_name(thread.init)};")
        for index, inst in enumerate(thread.instructions):
            attrs = []
            if inst.id != default_instruction_id(thread.name, inst.src, inst.dst, index):
                attrs.append(f"id={inst.id}")
            if inst.origin is not None:
                attrs.append(f"origin={inst.origin}")
            suffix = f" [{', '.join(attrs)}]" if attrs else ""
            lines.append(f"  {local_name(inst.src)} -> {local_name(inst.dst)} : "
                         f"{command_text(inst.cmd)}{suffix};")
        lines.append("}")

    goal = program.goal
    if goal.pcs or goal.values:
        parts = []
        if goal.pcs:
            pcs = []
            for name, states in goal.pcs:
                locals_ = [local_name(state) for state in states]
                target = locals_[0] if len(locals_) == 1 else "{" + ", ".join(locals_) + "}"
                pcs.append(f"{name} @ {target}")
            parts.append(", ".join(pcs) + ";")
        if goal.values:
            parts.append("where " + ", ".join(f"{sym} == {val}" for sym, val in goal.values) + ";")
        lines.append(f"goal {{ {' '.join(parts)} }}")
    return "\n".join(lines) + "\n"

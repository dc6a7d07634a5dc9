"""
Lazy TSO - Errors
Exception hierarchy shared by the checker, the oracle and the command line
"""

from typing import List, Optional


class LazyTsoError(Exception):
    """Base class for every error raised by the checker"""


class ProgramSyntaxError(LazyTsoError):
    """Raised when program text cannot be parsed"""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})")


class ProgramValidationError(LazyTsoError):
    """Raised when a program violates a structural invariant"""

    def __init__(self, diagnostics: List[object]):
        self.diagnostics = list(diagnostics)
        joined = "; ".join(str(d) for d in self.diagnostics)
        super().__init__(f"invalid program: {joined}")


class BudgetExhausted(LazyTsoError):
    """Raised when an exploration hits its state budget before deciding"""

    def __init__(self, states_explored: int, budget: int):
        self.states_explored = states_explored
        self.budget = budget
        super().__init__(f"state budget {budget} exhausted after {states_explored} states")


class UnboundedBufferError(LazyTsoError):
    """Raised for direct TSO exploration of a cyclic program without a buffer bound"""


class BoundExhausted(LazyTsoError):
    """Raised when a bounded witness search ends inconclusive"""

    def __init__(self, bound: int):
        self.bound = bound
        super().__init__(f"witness search inconclusive within bound {bound}")


class OracleContractError(LazyTsoError):
    """Raised when an instruction sequence is not a fence-free store...load chain"""


class ExtensionError(LazyTsoError):
    """Raised when a program cannot be extended by a sequence"""


class ReplayError(LazyTsoError):
    """Raised when an event sequence is not a computation of the program"""


class HbError(LazyTsoError):
    """Raised for malformed computations (e.g. a flush without its store)"""


class ProjectionError(LazyTsoError):
    """Raised when projecting an instruction id the map does not know"""


class CorpusError(LazyTsoError):
    """Raised for unreadable corpus entries or missing sidecars"""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(message if path is None else f"{path}: {message}")

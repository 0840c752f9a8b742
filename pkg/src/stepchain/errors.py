"""Exception types shared across the package.

Everything raised on purpose derives from StepChainError so callers can
catch domain failures without swallowing programming errors.
"""
from __future__ import annotations


class StepChainError(Exception):
    """Base class for all failures this package raises deliberately."""


# --- trace construction ---


class IndexMismatch(StepChainError):
    """A state was appended out of order."""


class AlreadyTerminal(StepChainError):
    """A terminal trace cannot grow further."""


class ForwardReference(StepChainError):
    """A step referenced itself, a later step, or a step that cannot exist."""


# --- response parsing ---


class MalformedResponse(StepChainError):
    """No usable step block could be recovered from model output."""

    def __init__(self, message: str, *, trace=None, llm_calls: int = 0) -> None:
        super().__init__(message)
        self.trace = trace
        self.llm_calls = llm_calls


# --- graph ---


class EmptyTrace(StepChainError):
    """A graph needs at least one step."""


# --- action execution ---


class DuplicateToolName(StepChainError):
    """Two tool bindings may not share a name."""


class UnresolvedReference(StepChainError):
    """A '#j' placeholder cited a step whose result is not available."""


class ToolFailure(StepChainError):
    """A tool handler raised; carries the tool name and the underlying message."""

    def __init__(self, name: str, message: str) -> None:
        super().__init__(f"tool {name!r} failed: {message}")
        self.name = name
        self.message = message


class CalculatorError(StepChainError):
    """Base class for calculator failures."""


class ParseError(CalculatorError):
    """The expression does not conform to the calculator grammar."""


class DivisionByZero(CalculatorError):
    """Division (or a power that implies one) by zero."""


# --- backends ---


class BackendError(StepChainError):
    """The live endpoint failed after retries or returned a bad payload."""

    def __init__(self, status: int | None, message: str) -> None:
        super().__init__(f"backend error (status={status}): {message}")
        self.status = status
        self.message = message


class NoScriptMatch(StepChainError):
    """No scripted rule matched the prompt."""


class AuthMissing(StepChainError):
    """Live mode requires a credential and none was found."""


class NotScriptedBackend(StepChainError):
    """Script rules can only be added to a scripted backend."""


# --- solve loop ---


class EmptyCandidateSet(StepChainError):
    """Voting requires at least one candidate."""


class SolveError(StepChainError):
    """A solve run stopped without an answer; carries the partial trace."""

    def __init__(self, message: str, *, trace=None, llm_calls: int = 0) -> None:
        super().__init__(message)
        self.trace = trace
        self.llm_calls = llm_calls


class BudgetExhausted(SolveError):
    """The per-step sampling budget ran out before a state was accepted."""


class MaxStepsExceeded(SolveError):
    """The step cap was reached without a final answer."""


# --- benchmark / io / config ---


class SchemaError(StepChainError):
    """A dataset or trace file record does not match its expected shape."""

    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class Unnormalizable(StepChainError):
    """An answer string has no canonical form under the given answer type."""


class ConfigError(StepChainError):
    """A configuration value violates an invariant."""

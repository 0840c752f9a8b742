"""Action execution: tool dispatch, reference substitution, calculator.

A step's description may cite earlier results as "#j"; before anything
executes, every citation is substituted with the cited step's intermediate
result, so no partially substituted text ever reaches a handler. If a
registered tool claims the (action, resolved description) pair, its handler
produces the result and no evidence; otherwise the backend completes the
step and must supply both evidence and result.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import (
    ROUND_HALF_EVEN,
    Decimal,
    DecimalException,
    InvalidOperation,
    Overflow,
    localcontext,
)
from decimal import DivisionByZero as _DecimalDivisionByZero
from typing import Callable

from .answers import format_decimal
from .core import _REFERENCE_RE, ActionKind, NAMED_ACTIONS, Trace
from .errors import (
    CalculatorError,
    DivisionByZero,
    DuplicateToolName,
    MalformedResponse,
    ParseError,
    ToolFailure,
    UnresolvedReference,
)
from .parsing import _scan_blocks
from .prompting import render_environment, render_system_prompt

COMPLETE_STEP_DIRECTIVE = (
    "Complete the step above by adding its Evidence and Result lines."
)

# Sampling stops here when the backend is asked for a single step.
NEXT_STEP_STOP: tuple[str, ...] = ("\nStep ",)


@dataclass(frozen=True)
class ToolBinding:
    """A named tool: a match predicate and a handler from text to result."""

    name: str
    matcher: Callable[[ActionKind, str], bool]
    handler: Callable[[str], str]


class ToolRegistry:
    """Ordered tool bindings; the earliest matching binding wins."""

    def __init__(self) -> None:
        self._bindings: list[ToolBinding] = []

    def register(self, binding: ToolBinding) -> None:
        if any(b.name == binding.name for b in self._bindings):
            raise DuplicateToolName(f"tool {binding.name!r} is already registered")
        self._bindings.append(binding)

    def find(self, action: ActionKind, description: str) -> ToolBinding | None:
        for binding in self._bindings:
            if binding.matcher(action, description):
                return binding
        return None

    def names(self) -> tuple[str, ...]:
        return tuple(b.name for b in self._bindings)

    def __len__(self) -> int:
        return len(self._bindings)


@dataclass(frozen=True)
class ExecutionOutcome:
    """What executing one action produced.

    Tool executions carry no evidence (the tool name stands in for it);
    model executions must carry evidence.
    """

    result: str
    evidence: str | None
    tool_name: str | None = None

    def __post_init__(self) -> None:
        if (self.evidence is None) != (self.tool_name is not None):
            raise ValueError("evidence must be absent exactly for tool executions")


def resolve_references(description: str, trace: Trace) -> str:
    """Substitute every "#j" with step j's intermediate result.

    Raises UnresolvedReference when a cited step does not exist in the
    trace or recorded no result.
    """

    def replace(m: re.Match[str]) -> str:
        j = int(m.group(1))
        if j < 1 or j > len(trace.states):
            raise UnresolvedReference(f"#{j} cites a step that does not exist yet")
        result = trace.states[j - 1].intermediate_result
        if not result:
            raise UnresolvedReference(f"#{j} cites a step with no recorded result")
        return result

    return _REFERENCE_RE.sub(replace, description)


def run_tool(binding: ToolBinding, resolved_description: str) -> str:
    """Invoke a handler, folding any failure into ToolFailure."""
    try:
        return binding.handler(resolved_description)
    except ToolFailure:
        raise
    except Exception as exc:
        raise ToolFailure(binding.name, str(exc)) from exc


def _parse_evidence_result(text: str) -> tuple[str, str]:
    blocks = _scan_blocks(text)
    for block in blocks:
        if "evidence" in block or "result" in block:
            return block.get("evidence", "").rstrip(), block.get("result", "").rstrip()
    raise MalformedResponse("completion carries neither Evidence nor Result")


def execute_action(
    action: ActionKind,
    description: str,
    trace: Trace,
    registry: ToolRegistry | None = None,
    backend=None,
) -> ExecutionOutcome:
    """Execute one action against tools first, the backend otherwise."""
    if not description:
        raise ValueError("description must be non-empty")
    resolved = resolve_references(description, trace)
    if registry is not None:
        binding = registry.find(action, resolved)
        if binding is not None:
            return ExecutionOutcome(
                result=run_tool(binding, resolved),
                evidence=None,
                tool_name=binding.name,
            )
    if backend is None:
        raise ValueError("no tool matched and no backend was provided")
    # Deferred import: the backend module has no business being loaded for
    # pure tool dispatch.
    from .backend import GenerationRequest

    prompt = "\n\n".join(
        [
            render_system_prompt([k.value for k in NAMED_ACTIONS]),
            render_environment(trace),
            f"Step {trace.next_index}:\nAction: {action.value}\n"
            f"Description: {description}",
            COMPLETE_STEP_DIRECTIVE,
        ]
    )
    texts = backend.generate(
        GenerationRequest(prompt=prompt, n_samples=1, stop_sequences=NEXT_STEP_STOP)
    )
    evidence, result = _parse_evidence_result(texts[0])
    return ExecutionOutcome(result=result, evidence=evidence, tool_name=None)


# --- calculator ---

_TOKEN_RE = re.compile(r"\s*(?:(\d+\.\d+|\d+|\.\d+)|([-+*/^()]))")

# Division is pinned to 12 significant digits; everything else runs at a
# precision wide enough to keep small-operand arithmetic exact.
_DIVISION_PRECISION = 12
_WORK_PRECISION = 64


def _tokenize(expression: str) -> list[str]:
    tokens: list[str] = []
    pos = 0
    while pos < len(expression):
        if expression[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(expression, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {expression[pos]!r} at {pos}")
        tokens.append(m.group(1) or m.group(2))
        pos = m.end()
    return tokens


class _Parser:
    """Recursive descent over the token list.

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?        right-associative
    atom   := NUMBER | '(' expr ')'
    """

    def __init__(self, tokens: list[str]) -> None:
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        token = self.peek()
        if token is None:
            raise ParseError("unexpected end of expression")
        self.pos += 1
        return token

    def expr(self) -> Decimal:
        value = self.term()
        while self.peek() in ("+", "-"):
            if self.take() == "+":
                value = value + self.term()
            else:
                value = value - self.term()
        return value

    def term(self) -> Decimal:
        value = self.unary()
        while self.peek() in ("*", "/"):
            if self.take() == "*":
                value = value * self.unary()
            else:
                value = _divide(value, self.unary())
        return value

    def unary(self) -> Decimal:
        if self.peek() == "-":
            self.take()
            return -self.unary()
        return self.power()

    def power(self) -> Decimal:
        base = self.atom()
        if self.peek() == "^":
            self.take()
            return base ** self.unary()
        return base

    def atom(self) -> Decimal:
        token = self.take()
        if token == "(":
            value = self.expr()
            if self.peek() != ")":
                raise ParseError("missing closing parenthesis")
            self.take()
            return value
        if token and (token[0].isdigit() or token[0] == "."):
            return Decimal(token)
        raise ParseError(f"unexpected token {token!r}")


def _divide(a: Decimal, b: Decimal) -> Decimal:
    if b == 0:
        raise DivisionByZero(f"division of {a} by zero")
    with localcontext() as ctx:
        ctx.prec = _DIVISION_PRECISION
        ctx.rounding = ROUND_HALF_EVEN
        return a / b


def calculator_eval(expression: str) -> Decimal:
    """Evaluate an arithmetic expression under the small fixed grammar."""
    tokens = _tokenize(expression)
    if not tokens:
        raise ParseError("empty expression")
    parser = _Parser(tokens)
    try:
        with localcontext() as ctx:
            ctx.prec = _WORK_PRECISION
            ctx.rounding = ROUND_HALF_EVEN
            value = parser.expr()
    except _DecimalDivisionByZero as exc:
        raise DivisionByZero(str(exc)) from exc
    except (InvalidOperation, Overflow) as exc:
        raise CalculatorError(f"undefined operation in {expression!r}") from exc
    except DecimalException as exc:  # pragma: no cover - defensive
        raise CalculatorError(str(exc)) from exc
    if parser.peek() is not None:
        raise ParseError(f"trailing input at token {parser.peek()!r}")
    return value


_TASK_PHRASE_RE = re.compile(
    r"^\s*(?:please\s+)?(?:compute|calculate|evaluate|eval|find|solve|"
    r"work\s+out|what\s+is|what's|the\s+result\s+of|result\s+of|"
    r"the\s+value\s+of|value\s+of)\b[:\s]*",
    re.IGNORECASE,
)


def strip_task_phrase(description: str) -> str:
    """Peel a leading verb phrase and trailing chatter off a description."""
    text = _TASK_PHRASE_RE.sub("", description.strip())
    return text.rstrip(" \t?.=")


def _parses_as_expression(text: str) -> bool:
    try:
        calculator_eval(text)
    except DivisionByZero:
        # It parsed; it just cannot be evaluated.
        return True
    except CalculatorError:
        return False
    return True


def calculator_binding() -> ToolBinding:
    """The default calculator tool.

    Matches Arithmetic steps whose resolved description, minus a leading
    verb phrase, conforms to the expression grammar.
    """

    def matcher(action: ActionKind, description: str) -> bool:
        if action is not ActionKind.ARITHMETIC:
            return False
        candidate = strip_task_phrase(description)
        return bool(candidate) and _parses_as_expression(candidate)

    def handler(description: str) -> str:
        return format_decimal(calculator_eval(strip_task_phrase(description)))

    return ToolBinding(name="calculator", matcher=matcher, handler=handler)


def default_registry() -> ToolRegistry:
    registry = ToolRegistry()
    registry.register(calculator_binding())
    return registry

"""Core value types for step-wise reasoning traces.

A trace accumulates enriched states: each state records the action taken,
a description of it, the evidence behind it, and its intermediate result.
States may cite earlier steps with "#j" placeholders; those citations are
what later induces the reasoning graph. All types here are immutable.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum

from .errors import AlreadyTerminal, ConfigError, ForwardReference, IndexMismatch

# Marker that closes a reasoning trace. Matched case-insensitively, and the
# longer "Therefore, the final answer is" phrasing contains it unchanged.
FINAL_ANSWER_MARKER = "the final answer is"

# "#3" or "# 3": at most one space between the hash and the digits. The
# parenthesized "(# 3)" form contains this pattern, so one regex covers both.
_REFERENCE_RE = re.compile(r"#[ ]?(\d+)")


class ActionKind(Enum):
    """The closed action vocabulary: 15 named actions plus Unspecified.

    Unspecified is the legal fallback when a model supplies only a
    description without choosing an action.
    """

    SELECT = "Select"
    FILTER = "Filter"
    PROJECT = "Project"
    AGGREGATE = "Aggregate"
    GROUP = "Group"
    SUPERLATIVE = "Superlative"
    COMPARATIVE = "Comparative"
    UNION = "Union"
    INTERSECTION = "Intersection"
    DISCARD = "Discard"
    SORT = "Sort"
    BOOLEAN = "Boolean"
    ARITHMETIC = "Arithmetic"
    DESCRIBE = "Describe"
    EVALUATE = "Evaluate"
    UNSPECIFIED = "Unspecified"

    @classmethod
    def parse(cls, name: str) -> "ActionKind":
        """Match a kind by exact name, ignoring case. Unknown names raise."""
        wanted = name.strip().casefold()
        for kind in cls:
            if kind.value.casefold() == wanted:
                return kind
        raise ValueError(f"unknown action kind: {name!r}")


# The names a model is told about; Unspecified is a fallback, not a choice.
NAMED_ACTIONS: tuple[ActionKind, ...] = tuple(
    kind for kind in ActionKind if kind is not ActionKind.UNSPECIFIED
)


def parse_references(text: str) -> frozenset[int]:
    """Collect every step index cited as "#j" (or "(# j)") in the text."""
    return frozenset(int(m.group(1)) for m in _REFERENCE_RE.finditer(text))


@dataclass(frozen=True)
class StepState:
    """One enriched reasoning step.

    intermediate_evidence may be empty only for tool-executed steps; the
    model itself must always show its work.
    """

    index: int
    action: ActionKind
    action_description: str
    intermediate_evidence: str
    intermediate_result: str

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError(f"step index must be >= 1, got {self.index}")
        if not self.action_description:
            raise ValueError("action_description must be non-empty")

    def references(self) -> frozenset[int]:
        """Steps this one cites, scanned in description and evidence only."""
        return parse_references(self.action_description) | parse_references(
            self.intermediate_evidence
        )


@dataclass(frozen=True)
class Trace:
    """A question plus the states accreted so far.

    The environment for step i+1 is always the question followed by states
    1..i; growth happens only through append_state.
    """

    question: str
    states: tuple[StepState, ...] = ()
    final_answer: str | None = None

    @property
    def is_terminal(self) -> bool:
        return self.final_answer is not None

    @property
    def next_index(self) -> int:
        return len(self.states) + 1

    def with_final(self, answer: str) -> "Trace":
        if self.is_terminal:
            raise AlreadyTerminal("trace already carries a final answer")
        return replace(self, final_answer=answer)


def append_state(trace: Trace, state: StepState) -> Trace:
    """Extend a trace by one state, returning a new trace.

    Raises AlreadyTerminal on closed traces, IndexMismatch when the state
    does not continue the sequence, and ForwardReference when the state
    cites itself, a later step, or the out-of-range "#0".
    """
    if trace.is_terminal:
        raise AlreadyTerminal("cannot append to a terminal trace")
    if state.index != trace.next_index:
        raise IndexMismatch(
            f"expected step {trace.next_index}, got step {state.index}"
        )
    for j in sorted(state.references()):
        if j < 1 or j >= state.index:
            raise ForwardReference(
                f"step {state.index} references #{j}, which is not an earlier step"
            )
    return replace(trace, states=trace.states + (state,))


def extract_final_answer(text: str) -> str | None:
    """Pull the declared answer out of free text, if any.

    Finds the first case-insensitive occurrence of the termination marker
    and returns everything after it, trimmed of surrounding whitespace and
    trailing sentence punctuation. Absent marker means no answer.
    """
    pos = text.casefold().find(FINAL_ANSWER_MARKER)
    if pos < 0:
        return None
    tail = text[pos + len(FINAL_ANSWER_MARKER):]
    return tail.strip().rstrip(".!?").strip()


@dataclass(frozen=True)
class FinalAnswer:
    """The extracted answer with its canonical form and originating step."""

    raw: str
    canonical: str
    source_step: int


@dataclass(frozen=True)
class SolveConfig:
    """Knobs for a solve run.

    max_llm_calls is the per-step sampling budget; max_steps caps the trace
    length as a safety rail on top of it.
    """

    max_steps: int = 12
    max_llm_calls: int = 5
    vote_k: int = 3
    temperature: float = 1.0
    top_p: float = 1.0
    self_eval_enabled: bool = True
    ensemble_enabled: bool = True

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.vote_k < 1:
            raise ConfigError(f"vote_k must be >= 1, got {self.vote_k}")
        if self.max_llm_calls < self.vote_k:
            raise ConfigError(
                f"max_llm_calls ({self.max_llm_calls}) must cover one round of "
                f"vote_k samples ({self.vote_k})"
            )
        if not 0 < self.top_p <= 1:
            raise ConfigError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")

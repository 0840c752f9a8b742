"""Recover structured states from model output.

Parsing is lenient where models actually misbehave: "Step i:" headers may
be missing, field labels match case-insensitively and accept a couple of
common synonyms, and an unknown action name degrades to Unspecified as
long as a description is present. Strictness survives where it matters:
no state escapes with a forward or self reference, and text with no
recoverable description-bearing block is rejected outright.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .core import (
    FINAL_ANSWER_MARKER,
    ActionKind,
    StepState,
    Trace,
    extract_final_answer,
    parse_references,
)
from .errors import ForwardReference, MalformedResponse

__all__ = [
    "ParsedResponse",
    "parse_step",
    "parse_complete_remainder",
    "parse_environment",
    "parse_references",
]

_MARKER_RE = re.compile(re.escape(FINAL_ANSWER_MARKER), re.IGNORECASE)

# Canonical labels plus tolerated synonyms. A field line is "<label>: value".
_FIELD_ALIASES = {
    "action": "action",
    "act": "action",
    "description": "description",
    "desc": "description",
    "evidence": "evidence",
    "thought": "evidence",
    "result": "result",
}
_FIELD_RE = re.compile(
    r"^\s*(action|act|description|desc|evidence|thought|result)\s*:\s?(.*)$",
    re.IGNORECASE,
)
_STEP_HEADER_RE = re.compile(r"^\s*step\s+(\d+)\s*[:.]?\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class ParsedResponse:
    """One sample decomposed into the next state, lookahead, and answer.

    suggestive_final is present exactly when the sample contained the
    termination marker; remainder_states are the predicted steps beyond
    the first one.
    """

    first_state: StepState
    remainder_states: tuple[StepState, ...]
    suggestive_final: str | None


def _split_marker(text: str) -> tuple[str, str | None]:
    """Cut the text at the termination marker's line.

    Returns the step-block portion and the extracted answer (None when the
    marker is absent). The whole marker line is removed from the block
    portion so a leading "Therefore," never dangles in a field value.
    """
    m = _MARKER_RE.search(text)
    if m is None:
        return text, None
    line_start = text.rfind("\n", 0, m.start()) + 1
    return text[:line_start], extract_final_answer(text)


def _scan_blocks(body: str) -> list[dict[str, str]]:
    """Group the body's lines into field dictionaries, one per block.

    A new block opens at a "Step i:" header or when a field label repeats.
    Unlabeled lines continue the most recent field, which is how multi-line
    evidence survives; unlabeled text with no open field is chatter and is
    dropped.
    """
    blocks: list[dict[str, str]] = []
    current: dict[str, str] = {}
    open_field: str | None = None

    def close() -> None:
        nonlocal current, open_field
        if current:
            blocks.append(current)
        current = {}
        open_field = None

    for line in body.splitlines():
        if not line.strip():
            open_field = None
            continue
        if _STEP_HEADER_RE.match(line):
            close()
            continue
        field_match = _FIELD_RE.match(line)
        if field_match:
            name = _FIELD_ALIASES[field_match.group(1).casefold()]
            if name in current:
                close()
            current[name] = field_match.group(2)
            open_field = name
            continue
        if open_field is not None:
            current[open_field] = current[open_field] + "\n" + line
    close()
    return blocks


def _block_to_state(block: dict[str, str], index: int) -> StepState:
    """Turn one field dictionary into a validated StepState."""
    description = block["description"].rstrip()
    action_name = block.get("action", "").strip()
    try:
        action = ActionKind.parse(action_name) if action_name else ActionKind.UNSPECIFIED
    except ValueError:
        # Unknown action names are legal as long as the description stands.
        action = ActionKind.UNSPECIFIED
    evidence = block.get("evidence", "").rstrip()
    result = block.get("result", "").rstrip()
    state = StepState(
        index=index,
        action=action,
        action_description=description,
        intermediate_evidence=evidence,
        intermediate_result=result,
    )
    for j in sorted(state.references()):
        if j < 1 or j >= index:
            raise ForwardReference(
                f"step {index} references #{j}, which is not an earlier step"
            )
    return state


def _blocks_to_states(body: str, start_index: int) -> list[StepState]:
    usable = [b for b in _scan_blocks(body) if b.get("description", "").strip()]
    return [_block_to_state(b, start_index + i) for i, b in enumerate(usable)]


def parse_step(text: str, expected_index: int) -> ParsedResponse:
    """Parse a sample that must supply the next step.

    The first recovered block becomes the state at expected_index; any
    further blocks are kept as lookahead with consecutive indices. Raises
    MalformedResponse when no description-bearing block exists.
    """
    body, final = _split_marker(text)
    states = _blocks_to_states(body, expected_index)
    if not states:
        raise MalformedResponse(
            f"no step block with a description found for step {expected_index}"
        )
    return ParsedResponse(
        first_state=states[0],
        remainder_states=tuple(states[1:]),
        suggestive_final=final,
    )


def parse_complete_remainder(
    text: str, start_index: int
) -> tuple[list[StepState], str | None]:
    """Parse a continuation that may hold zero or more steps and an answer.

    Marker-only text yields no states and the answer; empty or label-free
    text yields nothing at all. Text that contains field labels but no
    usable block raises MalformedResponse.
    """
    body, final = _split_marker(text)
    states = _blocks_to_states(body, start_index)
    if not states:
        has_labels = any(
            _FIELD_RE.match(line) or _STEP_HEADER_RE.match(line)
            for line in body.splitlines()
        )
        if has_labels:
            raise MalformedResponse("step labels present but no block is usable")
    return states, final


def parse_environment(text: str) -> Trace:
    """Invert a rendered environment back into a trace.

    Expects the "Question: ..." first line produced by the renderer; the
    rest is parsed as a complete remainder starting at step 1.
    """
    first, _, rest = text.partition("\n")
    if not first.startswith("Question:"):
        raise MalformedResponse("environment text must start with 'Question: '")
    question = first[len("Question:"):].strip()
    states, final = parse_complete_remainder(rest, 1)
    return Trace(question=question, states=tuple(states), final_answer=final)

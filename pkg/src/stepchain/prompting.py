"""Prompt assembly: system instructions, demonstrations, and environments.

The environment is the accreted context a model keeps seeing: the original
question followed by every accepted step so far, rendered in the same
four-line block grammar the parser understands. Demonstrations are worked
examples in exactly that grammar.

The directive wording here is this package's own phrasing of the protocol;
only the block grammar, the action vocabulary, the "#j" reference notation,
and the termination marker are fixed contracts.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .core import ActionKind, Trace
from .errors import MalformedResponse
from .parsing import parse_complete_remainder


class RequestMode(Enum):
    """What the model is asked to produce next."""

    NEXT_STATE = "next_state"
    COMPLETE_REMAINDER = "complete_remainder"


NEXT_STATE_DIRECTIVE = (
    "Continue the reasoning for the question above. Produce exactly one next "
    "step as an Action, Description, Evidence, Result block, then stop."
)

COMPLETE_REMAINDER_DIRECTIVE = (
    "Continue the reasoning for the question above. Produce every remaining "
    "step as Action, Description, Evidence, Result blocks, and when the "
    "question is fully answered finish with a line in the form: Therefore, "
    "the final answer is <answer>."
)

_DIRECTIVES = {
    RequestMode.NEXT_STATE: NEXT_STATE_DIRECTIVE,
    RequestMode.COMPLETE_REMAINDER: COMPLETE_REMAINDER_DIRECTIVE,
}


@dataclass(frozen=True)
class Demonstration:
    """A worked example: a question and its full rendered trace.

    The trace text must parse under the step grammar and end with the
    termination marker; that is checked at construction.
    """

    question: str
    rendered_trace: str

    def __post_init__(self) -> None:
        states, final = parse_complete_remainder(self.rendered_trace, 1)
        if final is None:
            raise ValueError("a demonstration must end with the termination marker")
        if not states:
            raise ValueError("a demonstration must contain at least one step")


@dataclass(frozen=True)
class PromptBundle:
    """Everything a step request is assembled from.

    An empty directive means "use the default for the requested mode";
    a non-empty one overrides it.
    """

    system: str
    demonstrations: tuple[Demonstration, ...]
    environment: str
    directive: str = ""

    def __post_init__(self) -> None:
        if not self.environment.startswith("Question:"):
            raise ValueError("environment must begin with the original question")


def render_system_prompt(action_names: tuple[str, ...] | list[str]) -> str:
    """Build the standing instruction text.

    Lists the given action names verbatim (deduplicated, order preserved),
    mandates the four-line block grammar, and states the termination marker.
    """
    if not action_names:
        raise ValueError("action_names must be non-empty")
    names = list(dict.fromkeys(action_names))
    listing = ", ".join(names)
    return (
        "You solve problems one step at a time, building on the question and "
        "on what earlier steps established.\n"
        "At each step respond with exactly these four lines:\n"
        "Action: <one name from the list below>\n"
        "Description: <what this step does>\n"
        "Evidence: <the reasoning that supports the result>\n"
        "Result: <the outcome of this step>\n"
        "\n"
        f"Available actions: {listing}\n"
        "\n"
        "If no listed action fits, write Unspecified as the action and still "
        "give a detailed description. Cite an earlier step by writing #j, "
        "where j is its step number. When the question is fully answered, "
        "finish with a line in the form: Therefore, the final answer is "
        "<answer>."
    )


def _render_block(index: int, action: ActionKind, description: str,
                  evidence: str, result: str) -> str:
    lines = [f"Step {index}:", f"Action: {action.value}"]
    lines.append(f"Description: {description}" if description else "Description:")
    lines.append(f"Evidence: {evidence}" if evidence else "Evidence:")
    lines.append(f"Result: {result}" if result else "Result:")
    return "\n".join(lines)


def render_environment(trace: Trace) -> str:
    """Render the accreted context: question, step blocks, optional answer.

    Blocks are separated by one blank line. A non-terminal rendering is a
    strict prefix of the rendering after one more state is appended.
    """
    parts = [f"Question: {trace.question}"]
    for s in trace.states:
        parts.append(
            _render_block(
                s.index,
                s.action,
                s.action_description,
                s.intermediate_evidence,
                s.intermediate_result,
            )
        )
    if trace.final_answer is not None:
        parts.append(f"Therefore, the final answer is {trace.final_answer}.")
    return "\n\n".join(parts)


def render_step_request(bundle: PromptBundle, mode: RequestMode) -> str:
    """Assemble the full prompt: system, demonstrations, environment, directive."""
    sections: list[str] = []
    if bundle.system:
        sections.append(bundle.system)
    for demo in bundle.demonstrations:
        sections.append(f"Question: {demo.question}\n{demo.rendered_trace}")
    sections.append(bundle.environment)
    sections.append(bundle.directive or _DIRECTIVES[mode])
    return "\n\n".join(sections)


def load_demonstration(path: str | Path) -> Demonstration:
    """Read one demonstration from a plain-text file.

    The first line must be "Question: ..."; everything after it is the
    rendered trace.
    """
    text = Path(path).read_text(encoding="utf-8")
    first, _, rest = text.partition("\n")
    if not first.startswith("Question:"):
        raise MalformedResponse(
            f"{path}: demonstration files must start with 'Question: '"
        )
    return Demonstration(
        question=first[len("Question:"):].strip(),
        rendered_trace=rest.strip("\n"),
    )


def load_demonstrations(paths: list[str | Path]) -> tuple[Demonstration, ...]:
    return tuple(load_demonstration(p) for p in paths)


_COUNT_DEMO = Demonstration(
    question=(
        "A basket holds 12 red apples and 9 green apples. Three apples are "
        "eaten. How many apples are left?"
    ),
    rendered_trace=(
        "Step 1:\n"
        "Action: Arithmetic\n"
        "Description: Count how many apples the basket holds at the start\n"
        "Evidence: The basket holds 12 red apples and 9 green apples. "
        "12 + 9 = 21\n"
        "Result: 21 apples\n"
        "\n"
        "Step 2:\n"
        "Action: Arithmetic\n"
        "Description: Remove the eaten apples from #1\n"
        "Evidence: The basket started with #1 and three apples are eaten. "
        "21 - 3 = 18\n"
        "Result: 18 apples\n"
        "\n"
        "Therefore, the final answer is 18."
    ),
)

_CHOICE_DEMO = Demonstration(
    question=(
        "Which of these is a fruit? Answer Choices: (A) carrot (B) apple "
        "(C) potato"
    ),
    rendered_trace=(
        "Step 1:\n"
        "Action: Describe\n"
        "Description: Explain what each option is\n"
        "Evidence: A carrot is a root vegetable, an apple is the fruit of "
        "the apple tree, and a potato is a starchy tuber\n"
        "Result: only the apple is a fruit\n"
        "\n"
        "Step 2:\n"
        "Action: Select\n"
        "Description: Pick the option that matches #1\n"
        "Evidence: Based on #1, the option naming a fruit is (B) apple\n"
        "Result: (B)\n"
        "\n"
        "Therefore, the final answer is (B)."
    ),
)

# Generic worked examples used when a caller supplies none of its own.
DEFAULT_DEMONSTRATIONS: tuple[Demonstration, ...] = (_COUNT_DEMO, _CHOICE_DEMO)

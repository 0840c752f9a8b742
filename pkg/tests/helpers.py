"""Builders and generators shared across the test modules."""

from __future__ import annotations

import random
from pathlib import Path

from stepchain import (
    ActionKind,
    GenerationRequest,
    MatcherKind,
    ScriptRule,
    ScriptedBackend,
    StepState,
    Trace,
    append_state,
)

FIXTURES = Path(__file__).parent / "fixtures"

APPENDIX_QUESTION = (
    "A car travels 150 miles in the morning and 70 miles in the afternoon. "
    "After a stop it drives 10 more miles. "
    "How many miles did the car travel in total?"
)

APPENDIX_FULL_TEXT = """Step 1:
Action: Arithmetic
Description: Add the morning and afternoon distances
Evidence: The car travels 150 miles and then 70 miles. 150 + 70 = 220
Result: 220 miles

Step 2:
Action: Arithmetic
Description: Add the remaining 10 miles to #1
Evidence: The total so far is #1. 220 + 10 = 230
Result: 230 miles

Therefore, the final answer is 230."""


def contains_rule(value: str, *responses: str) -> ScriptRule:
    return ScriptRule(
        kind=MatcherKind.CONTAINS, value=value, responses=tuple(responses)
    )


def script(*rules: ScriptRule) -> ScriptedBackend:
    return ScriptedBackend(list(rules))


class CountingBackend:
    """Wraps a backend and counts requests and samples passing through."""

    def __init__(self, inner):
        self.inner = inner
        self.requests = 0
        self.samples = 0

    def generate(self, request: GenerationRequest) -> list[str]:
        self.requests += 1
        self.samples += request.n_samples
        return self.inner.generate(request)


class SequenceBackend:
    """Serves texts strictly in order, cycling, ignoring the prompt.

    Useful for chaos-style tests where the reply stream matters but the
    prompt routing does not.
    """

    def __init__(self, texts: list[str]):
        if not texts:
            raise ValueError("SequenceBackend needs at least one text")
        self.texts = list(texts)
        self.served = 0

    def generate(self, request: GenerationRequest) -> list[str]:
        out = []
        for _ in range(request.n_samples):
            out.append(self.texts[self.served % len(self.texts)])
            self.served += 1
        return out


# --- random trace generation ---------------------------------------------
#
# The alphabet deliberately omits ':' and '#': field values then can never
# be mistaken for labels when re-parsed, and every reference token in a
# generated trace is one the generator placed on purpose.

_ALPHABET = (
    "abcdefghijklmnopqrstuvwxyz"
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    "0123456789"
    "  ,;'()+*-/=%$&."
)


def random_text(rng: random.Random, lo: int = 3, hi: int = 40) -> str:
    while True:
        raw = "".join(
            rng.choice(_ALPHABET) for _ in range(rng.randint(lo, hi))
        ).strip()
        if raw:
            return raw


def _with_references(rng: random.Random, text: str, index: int) -> str:
    if index <= 1 or rng.random() < 0.5:
        return text
    cited = rng.sample(range(1, index), rng.randint(1, index - 1))
    parts = [text]
    for j in cited:
        parts.append(rng.choice([f"#{j}", f"# {j}", f"(#{j})"]))
    return " ".join(parts)


def random_state(rng: random.Random, index: int) -> StepState:
    description = _with_references(rng, random_text(rng), index)
    roll = rng.random()
    if roll < 0.2:
        evidence = ""
    elif roll < 0.35:
        evidence = (
            _with_references(rng, random_text(rng), index)
            + "\n"
            + random_text(rng)
        )
    else:
        evidence = _with_references(rng, random_text(rng), index)
    result = random_text(rng) if rng.random() < 0.8 else ""
    return StepState(
        index=index,
        action=rng.choice(list(ActionKind)),
        action_description=description,
        intermediate_evidence=evidence,
        intermediate_result=result,
    )


def random_trace(rng: random.Random, terminal_prob: float = 0.5) -> Trace:
    trace = Trace(question=random_text(rng, 10, 60))
    for index in range(1, rng.randint(1, 6) + 1):
        trace = append_state(trace, random_state(rng, index))
    if rng.random() < terminal_prob:
        answer = random_text(rng).rstrip(".!?").strip()
        if answer:
            trace = trace.with_final(answer)
    return trace


# --- case-study traces ----------------------------------------------------

def case_chain() -> Trace:
    """Three sequential arithmetic steps, each building on the previous."""
    trace = Trace(question="A tank holds 40 liters, leaks 12, then gains 5. "
                           "How many liters remain?")
    steps = [
        (ActionKind.ARITHMETIC, "Subtract the leaked volume",
         "40 - 12 = 28", "28"),
        (ActionKind.ARITHMETIC, "Add the refill to #1",
         "Starting from #1, 28 + 5 = 33", "33"),
        (ActionKind.DESCRIBE, "State the remaining volume from #2",
         "The tank ends with #2 liters", "33 liters"),
    ]
    for i, (action, desc, ev, res) in enumerate(steps, start=1):
        trace = append_state(trace, StepState(
            index=i, action=action, action_description=desc,
            intermediate_evidence=ev, intermediate_result=res,
        ))
    return trace.with_final("33")


def case_option_merge() -> Trace:
    """Three independent option checks feeding one selection."""
    trace = Trace(question="Which container holds the most: a 2 liter jug, "
                           "a 1500 ml bottle, or a 0.5 liter flask?")
    steps = [
        (ActionKind.DESCRIBE, "Express the jug volume in milliliters",
         "2 liters is 2000 ml", "2000 ml"),
        (ActionKind.DESCRIBE, "Express the bottle volume in milliliters",
         "The bottle already reads 1500 ml", "1500 ml"),
        (ActionKind.DESCRIBE, "Express the flask volume in milliliters",
         "0.5 liters is 500 ml", "500 ml"),
        (ActionKind.SUPERLATIVE, "Pick the largest of #1, #2 and #3",
         "Comparing #1, #2 and #3, the jug is largest", "the jug"),
    ]
    for i, (action, desc, ev, res) in enumerate(steps, start=1):
        trace = append_state(trace, StepState(
            index=i, action=action, action_description=desc,
            intermediate_evidence=ev, intermediate_result=res,
        ))
    return trace.with_final("the jug")


def case_two_calcs_merge() -> Trace:
    """Two independent calculations combined by a third step."""
    trace = Trace(question="A crate weighs 3 kg empty. Apples add 4 kg and "
                           "pears add 6 kg. What is the fruit weight?")
    steps = [
        (ActionKind.ARITHMETIC, "Compute the apple weight in grams",
         "4 kg is 4000 grams", "4000"),
        (ActionKind.ARITHMETIC, "Compute the pear weight in grams",
         "6 kg is 6000 grams", "6000"),
        (ActionKind.ARITHMETIC, "Add #1 and #2",
         "4000 + 6000 = 10000", "10000 grams"),
    ]
    for i, (action, desc, ev, res) in enumerate(steps, start=1):
        trace = append_state(trace, StepState(
            index=i, action=action, action_description=desc,
            intermediate_evidence=ev, intermediate_result=res,
        ))
    return trace.with_final("10000 grams")

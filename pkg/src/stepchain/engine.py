"""The solve loop: ensemble sampling, vote cascade, self-evaluation.

Each step asks the backend for the complete remaining reasoning, keeps
only the first predicted state, and uses the rest as a termination signal.
With the ensemble on, vote_k samples compete under a three-level cascade:
declared final answers first, then intermediate results, then actions.
With self-evaluation on, the freshly appended state is judged by the
model itself; a rejection discards it and triggers a full re-vote, paid
for out of the same per-step budget.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum

from .answers import auto_canonical, vote_keys
from .backend import Backend, GenerationRequest
from .core import (
    ActionKind,
    FinalAnswer,
    NAMED_ACTIONS,
    SolveConfig,
    StepState,
    Trace,
    append_state,
    extract_final_answer,
)
from .errors import (
    BudgetExhausted,
    EmptyCandidateSet,
    ForwardReference,
    MalformedResponse,
    MaxStepsExceeded,
    ToolFailure,
    UnresolvedReference,
)
from .execution import ToolRegistry, resolve_references, run_tool
from .parsing import ParsedResponse, parse_step
from .prompting import (
    DEFAULT_DEMONSTRATIONS,
    Demonstration,
    PromptBundle,
    RequestMode,
    render_environment,
    render_step_request,
    render_system_prompt,
)

SELF_EVAL_QUESTION = "Is the current reasoning process reasonable?"

# Two unusable samples in a row within one step and the run is declared
# malformed rather than burning the rest of the budget.
_MALFORMED_STREAK_LIMIT = 2


class Verdict(Enum):
    REASONABLE = "reasonable"
    UNREASONABLE = "unreasonable"


@dataclass(frozen=True)
class CandidateResponse:
    """One parsed sample, flattened for voting."""

    sample_id: int
    parsed: ParsedResponse
    action: ActionKind
    intermediate_result: str
    suggestive_final: str | None

    def __post_init__(self) -> None:
        if self.action is not self.parsed.first_state.action:
            raise ValueError("action must mirror the parsed first state")
        if self.intermediate_result != self.parsed.first_state.intermediate_result:
            raise ValueError("intermediate_result must mirror the parsed first state")
        if self.suggestive_final != self.parsed.suggestive_final:
            raise ValueError("suggestive_final must mirror the parsed response")

    @classmethod
    def from_parsed(cls, sample_id: int, parsed: ParsedResponse) -> "CandidateResponse":
        return cls(
            sample_id=sample_id,
            parsed=parsed,
            action=parsed.first_state.action,
            intermediate_result=parsed.first_state.intermediate_result,
            suggestive_final=parsed.suggestive_final,
        )


@dataclass(frozen=True)
class SolveResult:
    trace: Trace
    final_answer: FinalAnswer
    llm_calls_used: int
    regenerations: int


def _strict_majority_members(
    members: list[CandidateResponse], keys: list[str]
) -> list[CandidateResponse]:
    """Members of the strictly-majority key class, or empty when none."""
    counts = Counter(keys)
    key, count = counts.most_common(1)[0]
    if count * 2 > len(members):
        return [m for m, k in zip(members, keys) if k == key]
    return []


def vote(candidates: list[CandidateResponse]) -> CandidateResponse:
    """Pick a winner by the layered consistency vote.

    Level 1: strict majority over canonical final answers, among the
    candidates that declared one. Level 2: strict majority over canonical
    intermediate results, over everyone. Level 3: plurality over actions,
    ties broken by the lowest sample id. Within the winning class the
    lowest sample id is returned, which keeps the vote deterministic and
    order-independent.
    """
    if not candidates:
        raise EmptyCandidateSet("vote() needs at least one candidate")

    with_finals = [c for c in candidates if c.suggestive_final is not None]
    if with_finals:
        winners = _strict_majority_members(
            with_finals, vote_keys([c.suggestive_final or "" for c in with_finals])
        )
        if winners:
            return min(winners, key=lambda c: c.sample_id)

    winners = _strict_majority_members(
        candidates, vote_keys([c.intermediate_result for c in candidates])
    )
    if winners:
        return min(winners, key=lambda c: c.sample_id)

    by_action = Counter(c.action for c in candidates)
    best = max(by_action.values())
    tied = [c for c in candidates if by_action[c.action] == best]
    return min(tied, key=lambda c: c.sample_id)


def self_evaluate(trace: Trace, state: StepState, backend: Backend) -> Verdict:
    """Ask the model whether the trace, as it now stands, is reasonable.

    The first alphabetic token of the reply decides: yes means reasonable,
    no means unreasonable, and anything else counts as reasonable.
    """
    if not trace.states or trace.states[-1] != state:
        raise ValueError("state must be the most recently appended state")
    prompt = f"{render_environment(trace)}\n\n{SELF_EVAL_QUESTION}"
    reply = backend.generate(GenerationRequest(prompt=prompt, n_samples=1))[0]
    first_word = re.search(r"[A-Za-z]+", reply)
    if first_word is not None and first_word.group().casefold() == "no":
        return Verdict.UNREASONABLE
    return Verdict.REASONABLE


def _majority_final(finals: list[str]) -> str:
    """Most common final answer under vote keys; earliest wins a tie."""
    keys = vote_keys(finals)
    counts = Counter(keys)
    best = max(counts.values())
    for raw, key in zip(finals, keys):
        if counts[key] == best:
            return raw
    return finals[0]


def _finish(
    trace: Trace, raw_answer: str, llm_calls: int, regenerations: int
) -> SolveResult:
    closed = trace.with_final(raw_answer)
    answer = FinalAnswer(
        raw=raw_answer,
        canonical=auto_canonical(raw_answer),
        source_step=len(trace.states),
    )
    return SolveResult(
        trace=closed,
        final_answer=answer,
        llm_calls_used=llm_calls,
        regenerations=regenerations,
    )


def solve(
    question: str,
    config: SolveConfig,
    backend: Backend,
    registry: ToolRegistry | None = None,
    demonstrations: tuple[Demonstration, ...] = DEFAULT_DEMONSTRATIONS,
    *,
    max_tokens: int = 1024,
) -> SolveResult:
    """Run the full loop for one question.

    Per step: sample (vote_k candidates with the ensemble on, one
    otherwise), vote, let a matching tool overwrite the winner's evidence
    and result, append, self-evaluate if enabled, and stop once the winning
    sample showed the appended state was the last one. llm_calls_used
    counts generation samples; self-evaluation queries are budgeted
    separately, bounded by one per sampling round.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")

    system = render_system_prompt([k.value for k in NAMED_ACTIONS])
    trace = Trace(question=question)
    gen_calls = 0
    regenerations = 0
    sample_counter = 0

    for step_index in range(1, config.max_steps + 1):
        spent_this_step = 0
        malformed_streak = 0

        while True:
            k = config.vote_k if config.ensemble_enabled else 1
            if spent_this_step + k > config.max_llm_calls:
                raise BudgetExhausted(
                    f"step {step_index} used its {config.max_llm_calls}-sample "
                    "budget without an accepted state",
                    trace=trace,
                    llm_calls=gen_calls,
                )
            prompt = render_step_request(
                PromptBundle(
                    system=system,
                    demonstrations=demonstrations,
                    environment=render_environment(trace),
                ),
                RequestMode.COMPLETE_REMAINDER,
            )
            texts = backend.generate(
                GenerationRequest(
                    prompt=prompt,
                    n_samples=k,
                    temperature=config.temperature,
                    top_p=config.top_p,
                    max_tokens=max_tokens,
                )
            )
            spent_this_step += k
            gen_calls += k

            candidates: list[CandidateResponse] = []
            terminal_finals: list[str] = []
            for text in texts:
                sample_id = sample_counter
                sample_counter += 1
                try:
                    parsed = parse_step(text, step_index)
                except (MalformedResponse, ForwardReference):
                    final = extract_final_answer(text)
                    if final is not None:
                        # No step block, but a declared answer: the sample
                        # says the reasoning is already complete.
                        terminal_finals.append(final)
                        malformed_streak = 0
                        continue
                    malformed_streak += 1
                    if malformed_streak >= _MALFORMED_STREAK_LIMIT:
                        raise MalformedResponse(
                            f"step {step_index}: {malformed_streak} consecutive "
                            "unparseable samples",
                            trace=trace,
                            llm_calls=gen_calls,
                        )
                    continue
                malformed_streak = 0
                candidates.append(CandidateResponse.from_parsed(sample_id, parsed))

            if not candidates:
                if terminal_finals:
                    return _finish(
                        trace, _majority_final(terminal_finals), gen_calls,
                        regenerations,
                    )
                regenerations += 1
                continue

            winner = vote(candidates)
            state = winner.parsed.first_state

            if registry is not None:
                state = _apply_tool(state, trace, registry)

            candidate_trace = append_state(trace, state)

            if config.self_eval_enabled:
                verdict = self_evaluate(candidate_trace, state, backend)
                if verdict is Verdict.UNREASONABLE:
                    regenerations += 1
                    continue

            trace = candidate_trace
            if winner.suggestive_final is not None and not winner.parsed.remainder_states:
                return _finish(
                    trace, winner.suggestive_final, gen_calls, regenerations
                )
            break

    raise MaxStepsExceeded(
        f"no final answer within {config.max_steps} steps",
        trace=trace,
        llm_calls=gen_calls,
    )


def _apply_tool(
    state: StepState, trace: Trace, registry: ToolRegistry
) -> StepState:
    """Let a matching tool overwrite a sampled state's evidence and result.

    Unresolvable references or a failing handler leave the sampled fields
    in place; the model's own execution then stands.
    """
    try:
        resolved = resolve_references(state.action_description, trace)
    except UnresolvedReference:
        return state
    binding = registry.find(state.action, resolved)
    if binding is None:
        return state
    try:
        result = run_tool(binding, resolved)
    except ToolFailure:
        return state
    return replace(
        state,
        intermediate_evidence=f"(tool: {binding.name})",
        intermediate_result=result,
    )

"""State, trace growth, references, and final-answer extraction."""

import random

import pytest
from hypothesis import given, strategies as st

from stepchain import (
    ActionKind,
    AlreadyTerminal,
    ConfigError,
    ForwardReference,
    IndexMismatch,
    SolveConfig,
    StepState,
    Trace,
    append_state,
    extract_final_answer,
    parse_references,
)
from stepchain.core import NAMED_ACTIONS

from helpers import APPENDIX_FULL_TEXT, random_state, random_trace
from oracles import final_answer_oracle, references_oracle


def make_state(index, description="do something", evidence="", result="",
               action=ActionKind.UNSPECIFIED):
    return StepState(
        index=index,
        action=action,
        action_description=description,
        intermediate_evidence=evidence,
        intermediate_result=result,
    )


# --- actions --------------------------------------------------------------

def test_action_parse_is_case_insensitive():
    assert ActionKind.parse("arithmetic") is ActionKind.ARITHMETIC
    assert ActionKind.parse("ARITHMETIC") is ActionKind.ARITHMETIC
    assert ActionKind.parse("Comparative") is ActionKind.COMPARATIVE
    assert ActionKind.parse("unspecified") is ActionKind.UNSPECIFIED


def test_every_named_action_round_trips():
    assert len(NAMED_ACTIONS) == 15
    for kind in NAMED_ACTIONS:
        assert ActionKind.parse(kind.value) is kind
    assert len(list(ActionKind)) == 16


@pytest.mark.parametrize("bad", ["Compute", "select filter", "", "Action", "#1"])
def test_unknown_action_name_is_an_error(bad):
    with pytest.raises(ValueError):
        ActionKind.parse(bad)


# --- references -----------------------------------------------------------

def test_reference_forms():
    assert parse_references("") == frozenset()
    assert parse_references("no refs here") == frozenset()
    assert parse_references("#1 and # 23") == frozenset({1, 23})
    assert parse_references("(# 7)") == frozenset({7})
    assert parse_references("sum of #2, #2 and #10") == frozenset({2, 10})
    assert parse_references("#0") == frozenset({0})
    assert parse_references("##4") == frozenset({4})
    assert parse_references("#  9") == frozenset()


def test_references_match_hand_scanner_on_random_text():
    rng = random.Random(11)
    alphabet = "ab #01239#"
    for _ in range(500):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 60)))
        assert parse_references(text) == frozenset(references_oracle(text)), repr(text)


def test_state_references_ignore_the_result_field():
    state = make_state(3, description="combine #1", evidence="using #2",
                       result="see #9")
    assert state.references() == frozenset({1, 2})


# --- state validation -------------------------------------------------------

def test_state_rejects_bad_index_and_empty_description():
    with pytest.raises(ValueError):
        make_state(0)
    with pytest.raises(ValueError):
        make_state(-2)
    with pytest.raises(ValueError):
        make_state(1, description="")


def test_state_allows_empty_evidence_and_result():
    state = make_state(1, evidence="", result="")
    assert state.intermediate_evidence == ""
    assert state.intermediate_result == ""


# --- trace growth -----------------------------------------------------------

def test_append_enforces_contiguous_indices():
    trace = Trace(question="q")
    assert trace.next_index == 1
    trace = append_state(trace, make_state(1))
    with pytest.raises(IndexMismatch):
        append_state(trace, make_state(1))
    with pytest.raises(IndexMismatch):
        append_state(trace, make_state(3))
    trace = append_state(trace, make_state(2))
    assert trace.next_index == 3


def test_append_rejects_forward_and_self_references():
    trace = append_state(Trace(question="q"), make_state(1))
    for description in ["use #2", "use #3", "use #0"]:
        with pytest.raises(ForwardReference):
            append_state(trace, make_state(2, description=description))
    grown = append_state(trace, make_state(2, description="use #1"))
    assert len(grown.states) == 2


def test_forward_reference_in_evidence_is_also_rejected():
    trace = append_state(Trace(question="q"), make_state(1))
    with pytest.raises(ForwardReference):
        append_state(trace, make_state(2, evidence="because of #2"))


def test_terminal_trace_is_closed():
    trace = append_state(Trace(question="q"), make_state(1))
    done = trace.with_final("42")
    assert done.is_terminal
    assert done.final_answer == "42"
    with pytest.raises(AlreadyTerminal):
        append_state(done, make_state(2))
    with pytest.raises(AlreadyTerminal):
        done.with_final("43")


def test_append_is_pure():
    trace = Trace(question="q")
    grown = append_state(trace, make_state(1))
    assert trace.states == ()
    assert len(grown.states) == 1


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_random_growth_keeps_earlier_states_as_prefix(n, seed):
    rng = random.Random(seed)
    trace = Trace(question="q")
    snapshots = [trace]
    for index in range(1, n + 1):
        trace = append_state(trace, random_state(rng, index))
        snapshots.append(trace)
    for size, snap in enumerate(snapshots):
        assert trace.states[:size] == snap.states
        assert [s.index for s in snap.states] == list(range(1, size + 1))


# --- final answer extraction -------------------------------------------------

def test_extract_from_appendix_text():
    assert extract_final_answer(APPENDIX_FULL_TEXT) == "230"


def test_extract_is_case_insensitive_and_trims():
    assert extract_final_answer("The FINAL Answer IS 42.") == "42"
    assert extract_final_answer("the final answer is  x + y  ") == "x + y"
    assert extract_final_answer("the final answer is 7!?") == "7"
    assert extract_final_answer("the final answer is") == ""
    assert extract_final_answer("no answer here") is None
    assert extract_final_answer("") is None


def test_extract_takes_first_marker():
    text = "the final answer is 1. the final answer is 2."
    assert extract_final_answer(text) == "1. the final answer is 2"


def test_extract_matches_oracle_on_random_templates():
    rng = random.Random(7)
    cases = []
    markers = ["the final answer is", "The Final Answer Is",
               "THE FINAL ANSWER IS", "the Final answer is"]
    answers = ["230", " 42 ", "x=3", "the jug", "no", "12.5%", ""]
    tails = ["", ".", "!", "?", "...", ".!?", " . "]
    chatter = ["", "So, ", "Step 9:\nResult: done\n", "Because 2+2=4, ",
               "therefore the answer follows. "]
    for _ in range(200):
        if rng.random() < 0.15:
            cases.append(rng.choice(["nothing here", "final answer", ""]))
            continue
        text = (rng.choice(chatter) + rng.choice(markers)
                + rng.choice([" ", "  ", "\n"]) + rng.choice(answers)
                + rng.choice(tails))
        cases.append(text)
    for text in cases:
        assert extract_final_answer(text) == final_answer_oracle(text), repr(text)


def test_random_traces_are_well_formed():
    rng = random.Random(3)
    for _ in range(50):
        trace = random_trace(rng)
        assert trace.question
        assert [s.index for s in trace.states] == list(
            range(1, len(trace.states) + 1))


# --- config -------------------------------------------------------------------

def test_config_defaults():
    config = SolveConfig()
    assert config.max_steps == 12
    assert config.max_llm_calls == 5
    assert config.vote_k == 3
    assert config.temperature == 1.0
    assert config.top_p == 1.0
    assert config.self_eval_enabled is True
    assert config.ensemble_enabled is True


@pytest.mark.parametrize("kwargs", [
    {"max_steps": 0},
    {"vote_k": 0},
    {"vote_k": 6},              # exceeds the default per-step budget of 5
    {"max_llm_calls": 2},       # cannot cover the default vote_k of 3
    {"top_p": 0.0},
    {"top_p": 1.5},
    {"temperature": 0.0},
    {"temperature": -1.0},
])
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ConfigError):
        SolveConfig(**kwargs)


def test_config_accepts_tight_budget():
    config = SolveConfig(max_llm_calls=1, vote_k=1, ensemble_enabled=False)
    assert config.max_llm_calls == 1

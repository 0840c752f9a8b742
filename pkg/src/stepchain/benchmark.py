"""Dataset loading, benchmark runs, error classes, trace persistence.

Datasets arrive in a few common shapes and are converted into one task
type. Runs fan solves out over a bounded worker pool; per-task failures
are recorded, never fatal, and reports are deterministic for a given
backend and config regardless of concurrency.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator

from .answers import AnswerType, auto_canonical, normalize_answer, score_prediction
from .backend import Backend
from .core import ActionKind, FinalAnswer, SolveConfig, StepState, Trace, append_state
from .errors import ConfigError, SchemaError, StepChainError
from .engine import SolveResult, solve
from .execution import ToolRegistry, calculator_eval, resolve_references, strip_task_phrase
from .graph import build_graph, classify_topology
from .prompting import DEFAULT_DEMONSTRATIONS, Demonstration

__all__ = [
    "AnswerType",
    "BenchmarkTask",
    "DatasetFormat",
    "ErrorClass",
    "EvalReport",
    "TaskOutcome",
    "classify_error",
    "format_report_table",
    "load_dataset",
    "load_trace",
    "load_traces",
    "normalize_answer",
    "persist_trace",
    "report_to_json",
    "run_benchmark",
    "score_prediction",
]


@dataclass(frozen=True)
class BenchmarkTask:
    """One scored item: question in, gold answer out."""

    id: str
    question: str
    options: tuple[tuple[str, str], ...] | None
    gold: str
    answer_type: AnswerType

    def __post_init__(self) -> None:
        if not self.gold:
            raise ValueError(f"task {self.id!r} has an empty gold answer")
        has_options = self.options is not None
        is_choice = self.answer_type is AnswerType.MULTIPLE_CHOICE
        if has_options != is_choice:
            raise ValueError(
                f"task {self.id!r}: options are required exactly for "
                "multiple-choice tasks"
            )


class DatasetFormat(Enum):
    GSM8K = "gsm8k"
    AQUA = "aqua"
    CSQA = "csqa"
    GENERIC = "generic"

    @classmethod
    def parse(cls, name: str) -> "DatasetFormat":
        wanted = name.strip().casefold()
        for member in cls:
            if member.value == wanted:
                return member
        raise ValueError(f"unknown dataset format: {name!r}")


class ErrorClass(Enum):
    SPLIT = "split"
    SOLVE = "solve"
    NONE = "none"
    UNKNOWN = "unknown"


def _iter_json_lines(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(lineno, f"invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise SchemaError(lineno, "record is not a JSON object")
            yield lineno, record


def _option_letter_text(raw: str) -> tuple[str, str]:
    """Split an option like "A)30" or "(B) 45 km" into letter and text."""
    text = raw.strip()
    if text[:1] == "(":
        text = text[1:]
    if not text or not text[0].isalpha():
        raise ValueError(f"option {raw!r} has no leading letter")
    letter = text[0].upper()
    rest = text[1:].lstrip(" ).:,-")
    return letter, rest


def _load_gsm8k(path: str | Path) -> list[BenchmarkTask]:
    tasks = []
    for lineno, record in _iter_json_lines(path):
        try:
            question = record["question"]
            answer = record["answer"]
        except KeyError as exc:
            raise SchemaError(lineno, f"missing field {exc}") from exc
        marker = "#### "
        pos = answer.rfind(marker)
        if pos < 0:
            raise SchemaError(lineno, "answer has no '#### ' gold marker")
        gold = answer[pos + len(marker):].strip()
        tasks.append(
            BenchmarkTask(
                id=f"gsm8k-{lineno}",
                question=question,
                options=None,
                gold=gold,
                answer_type=AnswerType.NUMERIC,
            )
        )
    return tasks


def _iter_aqua_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    # AQuA ships both as JSON-lines and as a single JSON array.
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        try:
            records = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(1, f"invalid JSON: {exc}") from exc
        for i, record in enumerate(records, start=1):
            if not isinstance(record, dict):
                raise SchemaError(i, "record is not a JSON object")
            yield i, record
        return
    yield from _iter_json_lines(path)


def _load_aqua(path: str | Path) -> list[BenchmarkTask]:
    tasks = []
    for lineno, record in _iter_aqua_records(path):
        try:
            question = record["question"]
            options = tuple(_option_letter_text(o) for o in record["options"])
            gold = str(record["correct"]).strip().upper()
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaError(lineno, f"bad AQuA record: {exc}") from exc
        tasks.append(
            BenchmarkTask(
                id=f"aqua-{lineno}",
                question=question,
                options=options,
                gold=gold,
                answer_type=AnswerType.MULTIPLE_CHOICE,
            )
        )
    return tasks


def _load_csqa(path: str | Path) -> list[BenchmarkTask]:
    tasks = []
    for lineno, record in _iter_json_lines(path):
        try:
            question = record["question"]
            if isinstance(question, dict):
                choices = question["choices"]
                question = question["stem"]
            else:
                choices = record["choices"]
            options = tuple(
                (str(c["label"]).upper(), str(c["text"])) for c in choices
            )
            gold = str(record["answerKey"]).strip().upper()
        except (KeyError, TypeError) as exc:
            raise SchemaError(lineno, f"bad CSQA record: {exc}") from exc
        tasks.append(
            BenchmarkTask(
                id=f"csqa-{lineno}",
                question=question,
                options=options,
                gold=gold,
                answer_type=AnswerType.MULTIPLE_CHOICE,
            )
        )
    return tasks


def _load_generic(path: str | Path) -> list[BenchmarkTask]:
    tasks = []
    for lineno, record in _iter_json_lines(path):
        try:
            answer_type = AnswerType.parse(record["answer_type"])
            options = None
            if "options" in record and record["options"] is not None:
                options = tuple(
                    (str(letter).upper(), str(text))
                    for letter, text in record["options"]
                )
            tasks.append(
                BenchmarkTask(
                    id=str(record["id"]),
                    question=record["question"],
                    options=options,
                    gold=str(record["gold"]),
                    answer_type=answer_type,
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaError(lineno, f"bad generic record: {exc}") from exc
    return tasks


_LOADERS = {
    DatasetFormat.GSM8K: _load_gsm8k,
    DatasetFormat.AQUA: _load_aqua,
    DatasetFormat.CSQA: _load_csqa,
    DatasetFormat.GENERIC: _load_generic,
}


def load_dataset(path: str | Path, fmt: DatasetFormat | str) -> list[BenchmarkTask]:
    """Read a dataset file into tasks; an empty file is an empty list."""
    if isinstance(fmt, str):
        fmt = DatasetFormat.parse(fmt)
    return _LOADERS[fmt](path)


@dataclass(frozen=True)
class TaskOutcome:
    id: str
    predicted: str
    gold: str
    correct: bool
    llm_calls: int
    topology: str
    error: str = ""


@dataclass(frozen=True)
class EvalReport:
    total: int
    correct: int
    accuracy: float
    per_task: tuple[TaskOutcome, ...]
    error_counts: dict[ErrorClass, int]


def _mc_question_text(task: BenchmarkTask) -> str:
    if task.options is None:
        return task.question
    listing = " ".join(f"({letter}) {text}" for letter, text in task.options)
    return f"{task.question} Answer Choices: {listing}"


def run_benchmark(
    tasks: list[BenchmarkTask],
    config: SolveConfig,
    backend: Backend,
    registry: ToolRegistry | None = None,
    concurrency: int = 1,
    *,
    demonstrations: tuple[Demonstration, ...] = DEFAULT_DEMONSTRATIONS,
) -> EvalReport:
    """Solve every task and aggregate in input order.

    Failures of individual solves are caught, scored as incorrect, and
    recorded under the exception's name; they never abort the run.
    """
    if not tasks:
        raise ConfigError("run_benchmark needs at least one task")
    if concurrency < 1:
        raise ConfigError(f"concurrency must be >= 1, got {concurrency}")

    def run_one(task: BenchmarkTask) -> tuple[TaskOutcome, ErrorClass]:
        try:
            result = solve(
                _mc_question_text(task),
                config,
                backend,
                registry,
                demonstrations,
            )
        except StepChainError as exc:
            trace = getattr(exc, "trace", None)
            llm_calls = getattr(exc, "llm_calls", 0)
            outcome = TaskOutcome(
                id=task.id,
                predicted="",
                gold=task.gold,
                correct=False,
                llm_calls=llm_calls,
                topology=_topology_label(trace),
                error=type(exc).__name__,
            )
            return outcome, classify_error(trace, task.gold, task.answer_type)
        predicted = result.final_answer.raw
        outcome = TaskOutcome(
            id=task.id,
            predicted=predicted,
            gold=task.gold,
            correct=score_prediction(predicted, task.gold, task.answer_type),
            llm_calls=result.llm_calls_used,
            topology=_topology_label(result.trace),
        )
        return outcome, classify_error(result.trace, task.gold, task.answer_type)

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        rows = list(pool.map(run_one, tasks))

    outcomes = tuple(row[0] for row in rows)
    error_counts = {cls: 0 for cls in ErrorClass}
    for _, error_class in rows:
        error_counts[error_class] += 1
    correct = sum(1 for o in outcomes if o.correct)
    return EvalReport(
        total=len(outcomes),
        correct=correct,
        accuracy=correct / len(outcomes),
        per_task=outcomes,
        error_counts=error_counts,
    )


def _topology_label(trace: Trace | None) -> str:
    if trace is None or not trace.states:
        return "unknown"
    return classify_topology(build_graph(trace)).value


def _squash(text: str) -> str:
    return " ".join(text.casefold().split())


def _calculator_mismatch(trace: Trace) -> bool:
    """True when an Arithmetic step's recorded result contradicts the math."""
    for position, state in enumerate(trace.states):
        if state.action is not ActionKind.ARITHMETIC:
            continue
        prefix = Trace(question=trace.question, states=trace.states[:position])
        try:
            resolved = resolve_references(state.action_description, prefix)
            expression = strip_task_phrase(resolved)
            expected = calculator_eval(expression)
            recorded = normalize_answer(state.intermediate_result, AnswerType.NUMERIC)
        except StepChainError:
            continue
        if recorded != normalize_answer(str(expected), AnswerType.NUMERIC):
            return True
    return False


def classify_error(
    trace: Trace | None,
    gold: str,
    answer_type: AnswerType,
    reference_decomposition: list[str] | None = None,
) -> ErrorClass:
    """Attribute a failure to planning or to execution.

    With a reference decomposition, a trace whose step descriptions fail to
    cover every sub-goal is a split error; covered-but-wrong is a solve
    error. Without one, the only confident call is a detected calculator
    mismatch (solve); everything else stays unknown.
    """
    if (
        trace is not None
        and trace.final_answer is not None
        and score_prediction(trace.final_answer, gold, answer_type)
    ):
        return ErrorClass.NONE
    if reference_decomposition:
        if trace is None or not trace.states:
            return ErrorClass.SPLIT
        covered_text = _squash(
            " ".join(s.action_description for s in trace.states)
        )
        for sub_goal in reference_decomposition:
            if _squash(sub_goal) not in covered_text:
                return ErrorClass.SPLIT
        return ErrorClass.SOLVE
    if trace is not None and trace.states and _calculator_mismatch(trace):
        return ErrorClass.SOLVE
    return ErrorClass.UNKNOWN


# --- persistence ---


def persist_trace(
    result: SolveResult, path: str | Path, *, task_id: str = ""
) -> None:
    """Append one solve result to a JSON-lines trace file."""
    trace = result.trace
    record = {
        "id": task_id,
        "question": trace.question,
        "states": [
            {
                "index": s.index,
                "action": s.action.value,
                "description": s.action_description,
                "evidence": s.intermediate_evidence,
                "result": s.intermediate_result,
            }
            for s in trace.states
        ],
        "final_answer": result.final_answer.raw,
        "llm_calls": result.llm_calls_used,
        "regenerations": result.regenerations,
        "topology": _topology_label(trace),
    }
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def _record_to_result(lineno: int, record: dict) -> SolveResult:
    try:
        trace = Trace(question=record["question"])
        for raw_state in record["states"]:
            state = StepState(
                index=int(raw_state["index"]),
                action=ActionKind.parse(raw_state["action"]),
                action_description=raw_state["description"],
                intermediate_evidence=raw_state["evidence"],
                intermediate_result=raw_state["result"],
            )
            trace = append_state(trace, state)
        raw_answer = record["final_answer"]
        source_step = len(trace.states)
        trace = trace.with_final(raw_answer)
        return SolveResult(
            trace=trace,
            final_answer=FinalAnswer(
                raw=raw_answer,
                canonical=auto_canonical(raw_answer),
                source_step=source_step,
            ),
            llm_calls_used=int(record["llm_calls"]),
            regenerations=int(record.get("regenerations", 0)),
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError, StepChainError) as exc:
        raise SchemaError(lineno, f"bad trace record: {exc}") from exc


def load_traces(path: str | Path) -> list[SolveResult]:
    """Read every record of a trace file back into solve results."""
    return [
        _record_to_result(lineno, record)
        for lineno, record in _iter_json_lines(path)
    ]


def load_trace(path: str | Path) -> SolveResult:
    """Read the first record of a trace file."""
    for lineno, record in _iter_json_lines(path):
        return _record_to_result(lineno, record)
    raise SchemaError(0, "trace file holds no records")


# --- report output ---


def report_to_json(report: EvalReport) -> str:
    payload = {
        "total": report.total,
        "correct": report.correct,
        "accuracy": report.accuracy,
        "per_task": [
            {
                "id": o.id,
                "predicted": o.predicted,
                "gold": o.gold,
                "correct": o.correct,
                "llm_calls": o.llm_calls,
                "topology": o.topology,
                "error": o.error,
            }
            for o in report.per_task
        ],
        "error_counts": {
            cls.value: report.error_counts.get(cls, 0) for cls in ErrorClass
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)


def format_report_table(report: EvalReport) -> str:
    """Aligned plain-text table plus an exact accuracy summary line."""
    headers = ("id", "predicted", "gold", "ok", "calls", "topology", "error")
    rows = [
        (
            o.id,
            o.predicted,
            o.gold,
            "yes" if o.correct else "no",
            str(o.llm_calls),
            o.topology,
            o.error,
        )
        for o in report.per_task
    ]
    widths = [
        max(len(headers[col]), *(len(r[col]) for r in rows)) if rows else len(headers[col])
        for col in range(len(headers))
    ]
    def fmt(row: tuple[str, ...]) -> str:
        return "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()

    lines = [fmt(headers), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(r) for r in rows)
    lines.append("")
    lines.append(
        f"accuracy: {report.correct}/{report.total} = {report.accuracy:.3f}"
    )
    return "\n".join(lines)

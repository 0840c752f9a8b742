"""Step-wise reasoning agent loop over a pluggable text-generation backend.

A model is driven one enriched step at a time; every accepted step is
appended to the environment it sees next. Step cross-references induce a
reasoning graph, ensemble voting and self-evaluation harden each step,
and a benchmark harness scores the whole loop against datasets.
"""
from .answers import (
    AnswerType,
    auto_canonical,
    format_decimal,
    normalize_answer,
    score_prediction,
    vote_keys,
)
from .backend import (
    Backend,
    GenerationRequest,
    MatcherKind,
    OpenAICompatibleBackend,
    ScriptRule,
    ScriptedBackend,
    add_script,
    load_script,
)
from .benchmark import (
    BenchmarkTask,
    DatasetFormat,
    ErrorClass,
    EvalReport,
    TaskOutcome,
    classify_error,
    format_report_table,
    load_dataset,
    load_trace,
    load_traces,
    persist_trace,
    report_to_json,
    run_benchmark,
)
from .core import (
    ActionKind,
    FinalAnswer,
    SolveConfig,
    StepState,
    Trace,
    append_state,
    extract_final_answer,
    parse_references,
)
from .engine import (
    CandidateResponse,
    SolveResult,
    Verdict,
    self_evaluate,
    solve,
    vote,
)
from .errors import (
    AlreadyTerminal,
    AuthMissing,
    BackendError,
    BudgetExhausted,
    CalculatorError,
    ConfigError,
    DivisionByZero,
    DuplicateToolName,
    EmptyCandidateSet,
    EmptyTrace,
    ForwardReference,
    IndexMismatch,
    MalformedResponse,
    MaxStepsExceeded,
    NoScriptMatch,
    NotScriptedBackend,
    ParseError,
    SchemaError,
    SolveError,
    StepChainError,
    ToolFailure,
    Unnormalizable,
    UnresolvedReference,
)
from .execution import (
    ExecutionOutcome,
    ToolBinding,
    ToolRegistry,
    calculator_binding,
    calculator_eval,
    default_registry,
    execute_action,
    resolve_references,
)
from .graph import StateGraph, Topology, build_graph, classify_topology, to_dot
from .parsing import (
    ParsedResponse,
    parse_complete_remainder,
    parse_environment,
    parse_step,
)
from .prompting import (
    DEFAULT_DEMONSTRATIONS,
    Demonstration,
    PromptBundle,
    RequestMode,
    load_demonstration,
    load_demonstrations,
    render_environment,
    render_step_request,
    render_system_prompt,
)

__version__ = "0.1.0"

"""Command-line front end.

Results go to stdout, diagnostics to stderr. Exit codes: 0 on success,
1 when the task itself fails (backend errors, missing credential, solve
failures), 2 for usage errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .backend import Backend, OpenAICompatibleBackend, load_script
from .benchmark import (
    DatasetFormat,
    format_report_table,
    load_dataset,
    load_trace,
    load_traces,
    persist_trace,
    report_to_json,
    run_benchmark,
)
from .core import SolveConfig
from .engine import solve
from .errors import ConfigError, StepChainError
from .execution import default_registry
from .graph import build_graph, classify_topology, to_dot
from .prompting import DEFAULT_DEMONSTRATIONS, load_demonstrations, render_environment

_CONFIG_KEYS = {
    "max_steps",
    "max_llm_calls",
    "vote_k",
    "temperature",
    "top_p",
    "self_eval_enabled",
    "ensemble_enabled",
}


def _load_config_file(path: str | None) -> tuple[dict, dict]:
    """Read the JSON config document: solve values plus backend settings."""
    if path is None:
        return {}, {}
    with open(path, encoding="utf-8") as handle:
        try:
            document = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    backend_settings = document.pop("backend", {})
    if not isinstance(backend_settings, dict):
        raise ConfigError(f"{path}: 'backend' must be a JSON object")
    unknown = set(document) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {sorted(unknown)}")
    return document, backend_settings


def _merge_config(args: argparse.Namespace, file_values: dict) -> SolveConfig:
    """File values override defaults; flags override the file."""
    merged = dict(file_values)
    for key in _CONFIG_KEYS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
    try:
        return SolveConfig(**merged)
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def _build_backend(
    args: argparse.Namespace,
    backend_settings: dict,
    environment: dict[str, str],
) -> Backend:
    if args.scripted:
        return load_script(args.scripted)
    base_url = backend_settings.get("base_url")
    model = backend_settings.get("model")
    if not base_url or not model:
        raise ConfigError(
            "live mode needs 'backend.base_url' and 'backend.model' in the "
            "config file; pass --scripted for offline runs"
        )
    return OpenAICompatibleBackend(
        base_url=base_url,
        model=model,
        environment=environment,
        max_in_flight=int(backend_settings.get("max_in_flight", 4)),
        requests_per_minute=backend_settings.get("requests_per_minute"),
        timeout=float(backend_settings.get("timeout", 60.0)),
    )


def _demonstrations(args: argparse.Namespace):
    if getattr(args, "demo", None):
        return load_demonstrations(args.demo)
    return DEFAULT_DEMONSTRATIONS


def _on_off(text: str) -> bool:
    if text == "on":
        return True
    if text == "off":
        return False
    raise argparse.ArgumentTypeError("expected 'on' or 'off'")


def _add_solve_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--scripted", help="scripted backend rule file (JSON lines)")
    parser.add_argument("--demo", action="append", help="demonstration file; repeatable")
    parser.add_argument("--max-steps", dest="max_steps", type=int)
    parser.add_argument("--max-llm-calls", dest="max_llm_calls", type=int)
    parser.add_argument("--vote-k", dest="vote_k", type=int)
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--top-p", dest="top_p", type=float)
    parser.add_argument(
        "--ensemble", dest="ensemble_enabled", type=_on_off, metavar="{on,off}"
    )
    parser.add_argument(
        "--self-eval", dest="self_eval_enabled", type=_on_off, metavar="{on,off}"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stepchain",
        description="Step-wise reasoning agent loop over a text-generation backend.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p_solve = commands.add_parser("solve", help="answer one question")
    p_solve.add_argument("--question", required=True)
    p_solve.add_argument("--trace-out", help="append the solved trace to a JSONL file")
    _add_solve_flags(p_solve)

    p_bench = commands.add_parser("bench", help="score a dataset")
    p_bench.add_argument("--dataset", required=True)
    p_bench.add_argument(
        "--format",
        required=True,
        choices=[f.value for f in DatasetFormat],
    )
    p_bench.add_argument("--concurrency", type=int, default=1)
    p_bench.add_argument("--out", help="write the JSON report here")
    _add_solve_flags(p_bench)

    p_graph = commands.add_parser("graph", help="export a stored trace as DOT")
    p_graph.add_argument("--trace", required=True)
    p_graph.add_argument("--out", help="DOT output path (stdout when omitted)")

    p_replay = commands.add_parser("replay", help="re-render a stored trace")
    p_replay.add_argument("--trace", required=True)

    return parser


def _cmd_solve(args: argparse.Namespace, environment: dict[str, str]) -> int:
    file_values, backend_settings = _load_config_file(args.config)
    config = _merge_config(args, file_values)
    backend = _build_backend(args, backend_settings, environment)
    result = solve(
        args.question,
        config,
        backend,
        default_registry(),
        _demonstrations(args),
    )
    print(render_environment(result.trace))
    if args.trace_out:
        persist_trace(result, args.trace_out)
    print(
        f"llm calls: {result.llm_calls_used}, "
        f"regenerations: {result.regenerations}",
        file=sys.stderr,
    )
    return 0


def _cmd_bench(args: argparse.Namespace, environment: dict[str, str]) -> int:
    file_values, backend_settings = _load_config_file(args.config)
    config = _merge_config(args, file_values)
    backend = _build_backend(args, backend_settings, environment)
    tasks = load_dataset(args.dataset, DatasetFormat.parse(args.format))
    report = run_benchmark(
        tasks,
        config,
        backend,
        default_registry(),
        concurrency=args.concurrency,
        demonstrations=_demonstrations(args),
    )
    print(format_report_table(report))
    if args.out:
        Path(args.out).write_text(report_to_json(report) + "\n", encoding="utf-8")
        print(f"report written to {args.out}", file=sys.stderr)
    return 0


def _cmd_graph(args: argparse.Namespace) -> int:
    result = load_trace(args.trace)
    dot = to_dot(build_graph(result.trace))
    if args.out:
        Path(args.out).write_text(dot, encoding="utf-8")
        print(f"graph written to {args.out}", file=sys.stderr)
    else:
        print(dot, end="")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    results = load_traces(args.trace)
    for position, result in enumerate(results):
        if position:
            print()
        print(render_environment(result.trace))
        print(f"topology: {_topology_of(result)}")
    return 0


def _topology_of(result) -> str:
    return classify_topology(build_graph(result.trace)).value


def run_command(argv: list[str], environment: dict[str, str] | None = None) -> int:
    """Run one CLI invocation and return its exit code."""
    env = dict(os.environ) if environment is None else environment
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "solve":
            return _cmd_solve(args, env)
        if args.command == "bench":
            return _cmd_bench(args, env)
        if args.command == "graph":
            return _cmd_graph(args)
        return _cmd_replay(args)
    except (StepChainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))

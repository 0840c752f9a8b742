"""Command-line behaviour: exit codes, output, config precedence."""

import json
import subprocess
import sys

import pytest

from stepchain import FinalAnswer, SolveResult, auto_canonical, load_trace, persist_trace
from stepchain.cli import run_command

from helpers import APPENDIX_QUESTION, FIXTURES, case_two_calcs_merge

APPENDIX_SCRIPT = str(FIXTURES / "appendix.script")
MIXED_DATA = str(FIXTURES / "mixed20.jsonl")
MIXED_SCRIPT = str(FIXTURES / "mixed20.script")


def solve_argv(*extra):
    return ["solve", "--question", APPENDIX_QUESTION,
            "--scripted", APPENDIX_SCRIPT, *extra]


# --- solve -----------------------------------------------------------------------

def test_solve_prints_the_finished_environment(capsys):
    assert run_command(solve_argv()) == 0
    captured = capsys.readouterr()
    assert captured.out.startswith(f"Question: {APPENDIX_QUESTION}")
    assert "Step 1:" in captured.out
    assert "Therefore, the final answer is 230." in captured.out
    assert "llm calls:" in captured.err


def test_solve_writes_a_loadable_trace(tmp_path, capsys):
    out = tmp_path / "trace.jsonl"
    assert run_command(solve_argv("--trace-out", str(out))) == 0
    capsys.readouterr()
    result = load_trace(out)
    assert result.final_answer.raw == "230"
    assert len(result.trace.states) == 2


def test_solve_accepts_demonstration_files(tmp_path, capsys):
    demo = tmp_path / "demo.txt"
    demo.write_text(
        "Question: A box has 2 pens and gains 3. How many pens?\n"
        "Step 1:\n"
        "Action: Arithmetic\n"
        "Description: Compute 2 + 3\n"
        "Evidence: 2 + 3 = 5\n"
        "Result: 5\n"
        "Therefore, the final answer is 5.\n",
        encoding="utf-8",
    )
    assert run_command(solve_argv("--demo", str(demo))) == 0
    assert "230" in capsys.readouterr().out


# --- usage errors -------------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["solve"],
    ["solve", "--question", "q", "--bogus"],
    ["bench", "--dataset", MIXED_DATA, "--format", "tsv"],
    ["graph"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert run_command(argv) == 2
    capsys.readouterr()


# --- failure exit codes -----------------------------------------------------------------

def test_live_mode_without_backend_settings_fails(capsys):
    code = run_command(["solve", "--question", "q"], environment={})
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_missing_credential_fails_cleanly(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps(
        {"backend": {"base_url": "https://example.test/v1", "model": "m"}}),
        encoding="utf-8")
    code = run_command(
        ["solve", "--question", "q", "--config", str(config)], environment={})
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_bad_config_file_fails_cleanly(tmp_path, capsys):
    garbled = tmp_path / "broken.json"
    garbled.write_text("{not json", encoding="utf-8")
    assert run_command(solve_argv("--config", str(garbled))) == 1

    unknown_key = tmp_path / "unknown.json"
    unknown_key.write_text(json.dumps({"beam_width": 4}), encoding="utf-8")
    assert run_command(solve_argv("--config", str(unknown_key))) == 1

    not_object = tmp_path / "list.json"
    not_object.write_text("[1, 2]", encoding="utf-8")
    assert run_command(solve_argv("--config", str(not_object))) == 1
    capsys.readouterr()


def test_missing_dataset_file_fails_cleanly(tmp_path, capsys):
    code = run_command([
        "bench", "--dataset", str(tmp_path / "absent.jsonl"),
        "--format", "generic", "--scripted", MIXED_SCRIPT,
    ])
    assert code == 1
    assert "error:" in capsys.readouterr().err


# --- config precedence --------------------------------------------------------------------

def _calls_reported(err: str) -> int:
    for line in err.splitlines():
        if line.startswith("llm calls:"):
            return int(line.split(",")[0].split(":")[1])
    raise AssertionError(f"no call count in stderr: {err!r}")


def test_flags_override_the_config_file(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"vote_k": 4}), encoding="utf-8")

    assert run_command(solve_argv("--config", str(config))) == 0
    assert _calls_reported(capsys.readouterr().err) == 8   # 2 steps x 4 samples

    assert run_command(solve_argv("--config", str(config), "--vote-k", "2")) == 0
    assert _calls_reported(capsys.readouterr().err) == 4


def test_ensemble_can_be_switched_off_by_flag(capsys):
    assert run_command(solve_argv("--ensemble", "off", "--self-eval", "off")) == 0
    assert _calls_reported(capsys.readouterr().err) == 2


# --- bench -----------------------------------------------------------------------------------

def test_bench_prints_the_score_table(capsys):
    code = run_command([
        "bench", "--dataset", MIXED_DATA, "--format", "generic",
        "--scripted", MIXED_SCRIPT,
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "accuracy: 13/20 = 0.650" in out
    assert "Task 01" in out


def test_bench_concurrency_and_json_report(tmp_path, capsys):
    report_path = tmp_path / "report.json"
    code = run_command([
        "bench", "--dataset", MIXED_DATA, "--format", "generic",
        "--scripted", MIXED_SCRIPT, "--concurrency", "4",
        "--out", str(report_path),
    ])
    assert code == 0
    assert "accuracy: 13/20 = 0.650" in capsys.readouterr().out
    payload = json.loads(report_path.read_text(encoding="utf-8"))
    assert payload["correct"] == 13
    assert payload["accuracy"] == pytest.approx(0.65)


# --- graph and replay ----------------------------------------------------------------------------

def merge_result():
    trace = case_two_calcs_merge()
    return SolveResult(
        trace=trace,
        final_answer=FinalAnswer(raw="10000 grams",
                                 canonical=auto_canonical("10000 grams"),
                                 source_step=3),
        llm_calls_used=3,
        regenerations=0,
    )


def test_graph_prints_dot(tmp_path, capsys):
    path = tmp_path / "trace.jsonl"
    persist_trace(merge_result(), path, task_id="merge")
    assert run_command(["graph", "--trace", str(path)]) == 0
    dot = capsys.readouterr().out
    assert dot.startswith("digraph")
    assert "1 -> 3" in dot and "2 -> 3" in dot
    assert "1 -> 2" not in dot


def test_graph_writes_dot_file(tmp_path, capsys):
    trace_path = tmp_path / "trace.jsonl"
    persist_trace(merge_result(), trace_path)
    out = tmp_path / "graph.dot"
    assert run_command(["graph", "--trace", str(trace_path),
                        "--out", str(out)]) == 0
    captured = capsys.readouterr()
    assert captured.out == ""
    assert "written to" in captured.err
    assert "2 -> 3" in out.read_text(encoding="utf-8")


def test_replay_renders_every_stored_trace(tmp_path, capsys):
    path = tmp_path / "trace.jsonl"
    persist_trace(merge_result(), path, task_id="a")
    persist_trace(merge_result(), path, task_id="b")
    assert run_command(["replay", "--trace", str(path)]) == 0
    out = capsys.readouterr().out
    assert out.count("Question: A crate weighs") == 2
    assert out.count("topology: merge") == 2
    assert "Therefore, the final answer is 10000 grams." in out


def test_replay_missing_file(tmp_path, capsys):
    assert run_command(["replay", "--trace", str(tmp_path / "nope.jsonl")]) == 1
    capsys.readouterr()


# --- module entry point ------------------------------------------------------------------------------

def test_module_runs_as_a_script():
    completed = subprocess.run(
        [sys.executable, "-m", "stepchain",
         "solve", "--question", APPENDIX_QUESTION,
         "--scripted", APPENDIX_SCRIPT],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert completed.returncode == 0
    assert "Therefore, the final answer is 230." in completed.stdout

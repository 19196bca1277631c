"""Helpers that drive the tails exactly as a consumer process would."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

TAILS = Path(__file__).resolve().parent.parent / "src" / "tbruntime"


def _last_stderr_json(proc):
    """The final stderr line is the machine-readable error record."""
    lines = [ln for ln in proc.stderr.splitlines() if ln.strip()]
    assert lines, f"no stderr from exit {proc.returncode}"
    return json.loads(lines[-1])


@pytest.fixture
def err_of():
    return _last_stderr_json


@pytest.fixture
def tail_cmd():
    """argv prefix for a tail: tail_cmd('stimulus_tail.py') + [args...]."""
    def cmd(tail_name):
        return [sys.executable, str(TAILS / tail_name)]

    return cmd


@pytest.fixture
def run_stimulus(tmp_path, tail_cmd):
    def run(script_source, out_name="Input_signal.json", argv=None):
        script = tmp_path / "script.py"
        script.write_text(script_source, encoding="utf-8")
        out = tmp_path / out_name
        if argv is None:
            argv = tail_cmd("stimulus_tail.py") + [str(script), str(out)]
        proc = subprocess.run(argv, capture_output=True, text=True,
                              cwd=tmp_path, timeout=30)
        return proc, out

    return run


@pytest.fixture
def run_emulator(tmp_path, tail_cmd):
    def run(script_source, input_doc, out_name="Reference_signal.json"):
        script = tmp_path / "script.py"
        script.write_text(script_source, encoding="utf-8")
        inp = tmp_path / "Input_signal.json"
        inp.write_text(json.dumps(input_doc), encoding="utf-8")
        out = tmp_path / out_name
        proc = subprocess.run(
            tail_cmd("emulator_tail.py") + [str(script), str(inp), str(out)],
            capture_output=True, text=True, cwd=tmp_path, timeout=30)
        return proc, out

    return run

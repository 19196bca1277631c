"""Per-problem workspace layout and the run_meta.json snapshot.

Every artifact the pipeline persists lives under one problem directory with
stable names, so a rerun (or a human) can find each stage's output without
consulting logs.
"""

from __future__ import annotations

import json
import platform
import shutil
import subprocess
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .config import RunConfig, config_to_dict
from .gateway import TokenLedger

PLAN_FILE = "Testcase_Desc.txt"
STIMULUS_FILE = "Input_signal.json"
REFERENCE_FILE = "Reference_signal.json"
MODEL_FILE = "Func_emulator.py"
TESTBENCH_FILE = "sim_main.cpp"
META_FILE = "run_meta.json"
ERROR_FILE = "error.json"
EVAL_STATE_FILE = "eval_state.json"


@dataclass(frozen=True)
class Workspace:
    """All writes stay under `root`; one subdirectory per problem."""
    root: Path

    def problem_dir(self, problem_id: str) -> Path:
        d = self.root / problem_id
        d.mkdir(parents=True, exist_ok=True)
        return d

    def plan_path(self, pid: str) -> Path:
        return self.problem_dir(pid) / PLAN_FILE

    def stimulus_path(self, pid: str) -> Path:
        return self.problem_dir(pid) / STIMULUS_FILE

    def reference_path(self, pid: str) -> Path:
        return self.problem_dir(pid) / REFERENCE_FILE

    def model_path(self, pid: str) -> Path:
        return self.problem_dir(pid) / MODEL_FILE

    def testbench_path(self, pid: str) -> Path:
        return self.problem_dir(pid) / TESTBENCH_FILE

    def transcript_dir(self, pid: str) -> Path:
        return self.problem_dir(pid) / "transcripts"


def tool_versions() -> dict[str, str]:
    versions = {"python": platform.python_version(), "tbforge": __version__}
    verilator = shutil.which("verilator")
    if verilator:
        try:
            proc = subprocess.run([verilator, "--version"],
                                  capture_output=True, text=True, timeout=10)
            versions["verilator"] = proc.stdout.strip()
        except (OSError, subprocess.TimeoutExpired):
            versions["verilator"] = "unknown"
    return versions


def write_run_meta(directory: Path, config: RunConfig, ledger: TokenLedger,
                   extra: dict | None = None) -> Path:
    """Config snapshot + tool versions + token usage: enough for exact replay."""
    meta = {
        "config": config_to_dict(config),
        "tools": tool_versions(),
        "tokens": ledger.as_dict(),
    }
    if extra:
        meta.update(extra)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / META_FILE
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def write_error(directory: Path, kind: str, detail: str) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / ERROR_FILE
    path.write_text(json.dumps({"kind": kind, "detail": detail},
                               indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path

"""Execution backends for generated scripts.

A backend turns script source into parsed wire-format JSON documents. The
subprocess backend shells out to the runtime tails over the cross-language
protocol (exit codes 0/10/11/12); the fixture backend replays recorded
documents keyed by script content so tests never execute generated code.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import sys
import tempfile
from pathlib import Path
from typing import Any, Protocol

from .errors import BackendError, FixtureMissError, ScriptError

DEFAULT_SCRIPT_TIMEOUT_S = 30.0

# exit codes of the runtime tails
EXIT_OK = 0
EXIT_BAD_RETURN = 10
EXIT_NO_ENTRY = 11
EXIT_CRASH = 12

_EXIT_KINDS = {
    EXIT_BAD_RETURN: "protocol",
    EXIT_NO_ENTRY: "missing-entry",
    EXIT_CRASH: "crash",
}


class ExecutionBackend(Protocol):
    def run_stimulus(self, source: str) -> Any:
        """Execute a stimulus script; return the parsed stimulus document."""
        ...

    def run_emulator(self, source: str, stimulus_doc: Any) -> Any:
        """Execute an emulator script over a stimulus document."""
        ...


def _canonical(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def stimulus_key(source: str) -> str:
    return hashlib.sha256(source.encode("utf-8")).hexdigest()


def emulator_key(source: str, stimulus_doc: Any) -> str:
    payload = source + "\x00" + _canonical(stimulus_doc)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class SubprocessBackend:
    """Runs scripts through the runtime tails, one OS process per script."""

    def __init__(self, runtime_dir: str | Path, interpreter: str | None = None,
                 timeout_s: float = DEFAULT_SCRIPT_TIMEOUT_S):
        self.runtime_dir = Path(runtime_dir)
        self.interpreter = interpreter or sys.executable
        self.timeout_s = timeout_s
        self.stimulus_tail = self.runtime_dir / "stimulus_tail.py"
        self.emulator_tail = self.runtime_dir / "emulator_tail.py"
        for tail in (self.stimulus_tail, self.emulator_tail):
            if not tail.is_file():
                raise BackendError(f"runtime tail not found: {tail}")

    def _invoke(self, argv: list[str], out_path: Path) -> Any:
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=self.timeout_s)
        except subprocess.TimeoutExpired:
            raise ScriptError("timeout",
                              f"script exceeded {self.timeout_s:.0f}s")
        if proc.returncode != EXIT_OK:
            kind = _EXIT_KINDS.get(proc.returncode, "crash")
            raise ScriptError(kind, proc.stderr.strip()[:2000])
        try:
            return json.loads(out_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ScriptError("protocol", f"unreadable output file: {exc}")

    def run_stimulus(self, source: str) -> Any:
        with tempfile.TemporaryDirectory(prefix="stim_") as tmp:
            tmpdir = Path(tmp)
            script = tmpdir / "script.py"
            out = tmpdir / "Input_signal.json"
            script.write_text(source, encoding="utf-8")
            return self._invoke(
                [self.interpreter, str(self.stimulus_tail), str(script),
                 str(out)], out)

    def run_emulator(self, source: str, stimulus_doc: Any) -> Any:
        with tempfile.TemporaryDirectory(prefix="emu_") as tmp:
            tmpdir = Path(tmp)
            script = tmpdir / "script.py"
            inp = tmpdir / "Input_signal.json"
            out = tmpdir / "Reference_signal.json"
            script.write_text(source, encoding="utf-8")
            inp.write_text(_canonical(stimulus_doc), encoding="utf-8")
            return self._invoke(
                [self.interpreter, str(self.emulator_tail), str(script),
                 str(inp), str(out)], out)


class FixtureBackend:
    """Replays script results from a directory of recorded documents.

    Files: stim_<key>.json / emu_<key>.json. A document of the form
    {"__error__": {"kind": ..., "detail": ...}} replays a script failure,
    which fault-injection tests rely on.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _load(self, name: str) -> Any:
        path = self.root / name
        if not path.exists():
            raise FixtureMissError(f"no backend fixture {name}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        if isinstance(doc, dict) and "__error__" in doc:
            err = doc["__error__"]
            raise ScriptError(err.get("kind", "crash"), err.get("detail", ""))
        return doc

    def _store(self, name: str, doc: Any) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / name
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path

    def run_stimulus(self, source: str) -> Any:
        return self._load(f"stim_{stimulus_key(source)}.json")

    def run_emulator(self, source: str, stimulus_doc: Any) -> Any:
        return self._load(f"emu_{emulator_key(source, stimulus_doc)}.json")

    def record_stimulus(self, source: str, doc: Any) -> Path:
        return self._store(f"stim_{stimulus_key(source)}.json", doc)

    def record_emulator(self, source: str, stimulus_doc: Any, doc: Any) -> Path:
        return self._store(f"emu_{emulator_key(source, stimulus_doc)}.json", doc)

    def record_error(self, source: str, kind: str, detail: str = "",
                     stimulus_doc: Any = None) -> Path:
        marker = {"__error__": {"kind": kind, "detail": detail}}
        if stimulus_doc is None:
            return self._store(f"stim_{stimulus_key(source)}.json", marker)
        return self._store(
            f"emu_{emulator_key(source, stimulus_doc)}.json", marker)


class RecordingBackend:
    """Wraps a live backend, persisting every result as a fixture."""

    def __init__(self, inner: ExecutionBackend, store: FixtureBackend):
        self.inner = inner
        self.store = store

    def run_stimulus(self, source: str) -> Any:
        doc = self.inner.run_stimulus(source)
        self.store.record_stimulus(source, doc)
        return doc

    def run_emulator(self, source: str, stimulus_doc: Any) -> Any:
        doc = self.inner.run_emulator(source, stimulus_doc)
        self.store.record_emulator(source, stimulus_doc, doc)
        return doc

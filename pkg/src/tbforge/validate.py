"""Simulation build/run, mismatch parsing, diagnostics, judge-aided loop.

The flow mirrors a three-stage mechanism: (1) compile and simulate the
testbench against the DUT, (2) on failure turn the rule-based mismatch data
into a natural-language report and ask a judge whether the DUT or the
reference model is at fault, (3) on a model fault, refine the model and
re-simulate, within a fixed round budget. The DUT is never auto-modified.
"""

from __future__ import annotations

import json
import logging
import re
import shutil
import subprocess
from dataclasses import dataclass
from pathlib import Path

from .backend import ExecutionBackend
from .bits import BitVector
from .codegen import CodegenOptions, emit_testbench
from .emulator import EmulatorScript, ExecutionFailure, run_candidates
from .errors import (AllCandidatesFailedError, ExtractionError,
                     JudgeParseError, ProtocolError, ProviderError,
                     SimTimeoutError, ToolchainMissingError, ValidationError)
from .gateway import Gateway, SamplingParams, extract_code_block
from .improve import JudgeSelection, refine
from .problem import Problem
from .prompts import WIDTH_SEMANTICS_NOTE, root_cause_prompt
from .traces import (StimulusSuite, TraceDiff, TraceSet, dump_wire_json,
                     traceset_to_json)
from .workspace import MODEL_FILE, REFERENCE_FILE, TESTBENCH_FILE

log = logging.getLogger("validate")

DEFAULT_RUN_TIMEOUT_S = 60.0
DEFAULT_BUILD_TIMEOUT_S = 120.0
DEFAULT_VALIDATION_BUDGET = 2

DUT_FAULT = "DUT_FAULT"
MODEL_FAULT = "MODEL_FAULT"

_MISMATCH_RE = re.compile(
    r"^MISMATCH scenario=(\S+) step=(\d+) signal=(\S+) "
    r"expected=([01]+) actual=([01]+)$")
_RESULT_RE = re.compile(r"^RESULT: (PASS|FAIL failures=(\d+))$")


@dataclass(frozen=True)
class SimOutcome:
    passed: bool
    mismatches: tuple[TraceDiff, ...]
    failure_count: int
    raw_log: str
    build_ok: bool

    def __post_init__(self):
        if self.passed and (self.mismatches or self.failure_count):
            raise ValidationError("passed outcome cannot carry failures")
        if not self.build_ok and self.passed:
            raise ValidationError("build failure cannot pass")


@dataclass(frozen=True)
class DiagnosticReport:
    narrative: str
    mismatches: tuple[TraceDiff, ...]
    scenario_notes: dict[str, str]


@dataclass(frozen=True)
class RootCauseVerdict:
    cause: str
    rationale: str

    def __post_init__(self):
        if self.cause not in (DUT_FAULT, MODEL_FAULT):
            raise ValidationError(f"unknown cause {self.cause!r}")


@dataclass(frozen=True)
class FinalVerdict:
    dut_status: str
    rounds_used: int
    history: tuple[tuple[SimOutcome, RootCauseVerdict | None], ...]

    def __post_init__(self):
        if self.dut_status not in ("PASS", "FAIL"):
            raise ValidationError(f"unknown dut_status {self.dut_status!r}")


@dataclass(frozen=True)
class BuildResult:
    ok: bool
    log: str
    exe: Path | None


_verilator_path: str | None = None
_verilator_probed = False


def ensure_verilator() -> str:
    """PATH probe, cached for the process lifetime."""
    global _verilator_path, _verilator_probed
    if not _verilator_probed:
        _verilator_path = shutil.which("verilator")
        _verilator_probed = True
    if not _verilator_path:
        raise ToolchainMissingError(
            "verilator not found on PATH; install it or point PATH at it")
    return _verilator_path


class VerilatorBuilder:
    """Builds the DUT + testbench into obj_dir/V<module> via verilator."""

    def __init__(self, build_timeout_s: float = DEFAULT_BUILD_TIMEOUT_S):
        self.build_timeout_s = build_timeout_s

    def __call__(self, workdir: Path, dut_file: str, tb_file: str,
                 module_name: str) -> BuildResult:
        verilator = ensure_verilator()
        argv = [verilator, "--cc", "--exe", "--build", "-Wno-fatal",
                dut_file, tb_file, "--top-module", module_name]
        try:
            proc = subprocess.run(argv, cwd=workdir, capture_output=True,
                                  text=True, timeout=self.build_timeout_s)
        except subprocess.TimeoutExpired:
            return BuildResult(False, f"build exceeded "
                                      f"{self.build_timeout_s:.0f}s", None)
        build_log = proc.stdout + proc.stderr
        if proc.returncode != 0:
            return BuildResult(False, build_log, None)
        exe = Path(workdir) / "obj_dir" / f"V{module_name}"
        if not exe.is_file():
            return BuildResult(False, build_log + "\n(executable missing)",
                               None)
        return BuildResult(True, build_log, exe)


def parse_mismatch_line(line: str) -> TraceDiff | None:
    m = _MISMATCH_RE.match(line)
    if not m:
        return None
    sid, step, signal, exp, act = m.groups()
    if exp == act:
        raise ProtocolError(f"mismatch line with equal values: {line!r}")
    return TraceDiff(scenario_id=sid, step_index=int(step), signal=signal,
                     expected=BitVector(len(exp), int(exp, 2)),
                     actual=BitVector(len(act), int(act, 2)))


def parse_sim_output(stdout: str) -> tuple[list[TraceDiff], int, bool | None]:
    """(mismatches, failure_count, summary); summary None if no RESULT line."""
    diffs: list[TraceDiff] = []
    summary: bool | None = None
    failure_count = 0
    for line in stdout.splitlines():
        diff = parse_mismatch_line(line)
        if diff is not None:
            diffs.append(diff)
            continue
        m = _RESULT_RE.match(line)
        if m:
            if summary is not None:
                raise ProtocolError("more than one RESULT line")
            summary = m.group(1) == "PASS"
            failure_count = int(m.group(2)) if m.group(2) else 0
    return diffs, failure_count, summary


def build_and_run(dut_source: str, interface, testbench_text: str,
                  workdir: str | Path, builder=None,
                  run_timeout_s: float = DEFAULT_RUN_TIMEOUT_S) -> SimOutcome:
    """Write sources, build, execute, and parse the self-checking output."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    (workdir / "dut.v").write_text(dut_source, encoding="utf-8")
    (workdir / "sim_main.cpp").write_text(testbench_text, encoding="utf-8")
    builder = builder or VerilatorBuilder()

    built = builder(workdir, "dut.v", "sim_main.cpp", interface.module_name)
    if not built.ok:
        return SimOutcome(passed=False, mismatches=(), failure_count=0,
                          raw_log=built.log, build_ok=False)

    try:
        proc = subprocess.run([str(built.exe)], cwd=workdir,
                              capture_output=True, text=True,
                              timeout=run_timeout_s)
    except subprocess.TimeoutExpired:
        raise SimTimeoutError(f"simulation exceeded {run_timeout_s:.0f}s")

    diffs, failure_count, summary = parse_sim_output(proc.stdout)
    if summary is None:
        raise ProtocolError(
            f"no RESULT line in simulator output (exit {proc.returncode})")
    if summary != (proc.returncode == 0):
        raise ProtocolError(
            f"summary {'PASS' if summary else 'FAIL'} disagrees with exit "
            f"code {proc.returncode}")
    if summary and diffs:
        raise ProtocolError("PASS summary alongside MISMATCH lines")
    if not summary and failure_count < 1:
        raise ProtocolError("FAIL summary with failures=0")
    return SimOutcome(passed=summary, mismatches=tuple(diffs),
                      failure_count=failure_count, raw_log=proc.stdout,
                      build_ok=True)


def _plan_excerpt(scenario_id: str, plan_text: str | None) -> str:
    if not plan_text or not plan_text.strip():
        return "no plan available"
    lines = [ln.strip() for ln in plan_text.splitlines() if ln.strip()]
    local = re.sub(r"^s\d+_", "", scenario_id)
    for ln in lines:
        if local and local.lower() in ln.lower():
            return ln[:120]
    return lines[0][:120]


def _sentence(scenario_id: str, excerpt: str, group: list[TraceDiff]) -> str:
    first = group[0]
    exp = format(first.expected.value, f"0{first.expected.width}b")
    act = format(first.actual.value, f"0{first.actual.width}b")
    if len(group) == 1:
        return (f"In scenario {scenario_id} ({excerpt}), at step "
                f"{first.step_index}, output {first.signal} was expected to "
                f"be {exp} ({first.expected.value}) but the design produced "
                f"{act} ({first.actual.value}).")
    last = group[-1]
    return (f"In scenario {scenario_id} ({excerpt}), at steps "
            f"{first.step_index} through {last.step_index}, output "
            f"{first.signal} mismatched on every step; at step "
            f"{first.step_index} it was expected to be {exp} "
            f"({first.expected.value}) but the design produced {act} "
            f"({first.actual.value}).")


def render_report(outcome: SimOutcome, plan_text: str | None,
                  problem: Problem) -> DiagnosticReport:
    """Deterministic rule-based narrative of a failed simulation."""
    if outcome.passed:
        raise ValidationError("nothing to report on a passing run")
    if not outcome.build_ok:
        raise ValidationError("build failures are not reportable mismatches")

    notes: dict[str, str] = {}
    sentences: list[str] = []
    group: list[TraceDiff] = []

    def flush():
        if group:
            sid = group[0].scenario_id
            sentences.append(_sentence(sid, notes[sid], group))
            group.clear()

    for diff in outcome.mismatches:
        notes.setdefault(diff.scenario_id,
                         _plan_excerpt(diff.scenario_id, plan_text))
        if group and (diff.scenario_id != group[-1].scenario_id
                      or diff.signal != group[-1].signal
                      or diff.step_index != group[-1].step_index + 1):
            flush()
        group.append(diff)
    flush()

    if not sentences:
        sentences.append(
            f"The simulation failed with {outcome.failure_count} failures "
            f"but reported no individual mismatches (reporting cap).")
    narrative = "\n".join(sentences) + "\n\n" + WIDTH_SEMANTICS_NOTE
    return DiagnosticReport(narrative=narrative,
                            mismatches=outcome.mismatches,
                            scenario_notes=notes)


def judge_root_cause(report: DiagnosticReport, problem: Problem,
                     model: EmulatorScript, dut_source: str,
                     gateway: Gateway) -> RootCauseVerdict:
    prompt = root_cause_prompt(problem, dut_source, model.source,
                               report.narrative)
    params = SamplingParams(temperature=0.0, n_samples=1)
    for attempt in range(2):
        reply = gateway.complete(prompt, params, stage="judge_validate")[0]
        try:
            doc = json.loads(extract_code_block(reply.text, "json"))
            cause = doc["cause"]
            if cause not in ("DUT", "MODEL"):
                raise JudgeParseError(f"unknown cause {cause!r}")
            return RootCauseVerdict(
                cause=DUT_FAULT if cause == "DUT" else MODEL_FAULT,
                rationale=str(doc.get("rationale", "")))
        except (ExtractionError, JudgeParseError, KeyError, ValueError,
                json.JSONDecodeError) as exc:
            log.warning("root-cause reply attempt %d unparseable: %s",
                        attempt, str(exc)[:200])
    log.error("root-cause judge unparseable twice; defaulting to DUT fault")
    return RootCauseVerdict(cause=DUT_FAULT,
                            rationale="judge reply unparseable; conservative "
                                      "default blames the design")


def validate_loop(problem: Problem, suite: StimulusSuite,
                  model: EmulatorScript, traces: TraceSet, budget: int,
                  gateway: Gateway, backend: ExecutionBackend,
                  workdir: str | Path, plan_text: str | None = None,
                  builder=None, opts: CodegenOptions | None = None,
                  run_timeout_s: float = DEFAULT_RUN_TIMEOUT_S
                  ) -> FinalVerdict:
    """Judge-aided validation with at most `budget` judge rounds."""
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    if not problem.dut_source:
        raise ValidationError("problem has no DUT source to validate")
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    history: list[tuple[SimOutcome, RootCauseVerdict | None]] = []
    rounds_used = 0
    current_model, current_traces = model, traces

    while True:
        tb = emit_testbench(problem.interface, current_traces, opts)
        # keep the workspace-root artifacts at the finalized state, so a
        # later mutant re-run picks up any judge-driven model repair
        (workdir / TESTBENCH_FILE).write_text(tb, encoding="utf-8")
        outcome = build_and_run(problem.dut_source, problem.interface, tb,
                                workdir / f"sim_round_{len(history)}",
                                builder=builder, run_timeout_s=run_timeout_s)
        if outcome.passed:
            history.append((outcome, None))
            _persist_round(workdir, history, None)
            return FinalVerdict("PASS", rounds_used, tuple(history))
        if not outcome.build_ok:
            # artifact bug, not a semantic question for the judge
            history.append((outcome, None))
            _persist_round(workdir, history, None)
            return FinalVerdict("FAIL", rounds_used, tuple(history))
        if rounds_used >= budget:
            history.append((outcome, None))
            _persist_round(workdir, history, None)
            return FinalVerdict("FAIL", rounds_used, tuple(history))

        report = render_report(outcome, plan_text, problem)
        try:
            verdict = judge_root_cause(report, problem, current_model,
                                       problem.dut_source, gateway)
        except ProviderError as exc:
            # the raw simulation verdict stands; never upgrade to PASS
            log.error("root-cause judge unavailable: %s", exc)
            history.append((outcome, None))
            _persist_round(workdir, history, report)
            return FinalVerdict("FAIL", rounds_used, tuple(history))
        rounds_used += 1
        history.append((outcome, verdict))
        _persist_round(workdir, history, report)
        if verdict.cause == DUT_FAULT:
            return FinalVerdict("FAIL", rounds_used, tuple(history))

        # model fault: one deterministic repair, then re-simulate
        selection = JudgeSelection(
            best_index=current_model.candidate_index, aligned=False,
            analysis=f"{verdict.rationale}\n\n{report.narrative}")
        new_set = refine(current_model, selection, problem, 1, gateway,
                         evidence=[current_traces], temperature=0.0,
                         stage="judge_validate")
        results = run_candidates(new_set, suite, backend)
        _, result = results[0]
        if isinstance(result, ExecutionFailure):
            raise AllCandidatesFailedError(
                f"refined model failed to execute: {result.kind}: "
                f"{result.detail}")
        current_model = new_set.candidates[0]
        current_traces = result
        (workdir / MODEL_FILE).write_text(current_model.source,
                                          encoding="utf-8")
        (workdir / REFERENCE_FILE).write_text(
            dump_wire_json(traceset_to_json(current_traces)),
            encoding="utf-8")


def _persist_round(workdir: Path, history, report: DiagnosticReport | None
                   ) -> None:
    rdir = workdir / f"validate_round_{len(history) - 1}"
    rdir.mkdir(parents=True, exist_ok=True)
    outcome, verdict = history[-1]
    if report is not None:
        (rdir / "report.txt").write_text(report.narrative, encoding="utf-8")
    (rdir / "verdict.json").write_text(json.dumps({
        "passed": outcome.passed,
        "build_ok": outcome.build_ok,
        "failure_count": outcome.failure_count,
        "cause": verdict.cause if verdict else None,
        "rationale": verdict.rationale if verdict else None,
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")

"""Stage wiring: plan -> stimulus -> model best-of-N -> testbench.

Used by both the CLI commands and the benchmark harness, so the two can
never disagree about which artifact comes from which stage. Every stage
persists its output under the problem workspace; with resume=True a stage
whose artifact already exists is skipped and the artifact reloaded.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .backend import ExecutionBackend, FixtureBackend, SubprocessBackend
from .codegen import emit_testbench
from .config import RunConfig
from .emulator import EmulatorScript
from .errors import BackendError, BadProblemError
from .improve import ImproveConfig, improve_loop
from .problem import Problem
from .stimulus import (ScenarioPlan, collect_stimuli, design_scenarios,
                       generate_stimulus_scripts)
from .traces import (StimulusSuite, TraceSet, dump_wire_json,
                     stimulus_from_json, stimulus_to_json, traceset_from_json)
from .workspace import (MODEL_FILE, PLAN_FILE, REFERENCE_FILE, STIMULUS_FILE,
                        TESTBENCH_FILE)

log = logging.getLogger("pipeline")


@dataclass(frozen=True)
class GenResult:
    """Everything the generation stages produced for one problem."""
    plan: ScenarioPlan
    suite: StimulusSuite
    model: EmulatorScript
    traces: TraceSet
    testbench: str


def make_backend(config: RunConfig) -> ExecutionBackend:
    if config.runtime.fixture_dir:
        return FixtureBackend(config.runtime.fixture_dir)
    if config.runtime.dir:
        return SubprocessBackend(config.runtime.dir,
                                 interpreter=config.runtime.interpreter,
                                 timeout_s=config.script_timeout_s)
    raise BackendError(
        "no script runtime configured: set runtime.dir (tails directory) "
        "or runtime.fixture_dir (recorded results)")


def generate_testbench(problem: Problem, config: RunConfig, gateway,
                       backend: ExecutionBackend, out_dir: str | Path,
                       resume: bool = False) -> GenResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    plan_path = out_dir / PLAN_FILE
    if resume and plan_path.is_file():
        plan = ScenarioPlan(plan_path.read_text(encoding="utf-8"))
        log.info("[stimulus] resume: plan reloaded")
    else:
        plan = design_scenarios(problem, gateway,
                                temperature=config.temperature)
        plan_path.write_text(plan.text, encoding="utf-8")

    stim_path = out_dir / STIMULUS_FILE
    if resume and stim_path.is_file():
        suite = stimulus_from_json(
            json.loads(stim_path.read_text(encoding="utf-8")),
            problem.interface)
        log.info("[stimulus] resume: %d scenarios reloaded",
                 len(suite.scenarios))
    else:
        scripts = generate_stimulus_scripts(problem, plan,
                                            config.stimulus_samples, gateway,
                                            temperature=config.temperature)
        suite = collect_stimuli(scripts, problem.interface, backend,
                                workers=config.candidate_workers)
        stim_path.write_text(dump_wire_json(stimulus_to_json(suite)),
                             encoding="utf-8")

    model_path = out_dir / MODEL_FILE
    ref_path = out_dir / REFERENCE_FILE
    if resume and model_path.is_file() and ref_path.is_file():
        model = EmulatorScript(source=model_path.read_text(encoding="utf-8"),
                               candidate_index=0)
        traces = traceset_from_json(
            json.loads(ref_path.read_text(encoding="utf-8")),
            problem.interface)
        log.info("[self_improve] resume: model and traces reloaded")
    else:
        improve_cfg = ImproveConfig(max_iterations=config.improve_iterations,
                                    n_samples=config.emulator_samples,
                                    temperature=config.temperature)
        model, traces = improve_loop(problem, suite, improve_cfg, gateway,
                                     backend, persist_dir=out_dir)
        model_path.write_text(model.source, encoding="utf-8")

    tb_path = out_dir / TESTBENCH_FILE
    if resume and tb_path.is_file():
        testbench = tb_path.read_text(encoding="utf-8")
    else:
        testbench = emit_testbench(problem.interface, traces)
        tb_path.write_text(testbench, encoding="utf-8")

    return GenResult(plan=plan, suite=suite, model=model, traces=traces,
                     testbench=testbench)


def load_gen_result(problem: Problem, out_dir: str | Path) -> GenResult:
    """Reload a previous generate_testbench run's artifacts, strictly."""
    out_dir = Path(out_dir)
    missing = [name for name in (PLAN_FILE, STIMULUS_FILE, MODEL_FILE,
                                 REFERENCE_FILE, TESTBENCH_FILE)
               if not (out_dir / name).is_file()]
    if missing:
        raise BadProblemError(
            f"workspace {out_dir} is missing artifacts: {', '.join(missing)}"
            " (run gen-tb first, or pass --full)")
    return GenResult(
        plan=ScenarioPlan((out_dir / PLAN_FILE).read_text(encoding="utf-8")),
        suite=stimulus_from_json(
            json.loads((out_dir / STIMULUS_FILE).read_text(encoding="utf-8")),
            problem.interface),
        model=EmulatorScript(
            source=(out_dir / MODEL_FILE).read_text(encoding="utf-8"),
            candidate_index=0),
        traces=traceset_from_json(
            json.loads((out_dir / REFERENCE_FILE).read_text(
                encoding="utf-8")), problem.interface),
        testbench=(out_dir / TESTBENCH_FILE).read_text(encoding="utf-8"))

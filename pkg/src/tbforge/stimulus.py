"""Stimulus agent: scenario design, K-way script sampling, result merging."""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .backend import ExecutionBackend
from .bits import BitVector, parse_bitvector
from .errors import (ExtractionError, ScriptError, StimulusGenError,
                     ValidationError)
from .gateway import Gateway, SamplingParams, extract_code_block
from .interface import ModuleInterface
from .problem import Problem
from .prompts import scenario_design_prompt, stimulus_script_prompt
from .traces import (MAX_SCENARIOS, MAX_TOTAL_STEPS, Scenario, StimulusStep,
                     StimulusSuite)

log = logging.getLogger("stimulus")

_ID_SAFE = re.compile(r"[^A-Za-z0-9_.-]")


@dataclass(frozen=True)
class ScenarioPlan:
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValidationError("scenario plan must be non-empty")


@dataclass(frozen=True)
class StimulusScript:
    source: str
    sample_index: int

    def __post_init__(self):
        if not self.source.strip():
            raise ValidationError("stimulus script must be non-empty")


def design_scenarios(problem: Problem, gateway: Gateway,
                     temperature: float = 0.3) -> ScenarioPlan:
    prompt = scenario_design_prompt(problem)
    params = SamplingParams(temperature=temperature, n_samples=1)
    completion = gateway.complete(prompt, params, stage="stimulus")[0]
    return ScenarioPlan(completion.text)


def generate_stimulus_scripts(problem: Problem, plan: ScenarioPlan, k: int,
                              gateway: Gateway, temperature: float = 0.3
                              ) -> list[StimulusScript]:
    if k < 1:
        raise ValueError("k must be >= 1")
    prompt = stimulus_script_prompt(problem, plan.text)
    params = SamplingParams(temperature=temperature, n_samples=k)
    completions = gateway.complete(prompt, params, stage="stimulus")
    scripts = []
    for i, completion in enumerate(completions):
        try:
            source = extract_code_block(completion.text, "python")
            scripts.append(StimulusScript(source=source, sample_index=i))
        except (ExtractionError, ValidationError) as exc:
            log.warning("stimulus sample %d dropped: %s", i, exc)
    if not scripts:
        raise StimulusGenError(f"all {k} stimulus samples were unusable")
    return scripts


def _sanitize_id(raw: str) -> str:
    cleaned = _ID_SAFE.sub("_", raw.strip()) or "scenario"
    return cleaned


def _scenarios_from_doc(doc, interface: ModuleInterface, sample_index: int
                        ) -> list[Scenario]:
    """Per-scenario validation; bad scenarios are dropped, not fatal."""
    if not isinstance(doc, list):
        log.warning("stimulus sample %d: top level is not a list", sample_index)
        return []
    widths = {p.name: p.width for p in interface.data_inputs()}
    out: list[Scenario] = []
    for entry in doc:
        try:
            if not isinstance(entry, dict):
                raise ValidationError("scenario entry is not an object")
            local_id = _sanitize_id(str(entry.get("scenario", "")))
            raw_steps = entry["steps"]
            if not isinstance(raw_steps, list) or not raw_steps:
                raise ValidationError("steps must be a non-empty list")
            steps = []
            for st in raw_steps:
                if not isinstance(st, dict):
                    raise ValidationError("step is not an object")
                if set(st) != set(widths):
                    raise ValidationError(
                        f"step ports {sorted(st)} != inputs {sorted(widths)}")
                steps.append(StimulusStep(
                    {n: parse_bitvector(str(v), widths[n])
                     for n, v in st.items()}))
            out.append(Scenario(f"s{sample_index}_{local_id}", tuple(steps)))
        except Exception as exc:
            log.warning("stimulus sample %d: scenario dropped: %s",
                        sample_index, exc)
    return out


def collect_stimuli(scripts: list[StimulusScript], interface: ModuleInterface,
                    backend: ExecutionBackend, workers: int = 4
                    ) -> StimulusSuite:
    if not scripts:
        raise StimulusGenError("no stimulus scripts to execute")

    def run_one(script: StimulusScript):
        try:
            return backend.run_stimulus(script.source)
        except ScriptError as exc:
            log.warning("stimulus sample %d failed: %s: %s",
                        script.sample_index, exc.kind, exc.detail)
            return None

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        docs = list(pool.map(run_one, scripts))

    merged: list[Scenario] = []
    seen_keys = set()
    used_ids = set()
    total_steps = 0
    for script, doc in zip(scripts, docs):
        if doc is None:
            continue
        for sc in _scenarios_from_doc(doc, interface, script.sample_index):
            key = sc.key()
            if key in seen_keys:
                continue
            if len(merged) >= MAX_SCENARIOS or \
                    total_steps + len(sc.steps) > MAX_TOTAL_STEPS:
                log.warning("stimulus suite cap reached; truncating")
                break
            sid = sc.id
            suffix = 2
            while sid in used_ids:
                sid = f"{sc.id}_{suffix}"
                suffix += 1
            seen_keys.add(key)
            used_ids.add(sid)
            merged.append(Scenario(sid, sc.steps))
            total_steps += len(sc.steps)
    if not merged:
        raise StimulusGenError("no valid scenarios produced by any script")
    return StimulusSuite(interface, tuple(merged))

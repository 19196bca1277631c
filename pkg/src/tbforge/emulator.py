"""Emulator agent: N-way functional-model sampling and trace collection."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .backend import ExecutionBackend
from .errors import (EmulatorGenError, ExtractionError, ScriptError,
                     StructureError, ValidationError)
from .gateway import Gateway, SamplingParams, extract_code_block
from .problem import Problem
from .prompts import emulator_prompt
from .traces import (StimulusSuite, TraceSet, stimulus_to_json,
                     traceset_from_json)

log = logging.getLogger("emulator")

DEFAULT_CANDIDATE_WORKERS = 4


@dataclass(frozen=True)
class EmulatorScript:
    source: str
    candidate_index: int
    generation: int = 0

    def __post_init__(self):
        if not self.source.strip():
            raise ValidationError("emulator script must be non-empty")


@dataclass(frozen=True)
class CandidateSet:
    candidates: tuple[EmulatorScript, ...]
    params: SamplingParams

    def __post_init__(self):
        if not self.candidates:
            raise ValidationError("candidate set must be non-empty")


@dataclass(frozen=True)
class ExecutionFailure:
    kind: str
    detail: str


def _extract_candidates(completions, generation: int) -> list[str | None]:
    out = []
    for i, completion in enumerate(completions):
        try:
            out.append(extract_code_block(completion.text, "python"))
        except ExtractionError as exc:
            log.warning("candidate %d gen %d unparseable: %s",
                        i, generation, str(exc)[:120])
            out.append(None)
    return out


def sample_candidate_set(prompt, n: int, gateway: Gateway, temperature: float,
                         stage: str, generation: int) -> CandidateSet:
    """Sample n completions into scripts; one regeneration pass, then drop."""
    if n < 1:
        raise ValueError("n must be >= 1")
    params = SamplingParams(temperature=temperature, n_samples=n)
    completions = gateway.complete(prompt, params, stage=stage)
    sources = _extract_candidates(completions, generation)

    bad = [i for i, s in enumerate(sources) if s is None]
    if bad:
        retry = gateway.complete(
            prompt, SamplingParams(temperature=temperature,
                                   n_samples=len(bad)), stage=stage)
        for slot, fixed in zip(bad, _extract_candidates(retry, generation)):
            sources[slot] = fixed

    scripts = []
    for source in sources:
        if source is None or not source.strip():
            continue
        scripts.append(EmulatorScript(source=source,
                                      candidate_index=len(scripts),
                                      generation=generation))
    if not scripts:
        raise EmulatorGenError(f"no usable candidates out of {n} samples")
    return CandidateSet(tuple(scripts), params)


def generate_emulators(problem: Problem, n: int, gateway: Gateway,
                       temperature: float = 0.3) -> CandidateSet:
    return sample_candidate_set(emulator_prompt(problem), n, gateway,
                                temperature, stage="emulator", generation=0)


def run_candidates(candidate_set: CandidateSet, suite: StimulusSuite,
                   backend: ExecutionBackend,
                   workers: int = DEFAULT_CANDIDATE_WORKERS
                   ) -> list[tuple[int, TraceSet | ExecutionFailure]]:
    """One entry per candidate, index order; failures never abort the round."""
    stimulus_doc = stimulus_to_json(suite)

    def run_one(script: EmulatorScript):
        try:
            doc = backend.run_emulator(script.source, stimulus_doc)
            ts = traceset_from_json(doc, suite.interface)
            _check_mirror(ts, suite)
            return ts
        except ScriptError as exc:
            return ExecutionFailure(exc.kind, exc.detail)
        except (ValidationError, StructureError) as exc:
            return ExecutionFailure("protocol", str(exc))

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(run_one, candidate_set.candidates))
    return [(script.candidate_index, result)
            for script, result in zip(candidate_set.candidates, results)]


def _check_mirror(ts: TraceSet, suite: StimulusSuite) -> None:
    """Trace ids and step counts must mirror the suite exactly."""
    got = [(t.scenario_id, len(t.steps)) for t in ts.traces]
    want = [(s.id, len(s.steps)) for s in suite.scenarios]
    if got != want:
        raise StructureError(
            f"trace shape {got[:4]}... does not mirror stimulus {want[:4]}...")

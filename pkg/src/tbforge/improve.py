"""Best-of-N self-improvement: consensus, judge selection, refinement loop."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .backend import ExecutionBackend
from .emulator import (CandidateSet, EmulatorScript, ExecutionFailure,
                       generate_emulators, run_candidates, sample_candidate_set)
from .errors import (AllCandidatesFailedError, ExtractionError,
                     JudgeParseError, ValidationError)
from .gateway import Gateway, SamplingParams, extract_code_block
from .problem import Problem
from .prompts import judge_prompt, refine_prompt
from .traces import (StimulusSuite, TraceSet, compare_tracesets,
                     dump_wire_json, traceset_to_json)

log = logging.getLogger("improve")


@dataclass(frozen=True)
class Consistent:
    representative: TraceSet

    tag = "consistent"

    def evidence_for_prompt(self) -> list[TraceSet]:
        return [self.representative]

    def note(self, n_success: int) -> str:
        return (f"all {n_success} candidates produced identical reference "
                f"signals")


@dataclass(frozen=True)
class OutlierFiltered:
    outlier_index: int
    evidence: tuple[TraceSet, ...]

    tag = "outlier_filtered"

    def evidence_for_prompt(self) -> list[TraceSet]:
        # surviving evidence sets are pairwise equal; render one
        return [self.evidence[0]]

    def note(self, n_success: int) -> str:
        return (f"candidate {self.outlier_index} disagreed with the other "
                f"{n_success - 1} candidates and was filtered as an outlier")


@dataclass(frozen=True)
class NoMajority:
    evidence: tuple[TraceSet, ...]

    tag = "no_majority"

    def evidence_for_prompt(self) -> list[TraceSet]:
        return list(self.evidence)

    def note(self, n_success: int) -> str:
        return (f"no clear majority: {len(self.evidence)} distinct reference "
                f"signal sets among {n_success} candidates")


ConsensusClass = Consistent | OutlierFiltered | NoMajority


@dataclass(frozen=True)
class JudgeSelection:
    best_index: int
    aligned: bool
    analysis: str


@dataclass(frozen=True)
class ImproveConfig:
    max_iterations: int = 3
    n_samples: int = 5
    temperature: float = 0.3

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")


def tracesets_equal(a: TraceSet, b: TraceSet) -> bool:
    """Structures match and every compared value agrees."""
    try:
        return compare_tracesets(a, b) == []
    except Exception:
        return False


def _canonical_key(ts: TraceSet) -> str:
    return json.dumps(traceset_to_json(ts), sort_keys=True,
                      separators=(",", ":"))


def classify_tracesets(results: list[tuple[int, TraceSet | ExecutionFailure]]
                       ) -> ConsensusClass:
    """Consensus cases: consistent, single outlier, or no majority.

    Execution failures are pre-marked outliers: removed before the
    predicate. The single-outlier case needs at least 3 successes,
    otherwise "one differs" is ambiguous.
    """
    successes = [(i, r) for i, r in results if isinstance(r, TraceSet)]
    if not successes:
        raise AllCandidatesFailedError(
            f"all {len(results)} candidates failed to execute")

    keys = [_canonical_key(ts) for _, ts in successes]
    first_of: dict[str, TraceSet] = {}
    for key, (_, ts) in zip(keys, successes):
        first_of.setdefault(key, ts)
    distinct = list(first_of)

    if len(distinct) == 1:
        return Consistent(representative=successes[0][1])

    if len(successes) >= 3 and len(distinct) == 2:
        counts = Counter(keys)
        lone = [key for key, cnt in counts.items() if cnt == 1]
        if len(lone) == 1:
            outlier_pos = keys.index(lone[0])
            outlier_index = successes[outlier_pos][0]
            evidence = tuple(ts for pos, (_, ts) in enumerate(successes)
                             if pos != outlier_pos)
            return OutlierFiltered(outlier_index=outlier_index,
                                   evidence=evidence)

    return NoMajority(evidence=tuple(first_of.values()))


def _parse_judge_reply(text: str, live: list[int]) -> JudgeSelection:
    body = extract_code_block(text, "json")
    doc = json.loads(body)
    best = doc["best"]
    aligned = doc["aligned"]
    analysis = doc.get("analysis", "")
    if not isinstance(best, int) or isinstance(best, bool):
        raise JudgeParseError(f"best is not an integer: {best!r}")
    if not isinstance(aligned, bool):
        raise JudgeParseError(f"aligned is not a boolean: {aligned!r}")
    if best not in live:
        raise JudgeParseError(f"best={best} is not a live candidate {live}")
    return JudgeSelection(best_index=best, aligned=aligned,
                          analysis=str(analysis))


def judge_select(consensus: ConsensusClass, problem: Problem,
                 candidate_set: CandidateSet, gateway: Gateway,
                 live_indices: list[int] | None = None,
                 temperature: float = 0.0) -> JudgeSelection:
    live = sorted(live_indices if live_indices is not None else
                  [c.candidate_index for c in candidate_set.candidates])
    if not live:
        raise AllCandidatesFailedError("no live candidate to select from")
    n_success = len(live)
    prompt = judge_prompt(problem,
                          [c.source for c in candidate_set.candidates],
                          consensus.evidence_for_prompt(),
                          consensus.note(n_success))
    params = SamplingParams(temperature=temperature, n_samples=1)
    for attempt in range(2):
        reply = gateway.complete(prompt, params, stage="self_improve")[0]
        try:
            return _parse_judge_reply(reply.text, live)
        except (ExtractionError, JudgeParseError, KeyError, ValueError,
                json.JSONDecodeError) as exc:
            log.warning("judge reply attempt %d unparseable: %s",
                        attempt, str(exc)[:200])
    log.error("judge reply unparseable twice; falling back to candidate %d",
              live[0])
    return JudgeSelection(best_index=live[0], aligned=False,
                          analysis="judge reply unparseable; fallback "
                                   "selection of the lowest live candidate")


def refine(selected: EmulatorScript, selection: JudgeSelection,
           problem: Problem, n: int, gateway: Gateway,
           evidence: list[TraceSet] | None = None,
           temperature: float = 0.3, stage: str = "self_improve"
           ) -> CandidateSet:
    if selection.aligned:
        raise ValidationError("refine called on an aligned selection")
    prompt = refine_prompt(problem, selected.source, selection.analysis,
                           evidence or [])
    return sample_candidate_set(prompt, n, gateway, temperature, stage,
                                generation=selected.generation + 1)


def improve_loop(problem: Problem, suite: StimulusSuite,
                 config: ImproveConfig, gateway: Gateway,
                 backend: ExecutionBackend,
                 persist_dir: str | Path | None = None
                 ) -> tuple[EmulatorScript, TraceSet]:
    """Generate, run, classify, judge; refine until aligned or budget spent.

    At most max_iterations judge calls; the final round never refines
    because its output could not be examined.
    """
    root = Path(persist_dir) if persist_dir else None
    candidate_set = generate_emulators(problem, config.n_samples, gateway,
                                       temperature=config.temperature)
    best: tuple[EmulatorScript, TraceSet] | None = None
    for round_no in range(config.max_iterations):
        results = run_candidates(candidate_set, suite, backend)
        consensus = classify_tracesets(results)
        live = [i for i, r in results if isinstance(r, TraceSet)]
        selection = judge_select(consensus, problem, candidate_set, gateway,
                                 live_indices=live)
        traces = dict(results)[selection.best_index]
        assert isinstance(traces, TraceSet)
        script = next(c for c in candidate_set.candidates
                      if c.candidate_index == selection.best_index)
        best = (script, traces)
        if root is not None:
            _persist_round(root, round_no, candidate_set, results, selection)
        if selection.aligned:
            break
        if round_no == config.max_iterations - 1:
            log.info("iteration budget spent; returning last judged best")
            break
        candidate_set = refine(script, selection, problem, config.n_samples,
                               gateway,
                               evidence=consensus.evidence_for_prompt(),
                               temperature=config.temperature)
    assert best is not None
    if root is not None:
        (root / "Reference_signal.json").write_text(
            dump_wire_json(traceset_to_json(best[1])), encoding="utf-8")
    return best


def _persist_round(root: Path, round_no: int, candidate_set: CandidateSet,
                   results, selection: JudgeSelection) -> None:
    rdir = root / f"round_{round_no}"
    rdir.mkdir(parents=True, exist_ok=True)
    for script in candidate_set.candidates:
        (rdir / f"Func_candidate_{script.candidate_index}.py").write_text(
            script.source, encoding="utf-8")
    for index, result in results:
        if isinstance(result, TraceSet):
            (rdir / f"Reference_signal_candidate_{index}.json").write_text(
                dump_wire_json(traceset_to_json(result)), encoding="utf-8")
    (rdir / "judge.json").write_text(json.dumps(
        {"best": selection.best_index, "aligned": selection.aligned,
         "analysis": selection.analysis}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")

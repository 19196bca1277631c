"""Benchmark harness: corpus loading, Eval1 / Eval2-alpha metrics, the sweep.

Eval1 asks whether the finalized testbench accepts the golden RTL. Eval2
asks whether its verdicts over a problem's mutants agree with the shipped
golden verdicts on at least alpha percent of them. Mutant runs reuse the
finalized testbench and never enter the judge loop: the metric measures the
testbench's discriminative power, and letting a judge look at mutant DUTs
would contaminate it.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

from .config import RunConfig
from .errors import EvalInputError, SimBuildError, TbforgeError
from .gateway import Gateway, TokenLedger, make_provider
from .pipeline import generate_testbench, make_backend
from .problem import CMB, SEQ, Problem, load_problem
from .validate import VerilatorBuilder, build_and_run, validate_loop
from .workspace import EVAL_STATE_FILE, TESTBENCH_FILE, write_run_meta

log = logging.getLogger("eval")

CORRECT = "CORRECT"
INCORRECT = "INCORRECT"

DEFAULT_ALPHAS = (80, 100)
GOLDEN_TB_FILE = "golden_tb.cpp"
REPORT_JSON = "eval_report.json"
REPORT_TABLE = "eval_table.txt"


@dataclass(frozen=True)
class MutantCase:
    id: str
    source: str
    golden_verdict: str

    def __post_init__(self):
        if self.golden_verdict not in (CORRECT, INCORRECT):
            raise EvalInputError(
                f"mutant {self.id}: golden verdict must be {CORRECT} or "
                f"{INCORRECT}, got {self.golden_verdict!r}")


@dataclass(frozen=True)
class ProblemRecord:
    problem: Problem
    golden_dut: str
    mutants: tuple[MutantCase, ...]

    def __post_init__(self):
        ids = [m.id for m in self.mutants]
        if len(set(ids)) != len(ids):
            raise EvalInputError(
                f"problem {self.problem.id}: duplicate mutant ids")


@dataclass(frozen=True)
class CorpusStats:
    n_problems: int
    n_cmb: int
    n_seq: int
    n_mutants: int
    n_correct: int
    n_incorrect: int


def corpus_stats(records: list[ProblemRecord]) -> CorpusStats:
    mutants = [m for r in records for m in r.mutants]
    return CorpusStats(
        n_problems=len(records),
        n_cmb=sum(1 for r in records if r.problem.circuit_type == CMB),
        n_seq=sum(1 for r in records if r.problem.circuit_type == SEQ),
        n_mutants=len(mutants),
        n_correct=sum(1 for m in mutants if m.golden_verdict == CORRECT),
        n_incorrect=sum(1 for m in mutants if m.golden_verdict == INCORRECT))


def _load_mutants(problem_dir: Path) -> tuple[MutantCase, ...]:
    mdir = problem_dir / "mutants"
    if not mdir.is_dir():
        return ()
    mutants = []
    for src in sorted(mdir.glob("*.v")):
        verdict_path = src.with_suffix(".verdict")
        if not verdict_path.is_file():
            raise EvalInputError(
                f"{src} has no {verdict_path.name}; golden verdicts ship "
                "with the corpus (see the derive-verdicts command)")
        verdict = verdict_path.read_text(encoding="utf-8").strip().upper()
        mutants.append(MutantCase(id=src.stem,
                                  source=src.read_text(encoding="utf-8"),
                                  golden_verdict=verdict))
    return tuple(mutants)


def load_corpus(root: str | Path) -> list[ProblemRecord]:
    """Layout: <root>/<pid>/{spec.txt, top.v, meta.json, mutants/*.v+.verdict}."""
    root = Path(root)
    if not root.is_dir():
        raise EvalInputError(f"corpus directory not found: {root}")
    records = []
    for child in sorted(root.iterdir()):
        if not child.is_dir() or child.name.startswith("."):
            continue
        problem = load_problem(child)
        records.append(ProblemRecord(problem=problem,
                                     golden_dut=problem.dut_source,
                                     mutants=_load_mutants(child)))
    if not records:
        raise EvalInputError(f"corpus {root} contains no problems")
    return records


# --- metrics ---

def _status(verdict: Any, where: str) -> str:
    status = getattr(verdict, "dut_status", verdict)
    if status not in ("PASS", "FAIL"):
        raise EvalInputError(f"{where}: verdict must be PASS or FAIL, "
                             f"got {status!r}")
    return status


def eval1(records: list[ProblemRecord],
          verdicts: Mapping[str, Any]) -> float:
    """Fraction of problems whose testbench passes the golden DUT."""
    if not records:
        raise EvalInputError("eval1 over an empty problem list")
    missing = [r.problem.id for r in records
               if r.problem.id not in verdicts]
    if missing:
        raise EvalInputError(f"missing golden verdicts for: {missing}")
    passes = sum(
        1 for r in records
        if _status(verdicts[r.problem.id], r.problem.id) == "PASS")
    return passes / len(records)


def agreement_counts(records: list[ProblemRecord],
                     matrix: Mapping[str, Mapping[str, Any]]
                     ) -> dict[str, tuple[int, int]]:
    """Per problem: (mutants agreeing with the golden verdict, mutants)."""
    counts: dict[str, tuple[int, int]] = {}
    for record in records:
        pid = record.problem.id
        row = matrix.get(pid)
        if row is None:
            raise EvalInputError(f"matrix has no row for problem {pid}")
        extra = set(row) - {m.id for m in record.mutants}
        if extra:
            raise EvalInputError(f"{pid}: unknown mutant ids {sorted(extra)}")
        agree = 0
        for mutant in record.mutants:
            if mutant.id not in row:
                raise EvalInputError(
                    f"{pid}: matrix missing verdict for mutant {mutant.id}")
            status = _status(row[mutant.id], f"{pid}/{mutant.id}")
            if (status == "PASS") == (mutant.golden_verdict == CORRECT):
                agree += 1
        counts[pid] = (agree, len(record.mutants))
    return counts


def _check_alpha(alpha: Any) -> int:
    if isinstance(alpha, bool) or not isinstance(alpha, int):
        raise EvalInputError(f"alpha must be an integer percent, "
                             f"got {alpha!r}")
    if not 0 <= alpha <= 100:
        raise EvalInputError(f"alpha out of range [0, 100]: {alpha}")
    return alpha


def eval2(records: list[ProblemRecord],
          matrix: Mapping[str, Mapping[str, Any]], alpha: int) -> float:
    """Fraction of mutant-bearing problems agreeing on >= alpha% of mutants.

    The threshold test is exact integer arithmetic; zero-mutant problems
    are excluded rather than dividing by zero.
    """
    alpha = _check_alpha(alpha)
    counts = agreement_counts(records, matrix)
    eligible = [(agree, total) for agree, total in counts.values()
                if total > 0]
    if not eligible:
        raise EvalInputError("every problem has zero mutants")
    met = sum(1 for agree, total in eligible if agree * 100 >= alpha * total)
    return met / len(eligible)


# --- report assembly ---

@dataclass(frozen=True)
class ProblemRow:
    problem_id: str
    circuit_type: str
    eval1_pre: bool   # golden PASS before any judge-driven repair
    eval1_post: bool  # golden PASS after the validation loop
    rounds_used: int
    n_mutants: int
    n_agreements: int
    mutant_status: Mapping[str, str]
    error: str | None = None

    def __post_init__(self):
        if not 0 <= self.n_agreements <= self.n_mutants:
            raise EvalInputError("agreement count out of range")

    def agreement(self) -> float | None:
        if self.n_mutants == 0:
            return None
        return self.n_agreements / self.n_mutants

    def meets(self, alpha: int) -> bool:
        return self.n_agreements * 100 >= alpha * self.n_mutants


def make_row(record: ProblemRecord, eval1_pre: bool, eval1_post: bool,
             rounds_used: int, mutant_status: Mapping[str, str],
             error: str | None = None) -> ProblemRow:
    """Derives the agreement count from the status map, the single source."""
    if set(mutant_status) != {m.id for m in record.mutants}:
        raise EvalInputError(
            f"{record.problem.id}: status map does not cover the mutants")
    agree = sum(
        1 for m in record.mutants
        if (_status(mutant_status[m.id], m.id) == "PASS")
        == (m.golden_verdict == CORRECT))
    return ProblemRow(problem_id=record.problem.id,
                      circuit_type=record.problem.circuit_type,
                      eval1_pre=eval1_pre, eval1_post=eval1_post,
                      rounds_used=rounds_used,
                      n_mutants=len(record.mutants), n_agreements=agree,
                      mutant_status=dict(mutant_status), error=error)


@dataclass(frozen=True)
class TypeRates:
    """Counts for one circuit-type bucket; rates derive from them exactly."""
    n_problems: int
    eval1_pre_passes: int
    eval1_post_passes: int
    n_eligible: int
    eval2_met: Mapping[int, int]

    def eval1_pre_rate(self) -> float | None:
        return self.eval1_pre_passes / self.n_problems \
            if self.n_problems else None

    def eval1_post_rate(self) -> float | None:
        return self.eval1_post_passes / self.n_problems \
            if self.n_problems else None

    def eval2_rate(self, alpha: int) -> float | None:
        return self.eval2_met[alpha] / self.n_eligible \
            if self.n_eligible else None


@dataclass(frozen=True)
class EvalReport:
    alphas: tuple[int, ...]
    per_type: Mapping[str, TypeRates]
    per_problem: tuple[ProblemRow, ...]
    excluded: tuple[str, ...]  # zero-mutant problem ids
    mutant_split: tuple[int, int] = (0, 0)  # (correct, incorrect)

    @property
    def eval1_rate(self) -> float | None:
        return self.per_type["TOTAL"].eval1_post_rate()

    @property
    def eval2_rates(self) -> dict[int, float | None]:
        total = self.per_type["TOTAL"]
        return {a: total.eval2_rate(a) for a in self.alphas}

    def as_dict(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "eval1_rate": self.eval1_rate,
            "eval2_rates": {str(a): r for a, r in self.eval2_rates.items()},
            "per_type": {
                name: {
                    "n_problems": tr.n_problems,
                    "n_eligible": tr.n_eligible,
                    "eval1_pre_judge": {"passes": tr.eval1_pre_passes,
                                        "rate": tr.eval1_pre_rate()},
                    "eval1_post_judge": {"passes": tr.eval1_post_passes,
                                         "rate": tr.eval1_post_rate()},
                    "eval2": {str(a): {"met": tr.eval2_met[a],
                                       "rate": tr.eval2_rate(a)}
                              for a in self.alphas},
                } for name, tr in self.per_type.items()},
            "per_problem": [
                {"problem": row.problem_id,
                 "circuit_type": row.circuit_type,
                 "eval1_pre_judge": row.eval1_pre,
                 "eval1_post_judge": row.eval1_post,
                 "rounds_used": row.rounds_used,
                 "n_mutants": row.n_mutants,
                 "n_agreements": row.n_agreements,
                 "agreement": row.agreement(),
                 "mutant_status": dict(sorted(row.mutant_status.items())),
                 "error": row.error} for row in self.per_problem],
            "excluded_zero_mutant": list(self.excluded),
            "mutant_split": {"correct": self.mutant_split[0],
                             "incorrect": self.mutant_split[1]},
        }


def _rates_for(rows: list[ProblemRow], alphas: tuple[int, ...]) -> TypeRates:
    eligible = [r for r in rows if r.n_mutants > 0]
    return TypeRates(
        n_problems=len(rows),
        eval1_pre_passes=sum(1 for r in rows if r.eval1_pre),
        eval1_post_passes=sum(1 for r in rows if r.eval1_post),
        n_eligible=len(eligible),
        eval2_met={a: sum(1 for r in eligible if r.meets(a))
                   for a in alphas})


def report_from_rows(records: list[ProblemRecord],
                     rows: list[ProblemRow],
                     alphas: tuple[int, ...] = DEFAULT_ALPHAS) -> EvalReport:
    alphas = tuple(sorted({_check_alpha(a) for a in alphas}))
    if [r.problem.id for r in records] != [row.problem_id for row in rows]:
        raise EvalInputError("rows do not line up with the corpus")
    stats = corpus_stats(records)
    per_type = {
        CMB: _rates_for([r for r in rows if r.circuit_type == CMB], alphas),
        SEQ: _rates_for([r for r in rows if r.circuit_type == SEQ], alphas),
        "TOTAL": _rates_for(list(rows), alphas),
    }
    return EvalReport(
        alphas=alphas, per_type=per_type, per_problem=tuple(rows),
        excluded=tuple(r.problem_id for r in rows if r.n_mutants == 0),
        mutant_split=(stats.n_correct, stats.n_incorrect))


def _cell(rate: float | None, met: int | None, n: int | None) -> str:
    if rate is None:
        return "n/a"
    return f"{rate * 100:6.2f}% ({met}/{n})"


def render_table(report: EvalReport) -> str:
    """Fixed-width text table; row order Eval2-100%, Eval2-80%, ..., Eval1."""
    columns = [CMB, SEQ, "TOTAL"]
    header = ["Criterion".ljust(18)] + [c.ljust(16) for c in columns]
    lines = ["".join(header).rstrip()]
    for alpha in sorted(report.alphas, reverse=True):
        cells = []
        for name in columns:
            tr = report.per_type[name]
            cells.append(_cell(tr.eval2_rate(alpha), tr.eval2_met[alpha],
                               tr.n_eligible).ljust(16))
        lines.append((f"Eval2-{alpha}%".ljust(18) + "".join(cells)).rstrip())
    for label, pre in (("Eval1", False), ("Eval1 (pre-judge)", True)):
        cells = []
        for name in columns:
            tr = report.per_type[name]
            rate = tr.eval1_pre_rate() if pre else tr.eval1_post_rate()
            passes = tr.eval1_pre_passes if pre else tr.eval1_post_passes
            cells.append(_cell(rate, passes, tr.n_problems).ljust(16))
        lines.append((label.ljust(18) + "".join(cells)).rstrip())
    correct, incorrect = report.mutant_split
    lines.append(f"mutants: {correct} correct / {incorrect} incorrect; "
                 f"zero-mutant problems excluded from Eval2: "
                 f"{len(report.excluded)}")
    return "\n".join(lines) + "\n"


# --- the sweep ---

def _forced_disagreement(mutant: MutantCase) -> str:
    # an errored mutant run must never count as agreement
    return "FAIL" if mutant.golden_verdict == CORRECT else "PASS"


def _eval_problem(record: ProblemRecord, config: RunConfig, gateway: Gateway,
                  backend, builder, problem_dir: Path) -> ProblemRow:
    """Full pipeline on the golden DUT, then mutant re-runs, no judge."""
    problem = record.problem
    gen = generate_testbench(problem, config, gateway, backend, problem_dir)
    verdict = validate_loop(problem, gen.suite, gen.model, gen.traces,
                            config.validation_budget, gateway, backend,
                            problem_dir, plan_text=gen.plan.text,
                            builder=builder,
                            run_timeout_s=config.sim_run_timeout_s)
    final_tb = (problem_dir / TESTBENCH_FILE).read_text(encoding="utf-8")

    mutant_status: dict[str, str] = {}
    notes: list[str] = []
    for mutant in record.mutants:
        try:
            outcome = build_and_run(
                mutant.source, problem.interface, final_tb,
                problem_dir / "mutants" / mutant.id, builder=builder,
                run_timeout_s=config.sim_run_timeout_s)
            mutant_status[mutant.id] = "PASS" if outcome.passed else "FAIL"
        except TbforgeError as exc:
            mutant_status[mutant.id] = _forced_disagreement(mutant)
            notes.append(f"{mutant.id}: {type(exc).__name__}")
            log.warning("[eval] %s mutant %s errored: %s", problem.id,
                        mutant.id, exc)
    return make_row(record, eval1_pre=verdict.history[0][0].passed,
                    eval1_post=verdict.dut_status == "PASS",
                    rounds_used=verdict.rounds_used,
                    mutant_status=mutant_status,
                    error="; ".join(notes) or None)


def _row_from_state(path: Path, record: ProblemRecord) -> ProblemRow | None:
    if not path.is_file():
        return None
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        row = make_row(record, eval1_pre=bool(doc["eval1_pre"]),
                       eval1_post=bool(doc["eval1_post"]),
                       rounds_used=int(doc["rounds_used"]),
                       mutant_status=doc["mutant_status"],
                       error=doc.get("error"))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError,
            TbforgeError):
        log.warning("[eval] stale or unreadable state %s; re-running", path)
        return None
    return row


def _write_state(path: Path, row: ProblemRow) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({
        "problem": row.problem_id,
        "eval1_pre": row.eval1_pre,
        "eval1_post": row.eval1_post,
        "rounds_used": row.rounds_used,
        "mutant_status": dict(sorted(row.mutant_status.items())),
        "error": row.error,
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _problem_entry(record: ProblemRecord, config: RunConfig,
                   gateway: Gateway, backend, builder, out_root: Path,
                   resume: bool, runner: Callable) -> ProblemRow:
    problem_dir = out_root / record.problem.id
    state_path = problem_dir / EVAL_STATE_FILE
    if resume:
        row = _row_from_state(state_path, record)
        if row is not None:
            log.info("[eval] %s: resumed from state", record.problem.id)
            return row
    try:
        row = runner(record, config, gateway, backend, builder, problem_dir)
    except TbforgeError as exc:
        # a broken pipeline is a FAIL row, never a sweep abort
        log.error("[eval] %s failed: %s", record.problem.id, exc)
        row = make_row(record, eval1_pre=False, eval1_post=False,
                       rounds_used=0,
                       mutant_status={m.id: _forced_disagreement(m)
                                      for m in record.mutants},
                       error=f"{type(exc).__name__}: {exc}")
    _write_state(state_path, row)
    return row


def run_benchmark(corpus_dir: str | Path, config: RunConfig,
                  gateway: Gateway | None = None, backend=None, builder=None,
                  alphas: tuple[int, ...] = DEFAULT_ALPHAS,
                  resume: bool = False, out_dir: str | Path | None = None,
                  runner: Callable | None = None) -> EvalReport:
    """Sweep the corpus; write eval_report.json and the text table."""
    for alpha in alphas:
        _check_alpha(alpha)
    records = load_corpus(corpus_dir)
    if gateway is None:
        gateway = Gateway(make_provider(config.provider), TokenLedger())
    if backend is None:
        backend = make_backend(config)
    if builder is None:
        builder = VerilatorBuilder(config.build_timeout_s)
    runner = runner or _eval_problem
    out_root = Path(out_dir) if out_dir else Path(config.workspace)
    out_root.mkdir(parents=True, exist_ok=True)

    rows_by_id: dict[str, ProblemRow] = {}
    with ThreadPoolExecutor(max_workers=config.eval_workers) as pool:
        futures = {
            pool.submit(_problem_entry, record, config, gateway, backend,
                        builder, out_root, resume, runner):
            record.problem.id for record in records}
        for future in as_completed(futures):
            rows_by_id[futures[future]] = future.result()

    rows = [rows_by_id[r.problem.id] for r in records]
    report = report_from_rows(records, rows, alphas)
    (out_root / REPORT_JSON).write_text(
        json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    (out_root / REPORT_TABLE).write_text(render_table(report),
                                         encoding="utf-8")
    write_run_meta(out_root, config, gateway.ledger,
                   extra={"corpus": str(corpus_dir)})
    return report


# --- golden-verdict derivation (corpus helper) ---

def derive_verdicts(corpus_dir: str | Path, builder=None,
                    run_timeout_s: float = 60.0,
                    workdir: str | Path | None = None
                    ) -> dict[str, dict[str, str]]:
    """Simulate each mutant against the corpus's golden testbench.

    A mutant that passes is CORRECT, anything else INCORRECT. The golden
    DUT itself must build and pass first; a corpus whose golden testbench
    rejects its own golden RTL is inconsistent and aborts.
    """
    import tempfile

    root = Path(corpus_dir)
    if not root.is_dir():
        raise EvalInputError(f"corpus directory not found: {root}")
    builder = builder or VerilatorBuilder()
    results: dict[str, dict[str, str]] = {}
    with tempfile.TemporaryDirectory(prefix="verdicts_") as tmp:
        scratch = Path(workdir) if workdir else Path(tmp)
        for child in sorted(root.iterdir()):
            if not child.is_dir() or child.name.startswith("."):
                continue
            problem = load_problem(child)
            tb_path = child / GOLDEN_TB_FILE
            if not tb_path.is_file():
                raise EvalInputError(
                    f"{problem.id}: no {GOLDEN_TB_FILE} to derive verdicts "
                    "from")
            tb = tb_path.read_text(encoding="utf-8")
            golden = build_and_run(problem.dut_source, problem.interface, tb,
                                   scratch / problem.id / "golden",
                                   builder=builder,
                                   run_timeout_s=run_timeout_s)
            if not golden.build_ok:
                raise SimBuildError(
                    f"{problem.id}: golden testbench does not build:\n"
                    f"{golden.raw_log[:2000]}")
            if not golden.passed:
                raise EvalInputError(
                    f"{problem.id}: golden DUT fails its own testbench; "
                    "corpus is inconsistent")
            verdicts: dict[str, str] = {}
            for src in sorted((child / "mutants").glob("*.v")):
                try:
                    outcome = build_and_run(
                        src.read_text(encoding="utf-8"), problem.interface,
                        tb, scratch / problem.id / src.stem, builder=builder,
                        run_timeout_s=run_timeout_s)
                    verdict = CORRECT if outcome.passed else INCORRECT
                except TbforgeError:
                    verdict = INCORRECT
                src.with_suffix(".verdict").write_text(verdict + "\n",
                                                       encoding="utf-8")
                verdicts[src.stem] = verdict
            results[problem.id] = verdicts
    return results

"""Command-line entry point.

Exit codes: 0 success/PASS, 1 verification FAIL, 2 bad input,
3 environment, 4 provider. That mapping is a stable contract; scripts may
key on it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import re
import sys
from pathlib import Path

from . import __version__
from .config import CONFIG_KEYS, RunConfig, load_config
from .errors import (AllCandidatesFailedError, BackendError, BadProblemError,
                     ConfigError, EmulatorGenError, EvalInputError,
                     ExtractionError, FixtureMissError, ProtocolError,
                     ProviderError, ScriptError, SimBuildError,
                     SimTimeoutError, StimulusGenError, TbforgeError,
                     ToolchainMissingError)
from .evalharness import (DEFAULT_ALPHAS, derive_verdicts, load_corpus,
                          render_table, run_benchmark)
from .gateway import (Gateway, PromptBundle, TokenLedger, format_ledger_table,
                      make_provider)
from .pipeline import generate_testbench, load_gen_result, make_backend
from .problem import load_problem
from .validate import VerilatorBuilder, validate_loop
from .workspace import Workspace, write_error, write_run_meta

log = logging.getLogger("cli")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_BAD_INPUT = 2
EXIT_ENVIRONMENT = 3
EXIT_PROVIDER = 4

# most-derived class wins; order here is documentation only
_ERROR_EXITS: list[tuple[type, int]] = [
    (ToolchainMissingError, EXIT_ENVIRONMENT),
    (BackendError, EXIT_ENVIRONMENT),
    (SimTimeoutError, EXIT_ENVIRONMENT),
    (ProtocolError, EXIT_ENVIRONMENT),
    (ScriptError, EXIT_ENVIRONMENT),
    (ProviderError, EXIT_PROVIDER),
    (FixtureMissError, EXIT_PROVIDER),
    (ExtractionError, EXIT_PROVIDER),
    (StimulusGenError, EXIT_PROVIDER),
    (EmulatorGenError, EXIT_PROVIDER),
    (AllCandidatesFailedError, EXIT_PROVIDER),
    (SimBuildError, EXIT_BAD_INPUT),
    (BadProblemError, EXIT_BAD_INPUT),
    (EvalInputError, EXIT_BAD_INPUT),
    (ConfigError, EXIT_BAD_INPUT),
]


def exit_code_for(exc: TbforgeError) -> int:
    for cls, code in _ERROR_EXITS:
        if isinstance(exc, cls):
            return code
    return EXIT_BAD_INPUT


class _StageFormatter(logging.Formatter):
    """Line prefix `[LEVEL] [stage]`, machine-parsable."""

    def format(self, record):
        return (f"[{record.levelname}] [{record.name}] "
                f"{record.getMessage()}")


def configure_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_StageFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE",
                        help="JSON run configuration")
    group = parser.add_argument_group(
        "config overrides", "any config key by its dotted name")
    for key in sorted(CONFIG_KEYS):
        group.add_argument(f"--{key}", dest=key, metavar="V",
                           help=argparse.SUPPRESS)


def _config_from(args: argparse.Namespace) -> RunConfig:
    overrides = {key: value for key, value in vars(args).items()
                 if key in CONFIG_KEYS and value is not None}
    return load_config(args.config, overrides)


def _gateway_for(config: RunConfig, transcript_dir: Path | None,
                 record_dir: str | None = None) -> Gateway:
    provider = make_provider(config.provider, record_dir=record_dir)
    return Gateway(provider, TokenLedger(), transcript_dir=transcript_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tbforge",
        description="LLM-driven testbench generation and DUT verification")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-tb", help="generate testbench artifacts")
    p.add_argument("problem_dir")
    p.add_argument("--out", help="workspace root (default: config workspace)")
    p.add_argument("--resume", action="store_true",
                   help="skip stages whose artifacts already exist")
    p.add_argument("--record-fixtures", metavar="DIR",
                   help="record remote completions as fixtures into DIR")
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen_tb)

    p = sub.add_parser("verify", help="verify a DUT against the testbench")
    p.add_argument("problem_dir")
    p.add_argument("--dut", help="DUT source (default: problem_dir/top.v)")
    p.add_argument("--out", help="workspace root (default: config workspace)")
    p.add_argument("--full", action="store_true",
                   help="generate missing artifacts first")
    _add_config_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", help="run the benchmark over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--alpha", action="append", type=int, metavar="PCT",
                   help="Eval2 threshold percent (repeatable; "
                        "default 80 and 100)")
    p.add_argument("--out", help="workspace root (default: config workspace)")
    p.add_argument("--resume", action="store_true",
                   help="reuse persisted per-problem results")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("derive-verdicts",
                       help="derive mutant golden verdicts from a corpus's "
                            "golden testbenches")
    p.add_argument("corpus_dir")
    _add_config_flags(p)
    p.set_defaults(func=cmd_derive_verdicts)

    p = sub.add_parser("fixtures", help="manage completion fixtures")
    fsub = p.add_subparsers(dest="fixtures_command", required=True)
    fr = fsub.add_parser("record",
                         help="rebuild fixture files from run transcripts")
    fr.add_argument("transcripts", help="workspace or transcript directory")
    fr.add_argument("--into", required=True, help="fixture directory")
    _add_config_flags(fr)
    fr.set_defaults(func=cmd_fixtures_record)
    fc = fsub.add_parser("check", help="validate a fixture directory")
    fc.add_argument("fixture_dir")
    _add_config_flags(fc)
    fc.set_defaults(func=cmd_fixtures_check)

    return parser


def cmd_gen_tb(args: argparse.Namespace, config: RunConfig) -> int:
    problem = load_problem(args.problem_dir)
    ws = Workspace(Path(args.out or config.workspace))
    out_dir = ws.problem_dir(problem.id)
    gateway = _gateway_for(config, ws.transcript_dir(problem.id),
                           record_dir=args.record_fixtures)
    backend = make_backend(config)
    try:
        gen = generate_testbench(problem, config, gateway, backend, out_dir,
                                 resume=args.resume)
    finally:
        write_run_meta(out_dir, config, gateway.ledger,
                       extra={"command": "gen-tb"})
    log.info("[stimulus] %d scenarios, %d steps",
             len(gen.suite.scenarios), gen.suite.step_count())
    print(f"artifacts written to {out_dir}")
    print(format_ledger_table(gateway.ledger))
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, config: RunConfig) -> int:
    problem = load_problem(args.problem_dir)
    if args.dut:
        dut_source = Path(args.dut).read_text(encoding="utf-8")
        problem = dataclasses.replace(problem, dut_source=dut_source)
    ws = Workspace(Path(args.out or config.workspace))
    out_dir = ws.problem_dir(problem.id)
    gateway = _gateway_for(config, ws.transcript_dir(problem.id))
    backend = make_backend(config)
    builder = VerilatorBuilder(config.build_timeout_s)
    try:
        if args.full:
            gen = generate_testbench(problem, config, gateway, backend,
                                     out_dir, resume=True)
        else:
            gen = load_gen_result(problem, out_dir)
        verdict = validate_loop(problem, gen.suite, gen.model, gen.traces,
                                config.validation_budget, gateway, backend,
                                out_dir, plan_text=gen.plan.text,
                                builder=builder,
                                run_timeout_s=config.sim_run_timeout_s)
    finally:
        write_run_meta(out_dir, config, gateway.ledger,
                       extra={"command": "verify"})
    print(f"VERDICT: {verdict.dut_status} rounds={verdict.rounds_used}")
    return EXIT_OK if verdict.dut_status == "PASS" else EXIT_FAIL


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    alphas = tuple(args.alpha) if args.alpha else DEFAULT_ALPHAS
    out_root = Path(args.out) if args.out else None
    report = run_benchmark(args.corpus, config, alphas=alphas,
                           resume=args.resume, out_dir=out_root)
    print(render_table(report), end="")
    return EXIT_OK


def cmd_derive_verdicts(args: argparse.Namespace, config: RunConfig) -> int:
    builder = VerilatorBuilder(config.build_timeout_s)
    results = derive_verdicts(args.corpus_dir, builder=builder,
                              run_timeout_s=config.sim_run_timeout_s)
    total = sum(len(v) for v in results.values())
    print(f"derived {total} verdicts across {len(results)} problems")
    return EXIT_OK


_TRANSCRIPT_KEYS = {"system", "user", "few_shots", "completions"}
_LLM_FIXTURE_RE = re.compile(r"^[0-9a-f]{64}\.(\d+)\.json$")
_BACKEND_FIXTURE_RE = re.compile(r"^(stim|emu)_[0-9a-f]{64}\.json$")


def cmd_fixtures_record(args: argparse.Namespace, config: RunConfig) -> int:
    """Turn persisted transcripts back into replayable fixture files."""
    root = Path(args.transcripts)
    if not root.is_dir():
        raise EvalInputError(f"no such directory: {root}")
    into = Path(args.into)
    into.mkdir(parents=True, exist_ok=True)
    written = 0
    for path in sorted(root.rglob("*.json")):
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            continue
        if not isinstance(doc, dict) or not _TRANSCRIPT_KEYS <= set(doc):
            continue
        prompt = PromptBundle(system=doc["system"], user=doc["user"],
                              few_shots=tuple(tuple(p)
                                              for p in doc["few_shots"]))
        usage = doc.get("usage") or [[0, 0]] * len(doc["completions"])
        for index, text in enumerate(doc["completions"]):
            p_tokens, c_tokens = usage[index]
            out = into / f"{prompt.digest()}.{index}.json"
            out.write_text(json.dumps(
                {"text": text, "prompt_tokens": p_tokens,
                 "completion_tokens": c_tokens},
                indent=2, sort_keys=True) + "\n", encoding="utf-8")
            written += 1
    if not written:
        raise EvalInputError(f"no transcripts found under {root}")
    print(f"wrote {written} fixture files to {into}")
    return EXIT_OK


def cmd_fixtures_check(args: argparse.Namespace, config: RunConfig) -> int:
    """Validate fixture filenames and schemas; list every offender."""
    root = Path(args.fixture_dir)
    if not root.is_dir():
        raise EvalInputError(f"no such directory: {root}")
    bad: list[str] = []
    count = 0
    for path in sorted(root.glob("*.json")):
        count += 1
        name = path.name
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            bad.append(f"{name}: unreadable ({exc})")
            continue
        if _LLM_FIXTURE_RE.match(name):
            if not (isinstance(doc, dict)
                    and isinstance(doc.get("text"), str)
                    and isinstance(doc.get("prompt_tokens"), int)
                    and isinstance(doc.get("completion_tokens"), int)
                    and doc["prompt_tokens"] >= 0
                    and doc["completion_tokens"] >= 0):
                bad.append(f"{name}: bad completion-fixture schema")
        elif _BACKEND_FIXTURE_RE.match(name):
            if isinstance(doc, dict) and "__error__" in doc:
                err = doc["__error__"]
                if not (isinstance(err, dict) and "kind" in err):
                    bad.append(f"{name}: bad error-marker schema")
        else:
            bad.append(f"{name}: unrecognized fixture filename")
    for line in bad:
        print(line)
    if bad:
        raise EvalInputError(f"{len(bad)} of {count} fixture files invalid")
    print(f"{count} fixture files ok")
    return EXIT_OK


def _error_kind(exc: TbforgeError) -> str:
    name = type(exc).__name__
    return name[:-5] if name.endswith("Error") else name


def _report_error(args: argparse.Namespace, exc: TbforgeError,
                  config: RunConfig | None) -> int:
    code = exit_code_for(exc)
    log.error("%s: %s (exit %d)", type(exc).__name__, exc, code)
    out = getattr(args, "out", None) or (config.workspace if config else None)
    if out:
        write_error(Path(out), kind=_error_kind(exc), detail=str(exc))
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        config = _config_from(args)
    except TbforgeError as exc:
        return _report_error(args, exc, None)
    try:
        return args.func(args, config)
    except TbforgeError as exc:
        return _report_error(args, exc, config)


if __name__ == "__main__":
    sys.exit(main())

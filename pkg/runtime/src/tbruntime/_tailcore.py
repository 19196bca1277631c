"""Shared plumbing for the script-execution tails.

Both tails follow the same lifecycle: pin every randomness source, move
into a throwaway working directory, exec the candidate script in a fresh
namespace, validate what it handed back, and write canonical JSON to the
designated output path.

Exit codes are the cross-language protocol the consumer keys on:

    0   success
    10  entry point returned something malformed
    11  entry point missing
    12  candidate code raised

Bad argv or unreadable harness files exit 2; a correctly driven tail
never takes that path. Every failure also prints one machine-readable
JSON line on stderr, after the traceback if there is one. Consumers must
key on the exit code only.
"""

import atexit
import json
import os
import random
import shutil
import sys
import tempfile
import traceback

EXIT_OK = 0
EXIT_BAD_RETURN = 10
EXIT_NO_ENTRY = 11
EXIT_CRASH = 12
EXIT_USAGE = 2

SEED = 42


def ensure_fixed_hash_seed():
    """Re-exec once with PYTHONHASHSEED=0 unless already pinned.

    Hash randomization changes set/dict-of-str iteration order between
    interpreter runs, which would break the byte-identical-rerun
    guarantee for candidates that iterate sets. execve replaces the
    process in place, so this costs no extra child process.
    """
    if os.environ.get("PYTHONHASHSEED") == "0":
        return
    env = dict(os.environ, PYTHONHASHSEED="0")
    os.execve(sys.executable, [sys.executable] + sys.argv, env)


def fail(code, kind, detail, scenario=None, step=None):
    doc = {"error": kind, "detail": detail}
    if scenario is not None:
        doc["scenario"] = scenario
    if step is not None:
        doc["step"] = step
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    sys.exit(code)


def crash(detail, scenario=None, step=None):
    """Exit 12 with the candidate's traceback plus the JSON error line."""
    traceback.print_exc()
    fail(EXIT_CRASH, "crash", detail, scenario=scenario, step=step)


def enter_scratch_dir():
    """chdir into a temp dir so candidate file writes land nowhere real.

    Callers must resolve their own paths to absolute before this. The dir
    is removed at exit; best-effort isolation only, not a sandbox.
    """
    scratch = tempfile.mkdtemp(prefix="tail_")
    atexit.register(shutil.rmtree, scratch, ignore_errors=True)
    os.chdir(scratch)
    return scratch


def load_script(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        fail(EXIT_USAGE, "usage", f"cannot read script: {exc}")


def exec_candidate(source, path):
    """Run the candidate's top level; return its module namespace."""
    random.seed(SEED)  # pinned before any candidate code runs
    namespace = {"__name__": "candidate", "__file__": str(path)}
    try:
        exec(compile(source, str(path), "exec"), namespace)
    except BaseException as exc:  # even SystemExit: candidates must return
        crash(f"candidate script raised at import time: {exc!r}")
    return namespace


def is_bits(value):
    return (isinstance(value, str) and value != ""
            and all(ch in "01" for ch in value))


def check_port_map(mapping, what, scenario=None, step=None):
    """Well-formedness only: string names, non-empty 0/1 string values.

    Widths and port sets are the consumer's problem; the tail has no
    interface description to check them against.
    """
    if not isinstance(mapping, dict):
        fail(EXIT_BAD_RETURN, "bad-return",
             f"{what} must be a map of port name to binary string, "
             f"got {type(mapping).__name__}", scenario=scenario, step=step)
    for name, value in mapping.items():
        if not isinstance(name, str):
            fail(EXIT_BAD_RETURN, "bad-return",
                 f"{what}: port name {name!r} is not a string",
                 scenario=scenario, step=step)
        if not is_bits(value):
            fail(EXIT_BAD_RETURN, "bad-return",
                 f"{what}: value for {name!r} must be a non-empty string "
                 f"of 0/1, got {value!r}", scenario=scenario, step=step)
    return dict(mapping)


def write_doc(out_path, doc):
    # sorted keys and a trailing newline: reruns are byte-identical
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(text)

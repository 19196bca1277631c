"""Stimulus tail: run a candidate's generate_scenarios() to a JSON file.

Usage: <interpreter> stimulus_tail.py <script> <out>

The candidate must define generate_scenarios() returning a list of
scenarios, each a map with a "scenario" id string and a "steps" list of
port-name to binary-string maps. The tail validates shape only and
writes the stimulus wire format to <out>. An empty scenario list is
valid; rejecting it is the consumer's call.
"""

import os
import sys

import _tailcore as core


def collect(namespace):
    fn = namespace.get("generate_scenarios")
    if not callable(fn):
        core.fail(core.EXIT_NO_ENTRY, "missing-entry",
                  "script defines no generate_scenarios() function")
    try:
        return fn()
    except BaseException as exc:
        core.crash(f"generate_scenarios() raised: {exc!r}")


def validate(result):
    if not isinstance(result, list):
        core.fail(core.EXIT_BAD_RETURN, "bad-return",
                  "generate_scenarios() must return a list, got "
                  + type(result).__name__)
    doc = []
    for i, entry in enumerate(result):
        if not isinstance(entry, dict):
            core.fail(core.EXIT_BAD_RETURN, "bad-return",
                      f"scenario {i} is not a map", scenario=str(i))
        sid = entry.get("scenario")
        if not isinstance(sid, str) or not sid:
            core.fail(core.EXIT_BAD_RETURN, "bad-return",
                      f"scenario {i} needs a non-empty 'scenario' id string",
                      scenario=str(i))
        steps = entry.get("steps")
        if not isinstance(steps, list):
            core.fail(core.EXIT_BAD_RETURN, "bad-return",
                      "'steps' must be a list", scenario=sid)
        clean = [core.check_port_map(st, "step", scenario=sid, step=k)
                 for k, st in enumerate(steps)]
        doc.append({"scenario": sid, "steps": clean})
    return doc


def main(argv):
    if len(argv) != 3:
        core.fail(core.EXIT_USAGE, "usage",
                  "usage: stimulus_tail.py <script> <out>")
    # resolve both paths before leaving the caller's working directory
    script_path, out_path = (os.path.abspath(p) for p in argv[1:])
    source = core.load_script(script_path)
    core.enter_scratch_dir()
    namespace = core.exec_candidate(source, script_path)
    doc = validate(collect(namespace))
    core.write_doc(out_path, doc)
    return core.EXIT_OK


if __name__ == "__main__":
    core.ensure_fixed_hash_seed()
    sys.exit(main(sys.argv))

"""Emulator tail: drive a candidate's Python_DUT over recorded stimuli.

Usage: <interpreter> emulator_tail.py <script> <in> <out>

The candidate must define a class named Python_DUT with a no-argument
constructor and a load(inputs_map) method returning an outputs map. The
tail instantiates one fresh Python_DUT per scenario, calls load once per
step in order, and writes the reference wire format
[{scenario, steps: [{inputs, outputs}]}] to <out>.
"""

import json
import os
import sys

import _tailcore as core


def read_input_doc(path):
    """The input file comes from the trusted side; failures are usage."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        core.fail(core.EXIT_USAGE, "usage", f"cannot read input file: {exc}")
    ok = (isinstance(doc, list)
          and all(isinstance(e, dict) and isinstance(e.get("scenario"), str)
                  and isinstance(e.get("steps"), list) for e in doc))
    if not ok:
        core.fail(core.EXIT_USAGE, "usage",
                  "input file does not hold a stimulus document")
    return doc


def drive(namespace, input_doc):
    cls = namespace.get("Python_DUT")
    if not isinstance(cls, type):
        core.fail(core.EXIT_NO_ENTRY, "missing-entry",
                  "script defines no Python_DUT class")
    out_doc = []
    for entry in input_doc:
        sid = entry["scenario"]
        try:
            dut = cls()  # fresh instance per scenario, never reused
        except BaseException as exc:
            core.crash(f"Python_DUT() raised: {exc!r}", scenario=sid)
        steps = []
        for k, step_inputs in enumerate(entry["steps"]):
            try:
                # pass a copy so candidate mutation cannot taint the echo
                outputs = dut.load(dict(step_inputs))
            except BaseException as exc:
                core.crash(f"load() raised: {exc!r}", scenario=sid, step=k)
            clean = core.check_port_map(outputs, "load() return value",
                                        scenario=sid, step=k)
            steps.append({"inputs": dict(step_inputs), "outputs": clean})
        out_doc.append({"scenario": sid, "steps": steps})
    return out_doc


def main(argv):
    if len(argv) != 4:
        core.fail(core.EXIT_USAGE, "usage",
                  "usage: emulator_tail.py <script> <in> <out>")
    # resolve all paths before leaving the caller's working directory
    script_path, in_path, out_path = (os.path.abspath(p) for p in argv[1:])
    source = core.load_script(script_path)
    input_doc = read_input_doc(in_path)
    core.enter_scratch_dir()
    namespace = core.exec_candidate(source, script_path)
    doc = drive(namespace, input_doc)
    core.write_doc(out_path, doc)
    return core.EXIT_OK


if __name__ == "__main__":
    core.ensure_fixed_hash_seed()
    sys.exit(main(sys.argv))

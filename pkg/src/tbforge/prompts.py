"""Prompt catalog: role system prompts, few-shots, and bundle builders.

Everything the agents see is assembled here so prompt-snapshot tests have a
single module to pin down. Builders are pure functions of their inputs.
"""

from __future__ import annotations

from .bits import format_bitvector
from .gateway import PromptBundle
from .interface import ModuleInterface
from .problem import Problem
from .traces import TraceSet

EVIDENCE_MAX_STEPS = 32

# Rendering of Verilog bit-range semantics. Generated code gets this wrong
# constantly (reversed strings, dropped leading zeros), so every code-writing
# prompt carries the same paragraph.
WIDTH_SEMANTICS_NOTE = """\
Binary string convention (read carefully):
- Every port value is a binary string whose length equals the declared width.
- The string is written most-significant bit first. For a declaration like
  reg [4:1] q, the string "1000" means q[4]=1, q[3]=0, q[2]=0, q[1]=0,
  i.e. the unsigned value 8, NOT 1.
- Never drop leading zeros: a 4-bit zero is "0000".
- Index direction in declarations ([3:0] vs [4:1]) changes label numbering
  only; string order is always MSB first.\
"""

SYSTEM_SCENARIO = """\
You are a hardware verification engineer planning test scenarios for a
Verilog design. You write thorough, concrete test plans that cover normal
operation, boundary values, edge cases, and (for clocked designs) reset and
state-transition behavior. You answer with the plan text only.\
"""

SYSTEM_STIMULUS = """\
You are a verification engineer writing a Python stimulus generator. You
output a single fenced python code block and nothing else. The script must
define generate_scenarios() returning a list of scenarios; each scenario is
a dict {"scenario": <id string>, "steps": [<step>, ...]} and each step is a
dict mapping input port name to a binary string of exactly the declared
width. Do not drive the clock port; the harness owns the clock.\
"""

SYSTEM_EMULATOR = """\
You are a verification engineer writing a Python functional model of a
Verilog design. You output a single fenced python code block and nothing
else. The script must define a class Python_DUT with __init__(self) setting
up any internal state and load(self, inputs) -> outputs, where both maps use
binary strings of exactly the declared widths. One load call models one full
clock cycle for clocked designs; a fresh Python_DUT is constructed for every
scenario.\
"""

SYSTEM_JUDGE = """\
You are a meticulous hardware verification judge. You compare Python
functional-model candidates against a design specification and their
produced reference signals, select the candidate that matches the
specification best, and state whether it is fully aligned. You always end
your reply with one fenced json block and no text after it.\
"""

SYSTEM_REFINE = """\
You are a hardware verification engineer repairing a Python functional
model that a judge found misaligned with the specification. You output a
single fenced python code block containing the complete corrected script and
nothing else. Keep the Python_DUT contract exactly.\
"""

SYSTEM_ROOT_CAUSE = """\
You are a hardware verification judge performing root-cause analysis of
simulation mismatches. Decide whether the design under test is functionally
wrong (DUT) or the reference model that produced the expected values is
wrong (MODEL). You always end your reply with one fenced json block and no
text after it.\
"""

# One worked example per code-writing role keeps output shape on rails.
_STIMULUS_SHOT_IN = """\
Specification:
A 1-bit buffer: output y follows input a.

Interface:
name  dir     width  notes
a     input   1
y     output  1

Write the stimulus generator script.\
"""

_STIMULUS_SHOT_OUT = """\
```python
def generate_scenarios():
    scenarios = []
    scenarios.append({
        "scenario": "low_then_high",
        "steps": [{"a": "0"}, {"a": "1"}],
    })
    scenarios.append({
        "scenario": "toggle",
        "steps": [{"a": "1"}, {"a": "0"}, {"a": "1"}],
    })
    return scenarios
```\
"""

_EMULATOR_SHOT_IN = """\
Specification:
A 1-bit buffer: output y follows input a.

Interface:
name  dir     width  notes
a     input   1
y     output  1

Write the functional model script.\
"""

_EMULATOR_SHOT_OUT = """\
```python
class Python_DUT:
    def __init__(self):
        pass

    def load(self, inputs):
        return {"y": inputs["a"]}
```\
"""

FEW_SHOTS_STIMULUS = ((_STIMULUS_SHOT_IN, _STIMULUS_SHOT_OUT),)
FEW_SHOTS_EMULATOR = ((_EMULATOR_SHOT_IN, _EMULATOR_SHOT_OUT),)


def port_table(interface: ModuleInterface) -> str:
    """Fixed-width port listing embedded into every prompt."""
    rows = ["name  dir     width  notes"]
    for p in interface.ports:
        notes = []
        if p.is_clock:
            notes.append("clock (harness-driven)")
        if p.is_reset:
            notes.append("reset")
        rows.append(f"{p.name:<6}{p.direction:<8}{p.width:<7}"
                    f"{', '.join(notes)}".rstrip())
    return "\n".join(rows)


def render_evidence(ts: TraceSet, max_steps: int = EVIDENCE_MAX_STEPS) -> str:
    """Waveform-style table per scenario, truncated per scenario."""
    in_names = [p.name for p in ts.interface.data_inputs()]
    out_names = [p.name for p in ts.interface.outputs()]
    lines = []
    for tr in ts.traces:
        lines.append(f"scenario {tr.scenario_id}:")
        header = "  step | " + " ".join(in_names) + " || " + " ".join(out_names)
        lines.append(header)
        for k, st in enumerate(tr.steps[:max_steps]):
            ins = " ".join(format_bitvector(st.inputs[n]) for n in in_names)
            outs = " ".join(format_bitvector(st.outputs[n]) for n in out_names)
            lines.append(f"  {k:>4} | {ins} || {outs}")
        if len(tr.steps) > max_steps:
            lines.append(f"  ... ({len(tr.steps) - max_steps} more steps elided)")
    return "\n".join(lines)


def scenario_design_prompt(problem: Problem) -> PromptBundle:
    user = (
        f"Specification:\n{problem.spec_text.strip()}\n\n"
        f"Interface:\n{port_table(problem.interface)}\n\n"
        f"Circuit type: {problem.circuit_type}\n\n"
        "Design the test scenarios for this module. Describe, as numbered "
        "prose, which functional behaviors, edge cases, boundary values and "
        "signal conditions must be exercised, and what each scenario does "
        "step by step.")
    return PromptBundle(system=SYSTEM_SCENARIO, user=user)


def stimulus_script_prompt(problem: Problem, plan_text: str) -> PromptBundle:
    user = (
        f"Specification:\n{problem.spec_text.strip()}\n\n"
        f"Interface:\n{port_table(problem.interface)}\n\n"
        f"{WIDTH_SEMANTICS_NOTE}\n\n"
        f"Test plan:\n{plan_text.strip()}\n\n"
        "Write the stimulus generator script implementing this plan. Cover "
        "every planned scenario. Assign every non-clock input port in every "
        "step.")
    return PromptBundle(system=SYSTEM_STIMULUS, user=user,
                        few_shots=FEW_SHOTS_STIMULUS)


def emulator_prompt(problem: Problem) -> PromptBundle:
    user = (
        f"Specification:\n{problem.spec_text.strip()}\n\n"
        f"Interface:\n{port_table(problem.interface)}\n\n"
        f"{WIDTH_SEMANTICS_NOTE}\n\n"
        "Write the functional model script for this design. Model the "
        "specified behavior exactly, including reset semantics if any. "
        "Return all output ports from every load call.")
    return PromptBundle(system=SYSTEM_EMULATOR, user=user,
                        few_shots=FEW_SHOTS_EMULATOR)


def _numbered_sources(sources: list[str]) -> str:
    parts = []
    for i, src in enumerate(sources):
        parts.append(f"Candidate {i}:\n```python\n{src}\n```")
    return "\n\n".join(parts)


def judge_prompt(problem: Problem, candidate_sources: list[str],
                 evidence: list[TraceSet], consensus_note: str) -> PromptBundle:
    rendered = "\n\n".join(
        f"Reference signals, variant {i}:\n{render_evidence(ts)}"
        for i, ts in enumerate(evidence))
    user = (
        f"Specification:\n{problem.spec_text.strip()}\n\n"
        f"Interface:\n{port_table(problem.interface)}\n\n"
        f"{WIDTH_SEMANTICS_NOTE}\n\n"
        f"Consensus analysis: {consensus_note}\n\n"
        f"{_numbered_sources(candidate_sources)}\n\n"
        f"{rendered}\n\n"
        "Evaluate the alignment between the specification and each "
        "candidate together with its reference signals. Pick the best "
        "candidate. State whether it models the specification exactly. "
        "Explain every misalignment you see.\n\n"
        "End with exactly one fenced json block of the form:\n"
        "```json\n{\"best\": <candidate index>, \"aligned\": true|false, "
        "\"analysis\": \"<misalignment report>\"}\n```")
    return PromptBundle(system=SYSTEM_JUDGE, user=user)


def refine_prompt(problem: Problem, selected_source: str, analysis: str,
                  evidence: list[TraceSet]) -> PromptBundle:
    rendered = "\n\n".join(
        f"Reference signals, variant {i}:\n{render_evidence(ts)}"
        for i, ts in enumerate(evidence))
    user = (
        f"Specification:\n{problem.spec_text.strip()}\n\n"
        f"Interface:\n{port_table(problem.interface)}\n\n"
        f"{WIDTH_SEMANTICS_NOTE}\n\n"
        f"Current best model:\n```python\n{selected_source}\n```\n\n"
        f"{rendered}\n\n"
        f"Judge's misalignment report:\n{analysis}\n\n"
        "Rewrite the model so it matches the specification exactly, fixing "
        "every issue in the report. Output the complete corrected script.")
    return PromptBundle(system=SYSTEM_REFINE, user=user)


def root_cause_prompt(problem: Problem, dut_source: str, model_source: str,
                      narrative: str) -> PromptBundle:
    user = (
        f"Specification:\n{problem.spec_text.strip()}\n\n"
        f"Interface:\n{port_table(problem.interface)}\n\n"
        f"{WIDTH_SEMANTICS_NOTE}\n\n"
        f"Design under test (Verilog):\n```verilog\n{dut_source}\n```\n\n"
        f"Reference model (Python):\n```python\n{model_source}\n```\n\n"
        f"Simulation mismatch report:\n{narrative}\n\n"
        "Analyze the mismatches against the specification. Decide whether "
        "the Verilog design is functionally wrong (cause DUT) or the "
        "reference model produced wrong expected values (cause MODEL).\n\n"
        "End with exactly one fenced json block of the form:\n"
        "```json\n{\"cause\": \"DUT\"|\"MODEL\", \"rationale\": \"<why>\"}\n```")
    return PromptBundle(system=SYSTEM_ROOT_CAUSE, user=user)

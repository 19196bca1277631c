"""Stimulus and trace containers, their comparison, and the JSON wire formats.

Values cross the wire as unprefixed MSB-first binary strings of exact width,
never integers, so the width of every signal survives serialization.
All containers are value objects; nothing mutates them after construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from .bits import BitVector, format_bitvector, parse_bitvector
from .errors import FormatError, StructureError, ValidationError, WidthError
from .interface import ModuleInterface

# suite size caps shared by producers and consumers
MAX_SCENARIOS = 256
MAX_TOTAL_STEPS = 4096


@dataclass(frozen=True)
class StimulusStep:
    """One evaluated cycle's worth of input assignments (clock excluded)."""
    assignments: Mapping[str, BitVector]

    def key(self) -> tuple:
        return tuple(sorted(
            (n, bv.width, bv.value) for n, bv in self.assignments.items()))


@dataclass(frozen=True)
class Scenario:
    id: str
    steps: tuple[StimulusStep, ...]

    def __post_init__(self):
        if not self.id:
            raise ValidationError("scenario id must be non-empty")
        if not self.steps:
            raise ValidationError(f"scenario {self.id}: steps must be non-empty")

    def key(self) -> tuple:
        """Dedup key: the full step list, ignoring the model-invented id."""
        return tuple(s.key() for s in self.steps)


@dataclass(frozen=True)
class StimulusSuite:
    interface: ModuleInterface
    scenarios: tuple[Scenario, ...]

    def __post_init__(self):
        ids = [s.id for s in self.scenarios]
        if len(set(ids)) != len(ids):
            raise ValidationError("scenario ids must be unique within a suite")
        allowed = {p.name: p.width for p in self.interface.data_inputs()}
        for sc in self.scenarios:
            for k, step in enumerate(sc.steps):
                _check_assignments(sc.id, k, step.assignments, allowed,
                                   cover=True, label="input")

    def step_count(self) -> int:
        return sum(len(s.steps) for s in self.scenarios)


@dataclass(frozen=True)
class TraceStep:
    inputs: Mapping[str, BitVector]
    outputs: Mapping[str, BitVector]


@dataclass(frozen=True)
class Trace:
    scenario_id: str
    steps: tuple[TraceStep, ...]


@dataclass(frozen=True)
class TraceSet:
    interface: ModuleInterface
    traces: tuple[Trace, ...]

    def __post_init__(self):
        ids = [t.scenario_id for t in self.traces]
        if len(set(ids)) != len(ids):
            raise ValidationError("trace scenario ids must be unique")
        in_ports = {p.name: p.width for p in self.interface.data_inputs()}
        out_ports = {p.name: p.width for p in self.interface.outputs()}
        for tr in self.traces:
            for k, step in enumerate(tr.steps):
                _check_assignments(tr.scenario_id, k, step.inputs, in_ports,
                                   cover=True, label="input")
                _check_assignments(tr.scenario_id, k, step.outputs, out_ports,
                                   cover=True, label="output")


@dataclass(frozen=True)
class TraceDiff:
    scenario_id: str
    step_index: int
    signal: str
    expected: BitVector
    actual: BitVector

    def __post_init__(self):
        if self.expected == self.actual:
            raise ValidationError("a diff needs differing values")


def _check_assignments(scenario_id: str, step: int,
                       values: Mapping[str, BitVector],
                       ports: dict[str, int], cover: bool, label: str) -> None:
    for name, bv in values.items():
        if name not in ports:
            raise ValidationError(
                f"scenario {scenario_id} step {step}: "
                f"{name!r} is not a {label} port")
        if bv.width != ports[name]:
            raise ValidationError(
                f"scenario {scenario_id} step {step}: {name} is "
                f"{bv.width} bits, port is {ports[name]}")
    if cover:
        missing = set(ports) - set(values)
        if missing:
            raise ValidationError(
                f"scenario {scenario_id} step {step}: missing {label} "
                f"assignments for {sorted(missing)}")


def compare_tracesets(expected: TraceSet, actual: TraceSet) -> list[TraceDiff]:
    """Step-wise output comparison; inputs are not compared.

    Diffs come out ordered by (scenario order, step, interface port order).
    Structural disagreement (interface, ids, lengths) raises StructureError
    rather than producing diffs.
    """
    if expected.interface != actual.interface:
        raise StructureError("trace sets describe different interfaces")
    exp_ids = [t.scenario_id for t in expected.traces]
    act_ids = [t.scenario_id for t in actual.traces]
    if exp_ids != act_ids:
        raise StructureError(
            f"scenario ids differ: {exp_ids} vs {act_ids}")
    diffs: list[TraceDiff] = []
    out_order = [p.name for p in expected.interface.outputs()]
    for e_tr, a_tr in zip(expected.traces, actual.traces):
        if len(e_tr.steps) != len(a_tr.steps):
            raise StructureError(
                f"scenario {e_tr.scenario_id}: step counts differ "
                f"({len(e_tr.steps)} vs {len(a_tr.steps)})")
        for k, (e_step, a_step) in enumerate(zip(e_tr.steps, a_tr.steps)):
            for name in out_order:
                ev, av = e_step.outputs[name], a_step.outputs[name]
                if ev != av:
                    diffs.append(TraceDiff(e_tr.scenario_id, k, name, ev, av))
    return diffs


# --- JSON wire formats ---
#
# Input_signal.json:      [{"scenario": id, "steps": [{port: bits, ...}, ...]}]
# Reference_signal.json:  [{"scenario": id,
#                           "steps": [{"inputs": {...}, "outputs": {...}}]}]

def _values_to_json(values: Mapping[str, BitVector]) -> dict[str, str]:
    return {n: format_bitvector(bv) for n, bv in values.items()}


def _values_from_json(raw: Any, ports: dict[str, int], where: str
                      ) -> dict[str, BitVector]:
    if not isinstance(raw, dict):
        raise ValidationError(f"{where}: expected an object, got {type(raw).__name__}")
    out: dict[str, BitVector] = {}
    for name, text in raw.items():
        if name not in ports:
            raise ValidationError(f"{where}: unknown port {name!r}")
        if not isinstance(text, str):
            raise ValidationError(f"{where}: value for {name} is not a string")
        try:
            out[name] = parse_bitvector(text, ports[name])
        except (WidthError, FormatError) as exc:
            raise ValidationError(f"{where}: port {name}: {exc}") from exc
    return out


def stimulus_to_json(suite: StimulusSuite) -> list[dict]:
    return [
        {"scenario": sc.id,
         "steps": [_values_to_json(st.assignments) for st in sc.steps]}
        for sc in suite.scenarios
    ]


def stimulus_from_json(data: Any, interface: ModuleInterface) -> StimulusSuite:
    if not isinstance(data, list):
        raise ValidationError("stimulus file: top level must be an array")
    ports = {p.name: p.width for p in interface.data_inputs()}
    scenarios = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict) or "scenario" not in entry or "steps" not in entry:
            raise ValidationError(f"stimulus entry {i}: need scenario and steps")
        steps = tuple(
            StimulusStep(_values_from_json(
                st, ports, f"scenario {entry['scenario']} step {k}"))
            for k, st in enumerate(entry["steps"]))
        scenarios.append(Scenario(id=str(entry["scenario"]), steps=steps))
    return StimulusSuite(interface=interface, scenarios=tuple(scenarios))


def traceset_to_json(ts: TraceSet) -> list[dict]:
    return [
        {"scenario": tr.scenario_id,
         "steps": [{"inputs": _values_to_json(st.inputs),
                    "outputs": _values_to_json(st.outputs)} for st in tr.steps]}
        for tr in ts.traces
    ]


def traceset_from_json(data: Any, interface: ModuleInterface) -> TraceSet:
    if not isinstance(data, list):
        raise ValidationError("trace file: top level must be an array")
    in_ports = {p.name: p.width for p in interface.data_inputs()}
    out_ports = {p.name: p.width for p in interface.outputs()}
    traces = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict) or "scenario" not in entry or "steps" not in entry:
            raise ValidationError(f"trace entry {i}: need scenario and steps")
        sid = str(entry["scenario"])
        steps = []
        for k, st in enumerate(entry["steps"]):
            if not isinstance(st, dict) or "inputs" not in st or "outputs" not in st:
                raise ValidationError(
                    f"scenario {sid} step {k}: need inputs and outputs")
            steps.append(TraceStep(
                inputs=_values_from_json(st["inputs"], in_ports,
                                         f"scenario {sid} step {k} inputs"),
                outputs=_values_from_json(st["outputs"], out_ports,
                                          f"scenario {sid} step {k} outputs")))
        traces.append(Trace(scenario_id=sid, steps=tuple(steps)))
    return TraceSet(interface=interface, traces=tuple(traces))


def dump_wire_json(data: Any) -> str:
    """Canonical file encoding: UTF-8, sorted keys, trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True) + "\n"

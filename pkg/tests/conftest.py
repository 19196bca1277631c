"""Shared fixtures: micro interfaces, suite/trace builders, doubles."""

from __future__ import annotations

import random

import pytest

from tbforge.bits import BitVector
from tbforge.interface import INPUT, OUTPUT, ModuleInterface, PortDecl
from tbforge.traces import (Scenario, StimulusStep, StimulusSuite, Trace,
                            TraceSet, TraceStep)

from doubles import ScriptedGateway


@pytest.fixture
def adder_iface() -> ModuleInterface:
    return ModuleInterface("adder2", (
        PortDecl("a", INPUT, 2),
        PortDecl("b", INPUT, 2),
        PortDecl("sum", OUTPUT, 3),
    ))


@pytest.fixture
def counter_iface() -> ModuleInterface:
    return ModuleInterface("counter4", (
        PortDecl("clk", INPUT, 1, is_clock=True),
        PortDecl("reset", INPUT, 1, is_reset=True),
        PortDecl("q", OUTPUT, 4),
    ))


@pytest.fixture
def make_suite():
    """Builder: make_suite(iface, {scenario_id: [{port: int} per step]})."""
    def build(iface: ModuleInterface,
              rows: dict[str, list[dict[str, int]]]) -> StimulusSuite:
        widths = {p.name: p.width for p in iface.data_inputs()}
        scenarios = []
        for sid, steps in rows.items():
            scenarios.append(Scenario(sid, tuple(
                StimulusStep({n: BitVector(widths[n], v)
                              for n, v in st.items()})
                for st in steps)))
        return StimulusSuite(iface, tuple(scenarios))
    return build


@pytest.fixture
def make_traceset():
    """Builder: make_traceset(iface, {id: [({in: int}, {out: int}) ...]})."""
    def build(iface: ModuleInterface,
              rows: dict[str, list[tuple[dict, dict]]]) -> TraceSet:
        in_w = {p.name: p.width for p in iface.data_inputs()}
        out_w = {p.name: p.width for p in iface.outputs()}
        traces = []
        for sid, steps in rows.items():
            traces.append(Trace(sid, tuple(
                TraceStep({n: BitVector(in_w[n], v) for n, v in ins.items()},
                          {n: BitVector(out_w[n], v) for n, v in outs.items()})
                for ins, outs in steps)))
        return TraceSet(iface, tuple(traces))
    return build


@pytest.fixture
def random_interface():
    def build(rng: random.Random) -> ModuleInterface:
        ports = []
        for i in range(rng.randint(1, 3)):
            ports.append(PortDecl(f"in{i}", INPUT, rng.randint(1, 12)))
        for i in range(rng.randint(1, 3)):
            ports.append(PortDecl(f"out{i}", OUTPUT, rng.randint(1, 12)))
        if rng.random() < 0.5:
            ports.insert(0, PortDecl("clk", INPUT, 1, is_clock=True))
        return ModuleInterface(f"m{rng.randint(0, 999)}", tuple(ports))
    return build


@pytest.fixture
def random_suite():
    def build(iface: ModuleInterface, rng: random.Random) -> StimulusSuite:
        scenarios = []
        for s in range(rng.randint(1, 4)):
            steps = []
            for _ in range(rng.randint(1, 6)):
                steps.append(StimulusStep({
                    p.name: BitVector(p.width, rng.randrange(2 ** p.width))
                    for p in iface.data_inputs()}))
            scenarios.append(Scenario(f"s{s}", tuple(steps)))
        return StimulusSuite(iface, tuple(scenarios))
    return build


@pytest.fixture
def random_traceset(random_suite):
    def build(iface: ModuleInterface, rng: random.Random,
              like: TraceSet | None = None, flip_rate: float = 0.0) -> TraceSet:
        if like is None:
            suite = random_suite(iface, rng)
            traces = []
            for sc in suite.scenarios:
                steps = []
                for st in sc.steps:
                    outs = {p.name: BitVector(p.width,
                                              rng.randrange(2 ** p.width))
                            for p in iface.outputs()}
                    steps.append(TraceStep(dict(st.assignments), outs))
                traces.append(Trace(sc.id, tuple(steps)))
            return TraceSet(iface, tuple(traces))
        # same shape as `like`, each output value re-rolled with flip_rate
        traces = []
        for tr in like.traces:
            steps = []
            for st in tr.steps:
                outs = {}
                for name, bv in st.outputs.items():
                    if rng.random() < flip_rate and bv.width >= 1:
                        outs[name] = BitVector(bv.width,
                                               bv.value ^ (1 << rng.randrange(bv.width)))
                    else:
                        outs[name] = bv
                steps.append(TraceStep(dict(st.inputs), outs))
            traces.append(Trace(tr.scenario_id, tuple(steps)))
        return TraceSet(iface, tuple(traces))
    return build


@pytest.fixture
def scripted_gateway():
    return ScriptedGateway()


@pytest.fixture
def fake_builder():
    """Builder double: pops one canned simulation result per build call.

    Each queued item is either (stdout_text, exit_code) for a successful
    build whose executable prints that text, or a plain string for a build
    failure whose log is that string.
    """
    from tbforge.validate import BuildResult

    def make(outcomes):
        queue = list(outcomes)

        def builder(workdir, dut_file, tb_file, module_name):
            item = queue.pop(0)
            if isinstance(item, str):
                return BuildResult(False, item, None)
            stdout_text, exit_code = item
            out_file = workdir / "canned_out.txt"
            out_file.write_text(stdout_text)
            exe = workdir / "fake_sim"
            exe.write_text("#!/bin/sh\n"
                           f"cat \"$(dirname \"$0\")/canned_out.txt\"\n"
                           f"exit {exit_code}\n")
            exe.chmod(0o755)
            return BuildResult(True, "built", exe)

        builder.queue = queue
        return builder
    return make

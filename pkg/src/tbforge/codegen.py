"""Self-checking C++ testbench emission for the Verilator model.

The emitted translation unit bakes every stimulus step and expected output
into straight-line code: assign inputs, advance evaluation, compare each
output after masking to its declared width, and print machine-parsable
mismatch lines plus a final summary. Emission is a pure function of
(interface, traces, options), byte-for-byte deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bits import BitVector, format_bitvector
from .errors import AmbiguousClockError, CodegenError, ValidationError
from .interface import ModuleInterface
from .traces import (MAX_SCENARIOS, MAX_TOTAL_STEPS, TraceDiff, TraceSet)

# Single source of truth for the mismatch grammar; the C++ side prints this
# exact printf template, the Python side formats and parses it.
MISMATCH_FORMAT = ("MISMATCH scenario=%s step=%ld signal=%s "
                   "expected=%s actual=%s")
RESULT_PASS = "RESULT: PASS"
RESULT_FAIL_FORMAT = "RESULT: FAIL failures=%ld"


def format_mismatch_line(diff: TraceDiff) -> str:
    return MISMATCH_FORMAT.replace("%ld", "%d") % (
        diff.scenario_id, diff.step_index, diff.signal,
        format_bitvector(diff.expected), format_bitvector(diff.actual))


@dataclass(frozen=True)
class CodegenOptions:
    top_class_name: str | None = None  # default "V" + module name
    clock_port: str | None = None
    max_failures_reported: int = 64

    def __post_init__(self):
        if self.max_failures_reported < 1:
            raise ValidationError("max_failures_reported must be >= 1")


def select_clock(interface: ModuleInterface) -> str | None:
    clocks = [p.name for p in interface.ports if p.is_clock]
    if len(clocks) > 1:
        raise AmbiguousClockError(f"multiple clock candidates: {clocks}")
    return clocks[0] if clocks else None


def _mask_literal(width: int) -> str:
    return f"0x{(1 << width) - 1:x}ull"


def _value_literal(bv: BitVector) -> str:
    suffix = "ull" if bv.width > 32 else "u"
    return f"0x{bv.value:x}{suffix}"


def _limbs(bv: BitVector) -> list[int]:
    n = (bv.width + 31) // 32
    return [(bv.value >> (32 * j)) & 0xFFFFFFFF for j in range(n)]


def _assign_input(name: str, bv: BitVector) -> list[str]:
    comment = f"// {name} = {format_bitvector(bv)}"
    if bv.width <= 64:
        return [f"    dut->{name} = {_value_literal(bv)};  {comment}"]
    lines = []
    for j, limb in enumerate(_limbs(bv)):
        tail = f"  {comment}" if j == 0 else ""
        lines.append(f"    dut->{name}[{j}] = 0x{limb:x}u;{tail}")
    return lines


def _check_output(scenario_id: str, step: int, name: str, bv: BitVector
                  ) -> list[str]:
    exp_bin = format_bitvector(bv)
    if bv.width <= 64:
        return [
            "    {",
            f"      uint64_t got = (uint64_t)dut->{name} & "
            f"{_mask_literal(bv.width)};",
            f"      if (got != {_value_literal(bv)}) {{  "
            f"// expected {name} = {exp_bin}",
            f"        char buf[{bv.width + 1}];",
            f"        to_bin(got, {bv.width}, buf);",
            f"        report(\"{scenario_id}\", {step}, \"{name}\", "
            f"\"{exp_bin}\", buf);",
            "      }",
            "    }",
        ]
    limbs = _limbs(bv)
    n = len(limbs)
    top_mask = (1 << (bv.width - 32 * (n - 1))) - 1
    exp_init = ", ".join(f"0x{limb:x}u" for limb in limbs)
    return [
        "    {",
        f"      static const uint32_t exp[{n}] = {{{exp_init}}};  "
        f"// expected {name} = {exp_bin}",
        f"      uint32_t got[{n}];",
        f"      for (int j = 0; j < {n}; ++j) got[j] = dut->{name}[j];",
        f"      got[{n - 1}] &= 0x{top_mask:x}u;",
        "      bool ok = true;",
        f"      for (int j = 0; j < {n}; ++j) if (got[j] != exp[j]) "
        "ok = false;",
        "      if (!ok) {",
        f"        char buf[{bv.width + 1}];",
        f"        to_bin_w(got, {bv.width}, buf);",
        f"        report(\"{scenario_id}\", {step}, \"{name}\", "
        f"\"{exp_bin}\", buf);",
        "      }",
        "    }",
    ]


def emit_testbench(interface: ModuleInterface, traces: TraceSet,
                   opts: CodegenOptions | None = None) -> str:
    opts = opts or CodegenOptions()
    if traces.interface != interface:
        raise CodegenError("trace set does not belong to this interface")
    if len(traces.traces) > MAX_SCENARIOS:
        raise CodegenError(f"{len(traces.traces)} scenarios exceed the "
                           f"{MAX_SCENARIOS} cap")
    total_steps = sum(len(t.steps) for t in traces.traces)
    if total_steps > MAX_TOTAL_STEPS:
        raise CodegenError(f"{total_steps} steps exceed the "
                           f"{MAX_TOTAL_STEPS} cap")

    clock = opts.clock_port
    if clock is not None:
        port = interface.port(clock)
        if port is None or not port.is_clock:
            raise CodegenError(f"clock_port {clock!r} is not a clock input")
    else:
        clock = select_clock(interface)

    model = opts.top_class_name or f"V{interface.module_name}"
    data_inputs = list(interface.data_inputs())
    outputs = list(interface.outputs())
    any_wide = any(p.width > 64 for p in interface.ports)

    out: list[str] = []
    emit = out.append
    emit(f"// Generated self-checking testbench for module "
         f"{interface.module_name}.")
    emit(f"// {len(traces.traces)} scenarios, {total_steps} total steps.")
    emit("#include <cstdint>")
    emit("#include <cstdio>")
    emit("#include <memory>")
    emit("")
    emit(f"#include \"{model}.h\"")
    emit("")
    emit("static long g_failures = 0;")
    emit("static long g_reported = 0;")
    emit(f"static const long kMaxReported = {opts.max_failures_reported};")
    emit("")
    emit("static void to_bin(uint64_t v, int width, char* buf) {")
    emit("  for (int i = 0; i < width; ++i)")
    emit("    buf[width - 1 - i] = ((v >> i) & 1) ? '1' : '0';")
    emit("  buf[width] = '\\0';")
    emit("}")
    if any_wide:
        emit("")
        emit("static void to_bin_w(const uint32_t* w, int width, char* buf) {")
        emit("  for (int i = 0; i < width; ++i)")
        emit("    buf[width - 1 - i] = ((w[i / 32] >> (i % 32)) & 1) "
             "? '1' : '0';")
        emit("  buf[width] = '\\0';")
        emit("}")
    emit("")
    emit("static void report(const char* scenario, long step,")
    emit("                   const char* signal, const char* expected,")
    emit("                   const char* actual) {")
    emit("  ++g_failures;")
    emit("  if (g_reported < kMaxReported) {")
    emit("    ++g_reported;")
    emit(f"    printf(\"{MISMATCH_FORMAT}\\n\",")
    emit("           scenario, step, signal, expected, actual);")
    emit("  }")
    emit("}")
    emit("")
    emit("int main(int argc, char** argv) {")
    emit("  (void)argc;")
    emit("  (void)argv;")

    for trace in traces.traces:
        emit("")
        emit(f"  // scenario {trace.scenario_id}")
        emit("  {")
        emit(f"    std::unique_ptr<{model}> dut(new {model});")
        for k, step in enumerate(trace.steps):
            emit(f"    // step {k}")
            if clock is not None:
                emit(f"    dut->{clock} = 0;")
            for port in data_inputs:
                out.extend(_assign_input(port.name, step.inputs[port.name]))
            emit("    dut->eval();")
            if clock is not None:
                emit(f"    dut->{clock} = 1;")
                emit("    dut->eval();")
            for port in outputs:
                out.extend(_check_output(trace.scenario_id, k, port.name,
                                         step.outputs[port.name]))
        emit("  }")

    emit("")
    emit("  if (g_failures == 0) {")
    emit(f"    printf(\"{RESULT_PASS}\\n\");")
    emit("    return 0;")
    emit("  }")
    emit(f"  printf(\"{RESULT_FAIL_FORMAT}\\n\", g_failures);")
    emit("  return 1;")
    emit("}")
    emit("")
    return "\n".join(out)

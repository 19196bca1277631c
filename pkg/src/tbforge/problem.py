"""Problem inputs: specification text, interface, DUT source, circuit type."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import BadProblemError, ValidationError
from .interface import ModuleInterface, parse_verilog_interface

CMB = "CMB"
SEQ = "SEQ"


@dataclass(frozen=True)
class Problem:
    id: str
    spec_text: str
    interface: ModuleInterface
    circuit_type: str
    dut_source: str | None = None

    def __post_init__(self):
        if not self.spec_text.strip():
            raise ValidationError("spec_text must be non-empty")
        if self.circuit_type not in (CMB, SEQ):
            raise ValidationError(f"unknown circuit_type {self.circuit_type!r}")
        # SEQ iff the interface carries a clock
        if (self.circuit_type == SEQ) != self.interface.has_clock():
            raise ValidationError(
                f"circuit_type {self.circuit_type} inconsistent with "
                f"interface clock ports")


def circuit_type_of(interface: ModuleInterface) -> str:
    return SEQ if interface.has_clock() else CMB


def load_problem(problem_dir: str | Path) -> Problem:
    """Read a problem directory: spec.txt, top.v, optional meta.json."""
    root = Path(problem_dir)
    spec_path = root / "spec.txt"
    dut_path = root / "top.v"
    if not spec_path.is_file():
        raise BadProblemError(f"{root}: missing spec.txt")
    if not dut_path.is_file():
        raise BadProblemError(f"{root}: missing top.v")
    spec_text = spec_path.read_text(encoding="utf-8")
    dut_source = dut_path.read_text(encoding="utf-8")
    try:
        interface = parse_verilog_interface(dut_source)
    except Exception as exc:
        raise BadProblemError(f"{root}: cannot parse top.v interface: {exc}") from exc

    ctype = circuit_type_of(interface)
    meta_path = root / "meta.json"
    if meta_path.is_file():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        declared = meta.get("circuit_type")
        if declared is not None and declared != ctype:
            raise BadProblemError(
                f"{root}: meta.json says {declared} but the interface "
                f"implies {ctype}")

    try:
        return Problem(id=root.name, spec_text=spec_text, interface=interface,
                       circuit_type=ctype, dut_source=dut_source)
    except ValidationError as exc:
        raise BadProblemError(f"{root}: {exc}") from exc

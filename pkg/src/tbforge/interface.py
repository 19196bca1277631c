"""Module-interface description and the ANSI Verilog header parser.

Only ANSI-style port lists with literal ranges are supported; the benchmark
corpus uses that style throughout and a small exact parser beats a lenient
one that guesses.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError

INPUT = "input"
OUTPUT = "output"

_CLOCK_NAMES = ("clk", "clock")


@dataclass(frozen=True)
class PortDecl:
    name: str
    direction: str
    width: int
    is_clock: bool = False
    is_reset: bool = False

    def __post_init__(self):
        if self.direction not in (INPUT, OUTPUT):
            raise ValidationError(f"bad direction {self.direction!r}")
        if self.width < 1:
            raise ValidationError(f"port {self.name}: width must be positive")
        if self.is_clock and (self.direction != INPUT or self.width != 1):
            raise ValidationError(
                f"port {self.name}: a clock must be a 1-bit input")


@dataclass(frozen=True)
class ModuleInterface:
    module_name: str
    ports: tuple[PortDecl, ...]

    def __post_init__(self):
        names = [p.name for p in self.ports]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate port names in {self.module_name}")
        if not any(p.direction == INPUT for p in self.ports):
            raise ValidationError(f"{self.module_name}: no input ports")
        if not any(p.direction == OUTPUT for p in self.ports):
            raise ValidationError(f"{self.module_name}: no output ports")

    def port(self, name: str) -> PortDecl:
        for p in self.ports:
            if p.name == name:
                return p
        raise KeyError(name)

    def inputs(self) -> tuple[PortDecl, ...]:
        return tuple(p for p in self.ports if p.direction == INPUT)

    def outputs(self) -> tuple[PortDecl, ...]:
        return tuple(p for p in self.ports if p.direction == OUTPUT)

    def data_inputs(self) -> tuple[PortDecl, ...]:
        """Input ports excluding the clock; these are what stimuli assign."""
        return tuple(p for p in self.inputs() if not p.is_clock)

    def has_clock(self) -> bool:
        return any(p.is_clock for p in self.ports)


_MODULE_RE = re.compile(r"\bmodule\s+([A-Za-z_][A-Za-z0-9_$]*)", re.MULTILINE)
_TOKEN_RE = re.compile(
    r"""
    (?P<dir>\binput\b|\boutput\b)
  | (?P<kw>\bwire\b|\breg\b|\blogic\b)
  | (?P<signed>\bsigned\b)
  | (?P<range>\[[^\]]*\])
  | (?P<name>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<comma>,)
  | (?P<junk>\S)
    """,
    re.VERBOSE,
)
_RANGE_RE = re.compile(r"^\[\s*(\d+)\s*:\s*(\d+)\s*\]$")


def _location(source: str, offset: int) -> tuple[int, int]:
    line = source.count("\n", 0, offset) + 1
    col = offset - (source.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _strip_comments(source: str) -> str:
    # Replace comment bodies with spaces so offsets stay valid.
    def blank(m: re.Match) -> str:
        return "".join(c if c == "\n" else " " for c in m.group(0))

    source = re.sub(r"/\*.*?\*/", blank, source, flags=re.DOTALL)
    return re.sub(r"//[^\n]*", blank, source)


def _skip_parameter_block(source: str, pos: int) -> int:
    """Advance past a #( ... ) parameter list if one starts at pos."""
    m = re.compile(r"\s*#\s*\(").match(source, pos)
    if not m:
        return pos
    depth = 1
    i = m.end()
    while i < len(source) and depth:
        if source[i] == "(":
            depth += 1
        elif source[i] == ")":
            depth -= 1
        i += 1
    if depth:
        raise ParseError("unterminated parameter list", _location(source, pos))
    return i


def parse_verilog_interface(source: str) -> ModuleInterface:
    """Parse the single ANSI module header in `source` into a ModuleInterface.

    Width rules: a literal range [hi:lo] gives width hi - lo + 1 (lo need not
    be 0); a scalar port has width 1. A 1-bit input named exactly "clk" or
    "clock" (case-insensitive) is flagged as the clock; names containing
    "reset" or equal to "rst" are flagged as resets.
    """
    text = _strip_comments(source)
    matches = list(_MODULE_RE.finditer(text))
    if not matches:
        raise ParseError("no module declaration found")
    if len(matches) > 1:
        raise ParseError("more than one module declaration",
                         _location(text, matches[1].start()))
    m = matches[0]
    module_name = m.group(1)

    pos = _skip_parameter_block(text, m.end())
    open_paren = text.find("(", pos)
    if open_paren < 0:
        raise ParseError("module has no port list", _location(text, m.start()))
    close_paren = text.find(")", open_paren)
    if close_paren < 0:
        raise ParseError("unterminated port list", _location(text, open_paren))
    body = text[open_paren + 1:close_paren]
    base = open_paren + 1

    ports: list[PortDecl] = []
    seen: set[str] = set()
    direction: str | None = None
    width = 1

    for tok in _TOKEN_RE.finditer(body):
        off = base + tok.start()
        if tok.lastgroup == "dir":
            direction = tok.group(0)
            width = 1
        elif tok.lastgroup == "kw":
            continue
        elif tok.lastgroup == "signed":
            raise ParseError("signed ports are not supported",
                             _location(text, off))
        elif tok.lastgroup == "range":
            rm = _RANGE_RE.match(tok.group(0))
            if not rm:
                raise ParseError(
                    f"unsupported parameterized width {tok.group(0)!r}",
                    _location(text, off))
            hi, lo = int(rm.group(1)), int(rm.group(2))
            if hi < lo:
                raise ParseError(
                    f"ascending range {tok.group(0)!r} not supported",
                    _location(text, off))
            width = hi - lo + 1
        elif tok.lastgroup == "name":
            if direction is None:
                raise ParseError(
                    f"port {tok.group(0)!r} has no direction",
                    _location(text, off))
            name = tok.group(0)
            if name in seen:
                raise ParseError(f"duplicate port {name!r}",
                                 _location(text, off))
            seen.add(name)
            lname = name.lower()
            is_clock = (lname in _CLOCK_NAMES
                        and direction == INPUT and width == 1)
            is_reset = "reset" in lname or lname == "rst"
            ports.append(PortDecl(name=name, direction=direction, width=width,
                                  is_clock=is_clock, is_reset=is_reset))
        elif tok.lastgroup == "comma":
            continue
        else:
            raise ParseError(f"unexpected character {tok.group(0)!r}",
                             _location(text, off))

    if not ports:
        raise ParseError("empty port list", _location(text, open_paren))
    try:
        return ModuleInterface(module_name=module_name, ports=tuple(ports))
    except ValidationError as exc:
        raise ParseError(str(exc)) from exc

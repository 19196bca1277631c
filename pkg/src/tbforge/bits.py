"""Width-exact bit-vector values.

Bit index i carries significance 2**i, matching the Verilog convention where
a declaration ``q[3:0]`` assigned ``1000`` puts the 1 in ``q[3]``. Textual
values are MSB-first: character 0 of the string is bit index width-1.
Values are plain Python ints, so widths beyond 64 bits cost nothing extra.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import FormatError, WidthError

_SIZED_LITERAL = re.compile(r"^(\d+)'b([01]+)$")


@dataclass(frozen=True)
class BitVector:
    width: int
    value: int

    def __post_init__(self):
        if self.width < 1:
            raise WidthError(f"width must be positive, got {self.width}")
        if not 0 <= self.value < (1 << self.width):
            raise WidthError(
                f"value {self.value} does not fit in {self.width} bits")

    def bit(self, i: int) -> int:
        """Bit at index i (significance 2**i)."""
        if not 0 <= i < self.width:
            raise IndexError(f"bit index {i} out of range for width {self.width}")
        return (self.value >> i) & 1


def parse_bitvector(text: str, width: int) -> BitVector:
    """Parse an MSB-first binary string or a sized Verilog literal.

    Accepted forms for width 4: "1000" or "4'b1000". The digit count must
    equal the width exactly, so the first digit is always bit width-1.
    """
    if width < 1:
        raise WidthError(f"width must be positive, got {width}")
    digits = text
    m = _SIZED_LITERAL.match(text)
    if m:
        if int(m.group(1)) != width:
            raise WidthError(
                f"sized literal {text!r} does not declare width {width}")
        digits = m.group(2)
    elif not re.fullmatch(r"[01]*", text):
        raise FormatError(f"non-binary character in {text!r}")
    if len(digits) != width:
        raise WidthError(
            f"expected {width} binary digits, got {len(digits)} in {text!r}")
    return BitVector(width=width, value=int(digits, 2))


def format_bitvector(bv: BitVector) -> str:
    """MSB-first binary string of exactly bv.width characters."""
    return format(bv.value, f"0{bv.width}b")

"""Script-execution runtime for generated stimulus and emulator candidates.

The two tails in this package are plain scripts, invoked one OS process
per candidate:

    <interpreter> stimulus_tail.py <script> <out>
    <interpreter> emulator_tail.py <script> <in> <out>

They exchange JSON files with the consumer and report through a small
exit-code protocol (0 ok, 10 malformed return, 11 missing entry point,
12 candidate raised). ``tails_dir()`` is the directory a consumer should
configure as its runtime directory.
"""

from pathlib import Path

__version__ = "0.1.0"


def tails_dir() -> Path:
    """Directory containing stimulus_tail.py and emulator_tail.py."""
    return Path(__file__).resolve().parent

"""Exception taxonomy shared across the pipeline.

Grouped by the stage that raises them; all inherit TbforgeError so callers
can catch pipeline failures without masking programming errors.
"""


class TbforgeError(Exception):
    """Base class for every error this package raises deliberately."""


# --- signal model ---

class WidthError(TbforgeError):
    """A value's textual or numeric form disagrees with its declared width."""


class FormatError(TbforgeError):
    """A value's textual form contains characters outside the expected alphabet."""


class ParseError(TbforgeError):
    """Verilog module-header text could not be parsed.

    `location` is a (line, column) pair into the source when known.
    """

    def __init__(self, message: str, location: tuple[int, int] | None = None):
        super().__init__(message if location is None
                         else f"{message} (line {location[0]}, col {location[1]})")
        self.location = location


class StructureError(TbforgeError):
    """Two trace sets cannot be compared: ids, ordering or lengths disagree."""


class ValidationError(TbforgeError):
    """A container violates its invariants (widths, port coverage, ids)."""


# --- gateway ---

class ProviderError(TbforgeError):
    """The completion provider failed after retries were exhausted."""


class FixtureMissError(ProviderError):
    """The fixture store has no recorded completion for this prompt.

    A ProviderError: replay runs must degrade exactly like a dead gateway
    would, never crash a verification mid-flight.
    """


class ExtractionError(TbforgeError):
    """No fenced code block present in a completion.

    Carries the full completion text for the diagnostic log.
    """

    def __init__(self, message: str, completion_text: str = ""):
        super().__init__(message)
        self.completion_text = completion_text


# --- agents ---

class StimulusGenError(TbforgeError):
    """No usable stimulus script or scenario survived generation."""


class EmulatorGenError(TbforgeError):
    """No usable functional-model candidate survived generation."""


class BackendError(TbforgeError):
    """The script-execution backend is unavailable (aborts the round)."""


class ScriptError(TbforgeError):
    """A single generated script failed to execute.

    kind is one of "crash", "timeout", "protocol", "missing-entry".
    """

    def __init__(self, kind: str, detail: str):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind
        self.detail = detail


class AllCandidatesFailedError(TbforgeError):
    """Every functional-model candidate failed to produce a trace."""


class JudgeParseError(TbforgeError):
    """The judge reply could not be parsed twice in a row (fallback applied)."""


# --- codegen / simulation ---

class CodegenError(TbforgeError):
    """Traces and interface are inconsistent; no testbench text emitted."""


class AmbiguousClockError(TbforgeError):
    """More than one port is flagged as a clock."""


class ToolchainMissingError(TbforgeError, EnvironmentError):
    """The external simulator toolchain is not on PATH."""


class SimTimeoutError(TbforgeError):
    """Simulation run exceeded its wall-clock budget."""


class SimBuildError(TbforgeError):
    """Testbench build failed: an artifact bug, never sent to the judge."""


class ProtocolError(TbforgeError):
    """Simulator output and exit code disagree with the line protocol."""


# --- harness / CLI ---

class EvalInputError(TbforgeError):
    """Benchmark inputs are incomplete (missing verdicts or mutants)."""


class BadProblemError(TbforgeError):
    """A problem directory is missing required files or is malformed."""


class ConfigError(TbforgeError):
    """Run configuration is invalid."""

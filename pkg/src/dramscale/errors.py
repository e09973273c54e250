"""Exception types raised by the simulator."""

from __future__ import annotations


class DramScaleError(Exception):
    """Base class for all simulator errors."""


class IllegalSequence(DramScaleError):
    """A DRAM command is structurally impossible regardless of timing."""


class BatchOrderError(DramScaleError):
    """Command batch offsets must be strictly increasing."""


class StrictViolation(DramScaleError):
    """A strict-mode batch violates one or more timing parameters."""

    def __init__(self, violations):
        self.violations = list(violations)
        parts = ", ".join(
            f"{v.parameter} short by {v.deficit_ps / 1000:.3f} ns at #{v.index}"
            for v in self.violations
        )
        super().__init__(f"timing violations: {parts}")


class ProtocolError(DramScaleError):
    """Time-scaling protocol misuse, e.g. leaving critical mode with work pending."""


class DuplicateId(DramScaleError):
    """A request id was added to the request table twice."""


class OutOfRows(DramScaleError):
    """The row allocator has no free row satisfying the constraints."""


class OutOfRange(DramScaleError):
    """A physical address falls outside the mapped capacity."""


class ParseError(DramScaleError):
    """A text input (trace, profile, config) failed to parse."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(DramScaleError):
    """An experiment configuration is invalid or incomplete."""


class TraceExhausted(DramScaleError):
    """Stepping a core past the end of its trace. Signals normal completion."""

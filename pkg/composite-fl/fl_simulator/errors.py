"""
Simulator Error Types

Every failure raised by the simulator derives from FLSimError and carries a
numbered ErrorCode, the same way the firmware side of the project reports
numbered status codes over the wire.
"""

from enum import IntEnum
from typing import Any, Optional


class ErrorCode(IntEnum):
    """Numbered error codes surfaced in logs and CLI diagnostics."""
    INVALID_ARGUMENT = 1
    UNSUPPORTED_REGULARIZER = 2
    CONVERGENCE = 3
    STEP_SIZE = 4
    DIVERGENCE = 5
    SCHEDULE_MISMATCH = 6
    PARSE = 7
    CONFIG = 8
    UNKNOWN_PRESET = 9
    MISSING_LOG = 10
    MISSING_SNAPSHOTS = 11
    OUTPUT_PATH = 12


class FLSimError(Exception):
    """Base class for all simulator errors."""
    code: ErrorCode = ErrorCode.INVALID_ARGUMENT

    def __str__(self) -> str:
        return f"[E{int(self.code):02d}] {super().__str__()}"


class InvalidArgumentError(FLSimError, ValueError):
    code = ErrorCode.INVALID_ARGUMENT


class UnsupportedRegularizerError(FLSimError):
    code = ErrorCode.UNSUPPORTED_REGULARIZER


class ConvergenceError(FLSimError):
    code = ErrorCode.CONVERGENCE


class StepSizeError(FLSimError):
    code = ErrorCode.STEP_SIZE


class DivergenceError(FLSimError):
    """Non-finite iterate, located by client, round and local step."""
    code = ErrorCode.DIVERGENCE

    def __init__(self, client: Optional[int], round_index: int, step: Optional[int],
                 detail: str = "non-finite iterate"):
        self.client = client
        self.round = round_index
        self.step = step
        where = f"round {round_index}"
        if client is not None:
            where += f", client {client}"
        if step is not None:
            where += f", step {step}"
        super().__init__(f"{detail} at {where}")


class ScheduleMismatchError(FLSimError):
    code = ErrorCode.SCHEDULE_MISMATCH


class ParseError(FLSimError):
    """Malformed input file. Binary formats report a byte offset, text formats a line."""
    code = ErrorCode.PARSE

    def __init__(self, path: str, message: str, offset: Optional[int] = None,
                 line: Optional[int] = None):
        self.path = path
        self.offset = offset
        self.line = line
        where = path
        if offset is not None:
            where += f" at byte offset {offset}"
        if line is not None:
            where += f" at line {line}"
        super().__init__(f"{where}: {message}")


class ConfigError(FLSimError):
    """Config value rejected; names the field, what was expected and what was found."""
    code = ErrorCode.CONFIG

    def __init__(self, field: str, expected: Any, got: Any):
        self.field = field
        self.expected = expected
        self.got = got
        super().__init__(f"config field '{field}': expected {expected}, got {got!r}")


class UnknownPresetError(FLSimError):
    code = ErrorCode.UNKNOWN_PRESET

    def __init__(self, name: str, known: list):
        self.name = name
        self.known = list(known)
        super().__init__(f"unknown preset '{name}' (available: {', '.join(self.known)})")


class MissingLogError(FLSimError):
    code = ErrorCode.MISSING_LOG


class MissingSnapshotsError(FLSimError):
    code = ErrorCode.MISSING_SNAPSHOTS


class OutputPathError(FLSimError):
    code = ErrorCode.OUTPUT_PATH

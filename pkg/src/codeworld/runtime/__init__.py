"""Executable world-model backends: rule-DSL interpreter and external runner."""

from codeworld.runtime.program import (
    CompileError,
    EvalOutcome,
    Fault,
    ProgramSource,
    WorldModelProgram,
    compile_program,
    FAULT_NONDETERMINISM,
    FAULT_PARSE,
    FAULT_PROTOCOL,
    FAULT_RUNTIME,
    FAULT_TIMEOUT,
    FAULT_UNCOVERED,
)

__all__ = [
    "CompileError",
    "EvalOutcome",
    "Fault",
    "ProgramSource",
    "WorldModelProgram",
    "compile_program",
    "FAULT_NONDETERMINISM",
    "FAULT_PARSE",
    "FAULT_PROTOCOL",
    "FAULT_RUNTIME",
    "FAULT_TIMEOUT",
    "FAULT_UNCOVERED",
]

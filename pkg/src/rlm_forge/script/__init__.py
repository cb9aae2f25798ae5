"""Script language: parser, pattern subset, and sandboxed interpreter."""
from .ast import (
    Assignment,
    Call,
    Concat,
    Final,
    FinalVar,
    FUNCTION_NAMES,
    IntLit,
    Print,
    ScriptProgram,
    Slice,
    StringLit,
    Var,
    quote_string,
)
from .interpreter import (
    Environment,
    ExecOutcome,
    FinalSignal,
    HaltExecution,
    SandboxLimits,
    ScriptRuntimeError,
    SubcallHook,
    Value,
    execute,
    render_value,
)
from .parser import ParseError, parse_script
from .patterns import PatternError, compile_pattern, validate_pattern

__all__ = [
    "Assignment",
    "Call",
    "Concat",
    "Environment",
    "ExecOutcome",
    "Final",
    "FinalSignal",
    "FinalVar",
    "FUNCTION_NAMES",
    "HaltExecution",
    "IntLit",
    "ParseError",
    "PatternError",
    "Print",
    "SandboxLimits",
    "ScriptProgram",
    "ScriptRuntimeError",
    "Slice",
    "StringLit",
    "SubcallHook",
    "Value",
    "Var",
    "compile_pattern",
    "execute",
    "parse_script",
    "quote_string",
    "render_value",
    "validate_pattern",
]

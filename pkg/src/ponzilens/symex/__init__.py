"""Symbolic execution of block paths on an EVM-like machine."""

from .expr import (
    BinOp,
    Const,
    Env,
    Fresh,
    Hash,
    Ite,
    SLoad,
    SymExpr,
    UnOp,
    binop,
    const,
    contains,
    diff_segments,
    env,
    evaluate,
    hash_of,
    ite,
    normalize,
    pretty,
    sload,
    unop,
)
from .feasibility import (
    Feasibility,
    FeasibilityChecker,
    IntervalChecker,
    check_feasible,
    serialize_conditions,
)
from .machine import (
    MachineState,
    PathAbort,
    PathRun,
    RawEvent,
    run_path,
    step,
)

__all__ = [
    "BinOp", "Const", "Env", "Fresh", "Hash", "Ite", "SLoad", "SymExpr", "UnOp",
    "binop", "const", "contains", "diff_segments", "env", "evaluate", "hash_of",
    "ite", "normalize", "pretty", "sload", "unop",
    "Feasibility", "FeasibilityChecker", "IntervalChecker", "check_feasible",
    "serialize_conditions",
    "MachineState", "PathAbort", "PathRun", "RawEvent", "run_path", "step",
]

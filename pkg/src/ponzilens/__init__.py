"""Execution-path analysis of EVM bytecode with Ponzi-feature reporting."""

__version__ = "0.1.0"

from .bytecode import Bytecode, disassemble, parse_hex, reassemble
from .cfg import PathLimits
from .pipeline import AnalysisResult, analyze, analyze_bytes
from .report import validate_report

__all__ = [
    "Bytecode",
    "disassemble",
    "parse_hex",
    "reassemble",
    "PathLimits",
    "AnalysisResult",
    "analyze",
    "analyze_bytes",
    "validate_report",
    "__version__",
]

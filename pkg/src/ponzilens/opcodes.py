"""Opcode table for the supported EVM subset.

The table covers every standard opcode value so that a linear disassembly
sweep never aborts; only the subset actually modelled by the machine is
flagged ``supported``.  Byte values with no assigned mnemonic are synthesised
on lookup as INVALID-class entries.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class OpcodeInfo:
    mnemonic: str
    value: int
    pops: int
    pushes: int
    push_bytes: int = 0
    terminator: bool = False
    supported: bool = True


_S, _U = True, False

# (value, mnemonic, pops, pushes, terminator, supported)
_DEFS = [
    (0x00, "STOP", 0, 0, True, _S),
    (0x01, "ADD", 2, 1, False, _S),
    (0x02, "MUL", 2, 1, False, _S),
    (0x03, "SUB", 2, 1, False, _S),
    (0x04, "DIV", 2, 1, False, _S),
    (0x05, "SDIV", 2, 1, False, _S),
    (0x06, "MOD", 2, 1, False, _S),
    (0x07, "SMOD", 2, 1, False, _S),
    (0x08, "ADDMOD", 3, 1, False, _S),
    (0x09, "MULMOD", 3, 1, False, _S),
    (0x0A, "EXP", 2, 1, False, _S),
    (0x0B, "SIGNEXTEND", 2, 1, False, _S),
    (0x10, "LT", 2, 1, False, _S),
    (0x11, "GT", 2, 1, False, _S),
    (0x12, "SLT", 2, 1, False, _S),
    (0x13, "SGT", 2, 1, False, _S),
    (0x14, "EQ", 2, 1, False, _S),
    (0x15, "ISZERO", 1, 1, False, _S),
    (0x16, "AND", 2, 1, False, _S),
    (0x17, "OR", 2, 1, False, _S),
    (0x18, "XOR", 2, 1, False, _S),
    (0x19, "NOT", 1, 1, False, _S),
    (0x1A, "BYTE", 2, 1, False, _S),
    (0x1B, "SHL", 2, 1, False, _S),
    (0x1C, "SHR", 2, 1, False, _S),
    (0x1D, "SAR", 2, 1, False, _S),
    (0x20, "SHA3", 2, 1, False, _S),
    (0x30, "ADDRESS", 0, 1, False, _S),
    (0x31, "BALANCE", 1, 1, False, _S),
    (0x32, "ORIGIN", 0, 1, False, _U),
    (0x33, "CALLER", 0, 1, False, _S),
    (0x34, "CALLVALUE", 0, 1, False, _S),
    (0x35, "CALLDATALOAD", 1, 1, False, _S),
    (0x36, "CALLDATASIZE", 0, 1, False, _S),
    (0x37, "CALLDATACOPY", 3, 0, False, _U),
    (0x38, "CODESIZE", 0, 1, False, _U),
    (0x39, "CODECOPY", 3, 0, False, _U),
    (0x3A, "GASPRICE", 0, 1, False, _U),
    (0x3B, "EXTCODESIZE", 1, 1, False, _U),
    (0x3C, "EXTCODECOPY", 4, 0, False, _U),
    (0x3D, "RETURNDATASIZE", 0, 1, False, _U),
    (0x3E, "RETURNDATACOPY", 3, 0, False, _U),
    (0x3F, "EXTCODEHASH", 1, 1, False, _U),
    (0x40, "BLOCKHASH", 1, 1, False, _U),
    (0x41, "COINBASE", 0, 1, False, _U),
    (0x42, "TIMESTAMP", 0, 1, False, _S),
    (0x43, "NUMBER", 0, 1, False, _S),
    (0x44, "DIFFICULTY", 0, 1, False, _U),
    (0x45, "GASLIMIT", 0, 1, False, _U),
    (0x46, "CHAINID", 0, 1, False, _U),
    (0x47, "SELFBALANCE", 0, 1, False, _U),
    (0x48, "BASEFEE", 0, 1, False, _U),
    (0x50, "POP", 1, 0, False, _S),
    (0x51, "MLOAD", 1, 1, False, _S),
    (0x52, "MSTORE", 2, 0, False, _S),
    (0x53, "MSTORE8", 2, 0, False, _S),
    (0x54, "SLOAD", 1, 1, False, _S),
    (0x55, "SSTORE", 2, 0, False, _S),
    (0x56, "JUMP", 1, 0, True, _S),
    (0x57, "JUMPI", 2, 0, True, _S),
    (0x58, "PC", 0, 1, False, _S),
    (0x59, "MSIZE", 0, 1, False, _U),
    (0x5A, "GAS", 0, 1, False, _S),
    (0x5B, "JUMPDEST", 0, 0, False, _S),
    (0x5F, "PUSH0", 0, 1, False, _S),
    (0xF0, "CREATE", 3, 1, False, _U),
    (0xF1, "CALL", 7, 1, False, _S),
    (0xF2, "CALLCODE", 7, 1, False, _S),
    (0xF3, "RETURN", 2, 0, True, _S),
    (0xF4, "DELEGATECALL", 6, 1, False, _S),
    (0xF5, "CREATE2", 4, 1, False, _U),
    (0xFA, "STATICCALL", 6, 1, False, _S),
    (0xFD, "REVERT", 2, 0, True, _S),
    (0xFE, "INVALID", 0, 0, True, _S),
    (0xFF, "SELFDESTRUCT", 1, 0, True, _S),
]

TABLE: dict[int, OpcodeInfo] = {
    v: OpcodeInfo(name, v, pops, pushes, terminator=term, supported=sup)
    for v, name, pops, pushes, term, sup in _DEFS
}

for _n in range(1, 33):
    TABLE[0x5F + _n] = OpcodeInfo(f"PUSH{_n}", 0x5F + _n, 0, 1, push_bytes=_n)
for _n in range(1, 17):
    TABLE[0x7F + _n] = OpcodeInfo(f"DUP{_n}", 0x7F + _n, _n, _n + 1)
    TABLE[0x8F + _n] = OpcodeInfo(f"SWAP{_n}", 0x8F + _n, _n + 1, _n + 1)
for _n in range(5):
    TABLE[0xA0 + _n] = OpcodeInfo(f"LOG{_n}", 0xA0 + _n, _n + 2, 0, supported=False)

BY_NAME: dict[str, OpcodeInfo] = {info.mnemonic: info for info in TABLE.values()}

_UNKNOWN_CACHE: dict[int, OpcodeInfo] = {}

CALL_OPS = {"CALL", "CALLCODE", "DELEGATECALL", "STATICCALL"}
ENV_OPS = {
    "CALLER": "CALLER",
    "CALLVALUE": "CALLVALUE",
    "ADDRESS": "ADDRESS",
    "TIMESTAMP": "TIMESTAMP",
    "NUMBER": "NUMBER",
    "GAS": "GAS",
    "CALLDATASIZE": "CALLDATASIZE",
}


def lookup(value: int) -> OpcodeInfo:
    """Return the table entry for a byte, synthesising INVALID-class entries
    for unassigned values so a sweep over arbitrary bytes is total."""
    info = TABLE.get(value)
    if info is not None:
        return info
    info = _UNKNOWN_CACHE.get(value)
    if info is None:
        info = OpcodeInfo(f"UNKNOWN_0x{value:02X}", value, 0, 0, terminator=True, supported=False)
        _UNKNOWN_CACHE[value] = info
    return info


def is_push(value: int) -> bool:
    return 0x60 <= value <= 0x7F

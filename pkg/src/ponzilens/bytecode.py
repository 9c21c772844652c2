"""Hex parsing and linear-sweep disassembly of contract bytecode."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

from .opcodes import OpcodeInfo, is_push, lookup


class SourceKind(str, Enum):
    FILE = "file"
    INLINE = "inline"
    RPC = "rpc"


@dataclass(frozen=True)
class Source:
    kind: SourceKind = SourceKind.INLINE
    address: str | None = None
    endpoint: str | None = None
    path: str | None = None


class BytecodeError(ValueError):
    pass


class OddLengthError(BytecodeError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"odd number of hex digits (dangling nibble at character {index})")


class NonHexCharacterError(BytecodeError):
    def __init__(self, index: int, char: str):
        self.index = index
        self.char = char
        super().__init__(f"non-hex character {char!r} at character {index}")


class InconsistentOffsetsError(BytecodeError):
    pass


@dataclass(frozen=True)
class Bytecode:
    data: bytes
    source: Source = field(default_factory=Source)

    def __len__(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class Instruction:
    """One decoded instruction.

    ``op`` keeps the raw byte value so unknown opcodes still reassemble
    byte-exactly.  ``operand`` is set only for PUSH; a PUSH whose immediate
    ran past the end of code is flagged ``truncated`` with the missing bytes
    zero-filled on the right and ``width`` covering only the bytes present.
    """

    offset: int
    op: int
    mnemonic: str
    width: int
    operand: int | None = None
    truncated: bool = False

    @property
    def info(self) -> OpcodeInfo:
        return lookup(self.op)

    def __str__(self) -> str:
        if self.operand is not None:
            return f"{self.mnemonic} 0x{self.operand:x}"
        return self.mnemonic


def parse_hex(text: str, source: Source | None = None) -> Bytecode:
    """Parse hex text (optional ``0x`` prefix, surrounding whitespace ok)."""
    cleaned = text.strip()
    start = 2 if cleaned[:2].lower() == "0x" else 0
    digits = cleaned[start:]
    for i, ch in enumerate(digits):
        if ch not in "0123456789abcdefABCDEF":
            raise NonHexCharacterError(start + i, ch)
    if len(digits) % 2 != 0:
        raise OddLengthError(start + len(digits) - 1)
    return Bytecode(bytes.fromhex(digits), source or Source())


def disassemble(code: Bytecode | bytes) -> list[Instruction]:
    """Linear sweep over every byte; never raises.

    Unknown byte values decode as INVALID-class instructions and a PUSH whose
    operand runs past end-of-code becomes a truncated diagnostic instruction
    that ends the sweep.
    """
    data = code.data if isinstance(code, Bytecode) else code
    out: list[Instruction] = []
    offset = 0
    while offset < len(data):
        op = data[offset]
        info = lookup(op)
        if is_push(op):
            n = info.push_bytes
            imm = data[offset + 1:offset + 1 + n]
            truncated = len(imm) < n
            operand = int.from_bytes(imm.ljust(n, b"\x00"), "big")
            width = 1 + len(imm)
            out.append(Instruction(offset, op, info.mnemonic, width, operand, truncated))
            offset += width
            if truncated:
                break
        else:
            out.append(Instruction(offset, op, info.mnemonic, 1))
            offset += 1
    return out


def reassemble(instrs: Iterable[Instruction]) -> bytes:
    """Byte-exact inverse of :func:`disassemble`."""
    out = bytearray()
    expected = None
    for ins in instrs:
        if expected is not None and ins.offset != expected:
            raise InconsistentOffsetsError(
                f"instruction at offset {ins.offset} does not follow previous end {expected}"
            )
        out.append(ins.op)
        if is_push(ins.op):
            n = lookup(ins.op).push_bytes
            if ins.operand is None:
                raise InconsistentOffsetsError(f"PUSH at offset {ins.offset} has no operand")
            full = ins.operand.to_bytes(n, "big")
            out += full[: ins.width - 1]
        elif ins.width != 1:
            raise InconsistentOffsetsError(f"non-PUSH at offset {ins.offset} has width {ins.width}")
        expected = ins.offset + ins.width
    return bytes(out)


def instruction_records(instrs: Iterable[Instruction]) -> Iterator[dict]:
    """JSON-line records: {offset, mnemonic, operand_hex?}."""
    for ins in instrs:
        rec: dict = {"offset": ins.offset, "mnemonic": ins.mnemonic}
        if ins.operand is not None:
            rec["operand_hex"] = f"0x{ins.operand:x}"
        if ins.truncated:
            rec["truncated"] = True
        yield rec

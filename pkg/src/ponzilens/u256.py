"""Unsigned 256-bit arithmetic used for constant folding and abstract evaluation.

Every function takes and returns plain Python ints.  Division/modulo by zero
yields zero, and signed variants truncate toward zero, matching the stack
machine's semantics.  ``wadd``/``wmul`` are deliberately non-wrapping: they
back the modular-addition/multiplication opcodes and only ever appear under a
``mod`` node.
"""

from __future__ import annotations

BITS = 256
MASK = (1 << BITS) - 1
SIGN_BIT = 1 << (BITS - 1)


def to_signed(x: int) -> int:
    return x - (1 << BITS) if x & SIGN_BIT else x


def to_unsigned(x: int) -> int:
    return x & MASK


def add(a: int, b: int) -> int:
    return (a + b) & MASK


def sub(a: int, b: int) -> int:
    return (a - b) & MASK


def mul(a: int, b: int) -> int:
    return (a * b) & MASK


def div(a: int, b: int) -> int:
    return a // b if b else 0


def sdiv(a: int, b: int) -> int:
    if b == 0:
        return 0
    sa, sb = to_signed(a), to_signed(b)
    q = abs(sa) // abs(sb)
    if (sa < 0) != (sb < 0):
        q = -q
    return to_unsigned(q)


def mod(a: int, b: int) -> int:
    return a % b if b else 0


def smod(a: int, b: int) -> int:
    if b == 0:
        return 0
    sa, sb = to_signed(a), to_signed(b)
    r = abs(sa) % abs(sb)
    return to_unsigned(-r if sa < 0 else r)


def exp(a: int, b: int) -> int:
    return pow(a, b, 1 << BITS)


def signextend(b: int, x: int) -> int:
    if b >= 31:
        return x & MASK
    bit = 8 * (b + 1) - 1
    if x & (1 << bit):
        return (x | (MASK ^ ((1 << (bit + 1)) - 1))) & MASK
    return x & ((1 << (bit + 1)) - 1)


def lt(a: int, b: int) -> int:
    return 1 if a < b else 0


def gt(a: int, b: int) -> int:
    return 1 if a > b else 0


def slt(a: int, b: int) -> int:
    return 1 if to_signed(a) < to_signed(b) else 0


def sgt(a: int, b: int) -> int:
    return 1 if to_signed(a) > to_signed(b) else 0


def eq(a: int, b: int) -> int:
    return 1 if a == b else 0


def iszero(a: int) -> int:
    return 1 if a == 0 else 0


def and_(a: int, b: int) -> int:
    return a & b


def or_(a: int, b: int) -> int:
    return a | b


def xor(a: int, b: int) -> int:
    return a ^ b


def not_(a: int) -> int:
    return a ^ MASK


def byte(i: int, x: int) -> int:
    if i >= 32:
        return 0
    return (x >> (8 * (31 - i))) & 0xFF


def shl(shift: int, value: int) -> int:
    if shift >= BITS:
        return 0
    return (value << shift) & MASK


def shr(shift: int, value: int) -> int:
    if shift >= BITS:
        return 0
    return value >> shift


def sar(shift: int, value: int) -> int:
    sv = to_signed(value)
    if shift >= BITS:
        return MASK if sv < 0 else 0
    return to_unsigned(sv >> shift)


def wadd(a: int, b: int) -> int:
    # non-wrapping; only used under mod
    return a + b


def wmul(a: int, b: int) -> int:
    # non-wrapping; only used under mod
    return a * b


# op-name -> concrete function; names match the expression nodes' binop tags
BINOPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "sdiv": sdiv,
    "mod": mod,
    "smod": smod,
    "exp": exp,
    "signext": signextend,
    "lt": lt,
    "gt": gt,
    "slt": slt,
    "sgt": sgt,
    "eq": eq,
    "and": and_,
    "or": or_,
    "xor": xor,
    "byte": byte,
    "shl": shl,
    "shr": shr,
    "sar": sar,
    "wadd": wadd,
    "wmul": wmul,
}

UNOPS = {
    "iszero": iszero,
    "not": not_,
}

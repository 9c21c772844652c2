"""Symbolic 256-bit expressions with canonical constant folding.

Nodes are frozen dataclasses, so structural equality and hashing come for
free and are what every downstream comparison (operand diffs, lane
separation, slot families) relies on.  The smart constructors fold eagerly;
a normalized tree never contains an operator applied to two constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Union

from .. import u256

ENV_TAGS = {
    "CALLER", "CALLVALUE", "ADDRESS", "BALANCE", "TIMESTAMP", "NUMBER",
    "GAS", "CALLDATA", "CALLDATASIZE",
}


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Env:
    tag: str
    args: tuple["SymExpr", ...] = ()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "SymExpr"
    right: "SymExpr"


@dataclass(frozen=True)
class UnOp:
    op: str
    child: "SymExpr"


@dataclass(frozen=True)
class Hash:
    children: tuple["SymExpr", ...]


@dataclass(frozen=True)
class SLoad:
    slot: "SymExpr"
    generation: int


@dataclass(frozen=True)
class Ite:
    cond: "SymExpr"
    then: "SymExpr"
    orelse: "SymExpr"


@dataclass(frozen=True)
class Fresh:
    """Opaque placeholder for a value the memory model cannot resolve."""
    serial: int
    reason: str = ""


SymExpr = Union[Const, Env, BinOp, UnOp, Hash, SLoad, Ite, Fresh]

ZERO = Const(0)
ONE = Const(1)


def const(value: int) -> Const:
    return Const(value & u256.MASK)


def env(tag: str, *args: SymExpr) -> Env:
    if tag not in ENV_TAGS:
        raise ValueError(f"unknown environment tag {tag!r}")
    return Env(tag, tuple(args))


def binop(op: str, left: SymExpr, right: SymExpr) -> SymExpr:
    fn = u256.BINOPS.get(op)
    if fn is None:
        raise ValueError(f"unknown binary op {op!r}")
    if isinstance(left, Const) and isinstance(right, Const):
        # wadd/wmul intentionally carry values past 256 bits; they only ever
        # live under a mod node, which folds them back into range.
        return Const(fn(left.value, right.value))
    if isinstance(right, Const):
        rv = right.value
        if op in ("add", "sub", "or", "xor") and rv == 0:
            return left
        if op in ("mul", "div") and rv == 1:
            return left
        if op == "mul" and rv == 0:
            return ZERO
        if op in ("div", "mod") and rv == 0:
            return ZERO
        if op == "mod" and rv == 1:
            return ZERO
    if isinstance(left, Const):
        lv = left.value
        if op in ("add", "or", "xor") and lv == 0:
            return right
        if op == "mul" and lv == 1:
            return right
        if op in ("mul", "div", "mod", "and") and lv == 0:
            return ZERO
        if op in ("shl", "shr", "sar") and lv == 0:
            return right  # shift amount is the left operand
    return BinOp(op, left, right)


def unop(op: str, child: SymExpr) -> SymExpr:
    fn = u256.UNOPS.get(op)
    if fn is None:
        raise ValueError(f"unknown unary op {op!r}")
    if isinstance(child, Const):
        return Const(fn(child.value))
    if op == "iszero" and isinstance(child, UnOp) and child.op == "iszero":
        inner = child.child
        if isinstance(inner, UnOp) and inner.op == "iszero":
            return inner  # iszero^3 == iszero
    return UnOp(op, child)


def hash_of(children: list[SymExpr] | tuple[SymExpr, ...]) -> Hash:
    return Hash(tuple(children))


def sload(slot: SymExpr, generation: int) -> SLoad:
    return SLoad(slot, generation)


def ite(cond: SymExpr, then: SymExpr, orelse: SymExpr) -> SymExpr:
    if isinstance(cond, Const):
        return then if cond.value != 0 else orelse
    if then == orelse:
        return then
    return Ite(cond, then, orelse)


def normalize(expr: SymExpr) -> SymExpr:
    """Rebuild bottom-up through the folding constructors (idempotent)."""
    if isinstance(expr, Const):
        return Const(expr.value)
    if isinstance(expr, Env):
        return Env(expr.tag, tuple(normalize(a) for a in expr.args))
    if isinstance(expr, BinOp):
        return binop(expr.op, normalize(expr.left), normalize(expr.right))
    if isinstance(expr, UnOp):
        return unop(expr.op, normalize(expr.child))
    if isinstance(expr, Hash):
        return Hash(tuple(normalize(c) for c in expr.children))
    if isinstance(expr, SLoad):
        return SLoad(normalize(expr.slot), expr.generation)
    if isinstance(expr, Ite):
        return ite(normalize(expr.cond), normalize(expr.then), normalize(expr.orelse))
    if isinstance(expr, Fresh):
        return expr
    raise TypeError(f"not a SymExpr: {expr!r}")


def children(expr: SymExpr) -> tuple[SymExpr, ...]:
    if isinstance(expr, Env):
        return expr.args
    if isinstance(expr, BinOp):
        return (expr.left, expr.right)
    if isinstance(expr, UnOp):
        return (expr.child,)
    if isinstance(expr, Hash):
        return expr.children
    if isinstance(expr, SLoad):
        return (expr.slot,)
    if isinstance(expr, Ite):
        return (expr.cond, expr.then, expr.orelse)
    return ()


def walk(expr: SymExpr, into_sload_slots: bool = True,
         into_ite_conds: bool = True) -> Iterator[SymExpr]:
    """Preorder traversal.  With ``into_sload_slots=False`` the slot-number
    expression under a load is skipped: the loaded value is data, the slot it
    came from is an address computation.  With ``into_ite_conds=False`` the
    selector of a conditional is skipped, restricting the walk to data flow."""
    yield expr
    if isinstance(expr, SLoad) and not into_sload_slots:
        return
    if isinstance(expr, Ite) and not into_ite_conds:
        yield from walk(expr.then, into_sload_slots, into_ite_conds)
        yield from walk(expr.orelse, into_sload_slots, into_ite_conds)
        return
    for c in children(expr):
        yield from walk(c, into_sload_slots, into_ite_conds)


def contains(expr: SymExpr, pred: Callable[[SymExpr], bool],
             into_sload_slots: bool = True) -> bool:
    return any(pred(node) for node in walk(expr, into_sload_slots))


def contains_env(expr: SymExpr, tag: str, into_sload_slots: bool = True) -> bool:
    return contains(expr, lambda n: isinstance(n, Env) and n.tag == tag, into_sload_slots)


# --- rendering -----------------------------------------------------------------

_INFIX = {
    "add": ("+", 60), "sub": ("-", 60),
    "mul": ("*", 70), "div": ("/", 70), "mod": ("%", 70),
    "wadd": ("+", 60), "wmul": ("*", 70),
    "exp": ("**", 75),
    "shl": ("<<", 55), "shr": (">>", 55),
    "lt": ("<", 50), "gt": (">", 50),
    "eq": ("==", 45),
    "and": ("&", 40), "xor": ("^", 35), "or": ("|", 30),
}
_FUNC = {"sdiv", "smod", "slt", "sgt", "signext", "byte", "sar"}
_HEX_THRESHOLD = 1 << 64  # large constants (addresses, hashes) read better in hex


def pretty(expr: SymExpr) -> str:
    """Deterministic infix rendering used by tooltips and reports."""
    text, _ = _render(expr)
    return text


def _render(expr: SymExpr) -> tuple[str, int]:
    if isinstance(expr, Const):
        if expr.value >= _HEX_THRESHOLD:
            return f"0x{expr.value:x}", 100
        return str(expr.value), 100
    if isinstance(expr, Env):
        if expr.tag == "CALLDATA":
            return f"CALLDATA[{pretty(expr.args[0])}]", 100
        if expr.args:
            inner = ", ".join(pretty(a) for a in expr.args)
            return f"{expr.tag}({inner})", 100
        return expr.tag, 100
    if isinstance(expr, BinOp):
        if expr.op in _FUNC:
            return f"{expr.op}({pretty(expr.left)}, {pretty(expr.right)})", 100
        sym, prec = _INFIX[expr.op]
        lt, lp = _render(expr.left)
        rt, rp = _render(expr.right)
        if lp < prec:
            lt = f"({lt})"
        if rp <= prec and rp < 100:
            rt = f"({rt})"
        return f"{lt} {sym} {rt}", prec
    if isinstance(expr, UnOp):
        inner, prec = _render(expr.child)
        if expr.op == "iszero":
            return (f"!{inner}" if prec == 100 else f"!({inner})"), 90
        return (f"~{inner}" if prec == 100 else f"~({inner})"), 90
    if isinstance(expr, Hash):
        return f"keccak({', '.join(pretty(c) for c in expr.children)})", 100
    if isinstance(expr, SLoad):
        return f"storage[{pretty(expr.slot)}]", 100
    if isinstance(expr, Ite):
        return f"({pretty(expr.cond)} ? {pretty(expr.then)} : {pretty(expr.orelse)})", 100
    if isinstance(expr, Fresh):
        return f"unknown{expr.serial}", 100
    raise TypeError(f"not a SymExpr: {expr!r}")


# --- round-comparison diff -------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    text: str
    same: bool


def diff_segments(a: SymExpr, b: SymExpr) -> tuple[list[Segment], list[Segment]]:
    """Aligned segment lists for two expressions: matching subtrees render as
    shared segments, mismatching subtrees as differing ones."""
    if a == b:
        s = Segment(pretty(a), True)
        return [s], [s]
    same_shape = (
        type(a) is type(b)
        and isinstance(a, (BinOp, UnOp, Hash, Ite, Env, SLoad))
        and getattr(a, "op", getattr(a, "tag", None)) == getattr(b, "op", getattr(b, "tag", None))
        and (not isinstance(a, SLoad) or a.generation == b.generation)
        and len(children(a)) == len(children(b))
        and len(children(a)) > 0
    )
    if not same_shape:
        return [Segment(pretty(a), False)], [Segment(pretty(b), False)]
    seg_a: list[Segment] = []
    seg_b: list[Segment] = []
    glue_open, glue_sep, glue_close = _glue(a)
    if glue_open:
        seg_a.append(Segment(glue_open, True))
        seg_b.append(Segment(glue_open, True))
    for i, (ca, cb) in enumerate(zip(children(a), children(b))):
        if i:
            seg_a.append(Segment(glue_sep[i - 1], True))
            seg_b.append(Segment(glue_sep[i - 1], True))
        sa, sb = diff_segments(ca, cb)
        seg_a.extend(sa)
        seg_b.extend(sb)
    if glue_close:
        seg_a.append(Segment(glue_close, True))
        seg_b.append(Segment(glue_close, True))
    return seg_a, seg_b


def _glue(expr: SymExpr) -> tuple[str, list[str], str]:
    if isinstance(expr, BinOp):
        if expr.op in _FUNC:
            return f"{expr.op}(", [", "], ")"
        sym, _ = _INFIX[expr.op]
        return "(", [f" {sym} "], ")"
    if isinstance(expr, UnOp):
        return ("!(" if expr.op == "iszero" else "~("), [], ")"
    if isinstance(expr, Hash):
        return "keccak(", [", "] * (len(expr.children) - 1), ")"
    if isinstance(expr, Ite):
        return "(", [" ? ", " : "], ")"
    if isinstance(expr, Env):
        return f"{expr.tag}(", [", "] * max(0, len(expr.args) - 1), ")"
    if isinstance(expr, SLoad):
        return "storage[", [], "]"
    return "", [], ""


# --- concrete evaluation ----------------------------------------------------------


class UnevaluableError(ValueError):
    pass


class ConcreteEnv:
    """Concrete bindings for environment tags, initial storage and hashing.

    ``storage0`` maps slot numbers to the storage contents at the start of
    the run (unset slots read as zero), matching the machine's view that a
    load from an unwritten slot observes pre-existing state.
    """

    def __init__(self, *, caller: int = 0, callvalue: int = 0, address: int = 0,
                 timestamp: int = 0, number: int = 0, gas: int = 10_000_000,
                 calldata: bytes = b"", balances: dict[int, int] | None = None,
                 default_balance: int = 0, storage0: dict[int, int] | None = None,
                 keccak_words: Callable[[tuple[int, ...]], int] | None = None):
        self.caller = caller
        self.callvalue = callvalue
        self.address = address
        self.timestamp = timestamp
        self.number = number
        self.gas = gas
        self.calldata = calldata
        self.balances = balances or {}
        self.default_balance = default_balance
        self.storage0 = storage0 or {}
        if keccak_words is None:
            from .._keccak import keccak256_words
            keccak_words = keccak256_words
        self.keccak_words = keccak_words

    def calldata_word(self, offset: int) -> int:
        chunk = self.calldata[offset:offset + 32]
        return int.from_bytes(chunk.ljust(32, b"\x00"), "big")


def evaluate(expr: SymExpr, cenv: ConcreteEnv) -> int:
    """Re-evaluate a symbolic expression under concrete bindings."""
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Env):
        if expr.tag == "CALLER":
            return cenv.caller
        if expr.tag == "CALLVALUE":
            return cenv.callvalue
        if expr.tag == "ADDRESS":
            return cenv.address
        if expr.tag == "TIMESTAMP":
            return cenv.timestamp
        if expr.tag == "NUMBER":
            return cenv.number
        if expr.tag == "GAS":
            return cenv.gas
        if expr.tag == "CALLDATASIZE":
            return len(cenv.calldata)
        if expr.tag == "CALLDATA":
            return cenv.calldata_word(evaluate(expr.args[0], cenv))
        if expr.tag == "BALANCE":
            addr = evaluate(expr.args[0], cenv) if expr.args else cenv.address
            return cenv.balances.get(addr, cenv.default_balance)
        raise UnevaluableError(f"no binding for env tag {expr.tag}")
    if isinstance(expr, BinOp):
        return u256.BINOPS[expr.op](evaluate(expr.left, cenv), evaluate(expr.right, cenv))
    if isinstance(expr, UnOp):
        return u256.UNOPS[expr.op](evaluate(expr.child, cenv))
    if isinstance(expr, Hash):
        return cenv.keccak_words(tuple(evaluate(c, cenv) for c in expr.children))
    if isinstance(expr, SLoad):
        return cenv.storage0.get(evaluate(expr.slot, cenv), 0)
    if isinstance(expr, Ite):
        return evaluate(expr.then if evaluate(expr.cond, cenv) != 0 else expr.orelse, cenv)
    if isinstance(expr, Fresh):
        raise UnevaluableError(f"opaque value unknown{expr.serial} has no concrete meaning")
    raise TypeError(f"not a SymExpr: {expr!r}")

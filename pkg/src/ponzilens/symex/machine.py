"""The symbolic EVM-like machine: one state per path, events as it goes.

Memory is an ordered write-log with last-writer-wins reads at structurally
equal offsets; storage reads resolve through the write history with
select-over-store conditionals wherever a symbolically-addressed write might
alias the queried slot.  External calls are assumed to succeed and leave the
callee unmodelled — the outgoing transfer event is what the analysis needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..bytecode import Instruction
from ..cfg import BlockPath, Cfg, Edge, EdgeKind, TerminatorKind
from ..opcodes import is_push, lookup
from .expr import (
    BinOp,
    Const,
    Env,
    Fresh,
    Hash,
    SLoad,
    SymExpr,
    binop,
    const,
    env,
    hash_of,
    ite,
    sload,
    unop,
)
from .feasibility import Feasibility, FeasibilityChecker, check_feasible, strip_iszero

STACK_LIMIT = 1024

# GAS feeds call plumbing, not contract logic; gas accounting is out of scope,
# so reading it is not an information read.
_EVENT_ENV_TAGS = {
    "CALLER", "CALLVALUE", "ADDRESS", "BALANCE", "TIMESTAMP", "NUMBER",
    "CALLDATA", "CALLDATASIZE",
}


class PathAbort(Exception):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class StackUnderflow(PathAbort):
    pass


class StackOverflow(PathAbort):
    pass


class UnsupportedOpcode(PathAbort):
    pass


@dataclass(frozen=True)
class RawEvent:
    kind: str  # store | load | call_out | branch | env_read
    pc: int
    block: int
    path_pos: int
    loop_context: Optional[tuple[int, int]] = None  # (loop id, round 1|2)
    slot: Optional[SymExpr] = None
    value: Optional[SymExpr] = None
    gas: Optional[SymExpr] = None
    to: Optional[SymExpr] = None
    cond: Optional[SymExpr] = None
    taken: Optional[bool] = None
    tag: Optional[str] = None


@dataclass
class MemWrite:
    offset: SymExpr
    value: SymExpr
    width: int


@dataclass
class MachineState:
    stack: list[SymExpr] = field(default_factory=list)
    memory: list[MemWrite] = field(default_factory=list)
    storage: dict[SymExpr, SymExpr] = field(default_factory=dict)
    storage_log: list[tuple[SymExpr, SymExpr]] = field(default_factory=list)
    storage_generation: int = 0
    path_condition: list[tuple[SymExpr, bool]] = field(default_factory=list)
    pc: int = 0
    events: list[RawEvent] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    block: int = 0
    path_pos: int = 0
    loop_context: Optional[tuple[int, int]] = None
    fresh_counter: int = 0
    pending_jump: Optional[SymExpr] = None
    pending_branch: Optional[SymExpr] = None

    def push(self, value: SymExpr) -> None:
        if len(self.stack) >= STACK_LIMIT:
            raise StackOverflow(f"stack overflow at pc {self.pc}")
        self.stack.append(value)

    def pop(self) -> SymExpr:
        if not self.stack:
            raise StackUnderflow(f"stack underflow at pc {self.pc}")
        return self.stack.pop()

    def fresh(self, reason: str) -> Fresh:
        self.fresh_counter += 1
        self.diagnostics.append(f"pc {self.pc}: {reason}; introduced opaque value")
        return Fresh(self.fresh_counter, reason)

    def emit(self, kind: str, **fields) -> None:
        self.events.append(RawEvent(kind=kind, pc=self.pc, block=self.block,
                                    path_pos=self.path_pos,
                                    loop_context=self.loop_context, **fields))

    # -- memory ------------------------------------------------------------

    def mem_read_word(self, offset: SymExpr) -> SymExpr:
        for w in reversed(self.memory):
            if w.width == 32 and w.offset == offset:
                return w.value
        if isinstance(offset, Const):
            lo = offset.value
            for w in self.memory:
                if isinstance(w.offset, Const):
                    wlo = w.offset.value
                    if wlo + w.width > lo and wlo < lo + 32:
                        return self.fresh("memory read overlaps a non-aligned write")
                else:
                    return self.fresh("memory read may overlap a symbolic-offset write")
            return Const(0)  # untouched memory reads as zero
        return self.fresh("memory read at symbolic offset with no matching write")

    # -- storage -----------------------------------------------------------

    def storage_read(self, slot: SymExpr) -> SymExpr:
        base: SymExpr | None = None
        aliasing: list[tuple[SymExpr, SymExpr]] = []
        for key, value in reversed(self.storage_log):
            if key == slot:
                base = value
                break
            if not _provably_distinct(key, slot):
                aliasing.append((key, value))
        if base is None:
            base = sload(slot, self.storage_generation)
        expr = base
        for key, value in reversed(aliasing):  # oldest innermost, newest wins
            expr = ite(binop("eq", slot, key), value, expr)
        return expr


def _split_offset(expr: SymExpr) -> tuple[SymExpr, int]:
    if isinstance(expr, BinOp) and expr.op == "add":
        if isinstance(expr.right, Const):
            return expr.left, expr.right.value
        if isinstance(expr.left, Const):
            return expr.right, expr.left.value
    return expr, 0


def _hash_base(expr: SymExpr) -> Hash | None:
    """The hash root of a ``keccak(..) + offset`` shape, for any offset."""
    if isinstance(expr, Hash):
        return expr
    if isinstance(expr, BinOp) and expr.op == "add":
        if isinstance(expr.left, Hash):
            return expr.left
        if isinstance(expr.right, Hash):
            return expr.right
    return None


def _provably_distinct(a: SymExpr, b: SymExpr) -> bool:
    """True when two slot expressions cannot denote the same slot.

    Treats the hash as injective with output regions disjoint from directly
    addressed slots — the standard working assumptions for layout analysis.
    """
    if a == b:
        return False
    if isinstance(a, Const) and isinstance(b, Const):
        return True  # values differ (equality checked above)
    base_a, off_a = _split_offset(a)
    base_b, off_b = _split_offset(b)
    if base_a == base_b:
        return off_a != off_b
    hash_a = _hash_base(a)
    hash_b = _hash_base(b)
    if hash_a is not None and hash_b is not None:
        if hash_a != hash_b:
            if len(hash_a.children) != len(hash_b.children):
                return True
            return any(_provably_distinct(ca, cb)
                       for ca, cb in zip(hash_a.children, hash_b.children))
        return False  # same region, offsets not provably different
    if (hash_a is not None and isinstance(b, Const)) or \
            (hash_b is not None and isinstance(a, Const)):
        return True
    return False


def step(state: MachineState, instr: Instruction) -> MachineState:
    """Execute one instruction, updating the state in place."""
    info = lookup(instr.op)
    if not info.supported:
        raise UnsupportedOpcode(f"unsupported opcode {instr.mnemonic} at pc {instr.offset}")
    state.pc = instr.offset
    name = instr.mnemonic

    if is_push(instr.op):
        if instr.truncated:
            raise UnsupportedOpcode(f"truncated push at pc {instr.offset}")
        state.push(const(instr.operand or 0))
        return state
    if name == "PUSH0":
        state.push(Const(0))
        return state
    if name.startswith("DUP"):
        n = info.pops
        if len(state.stack) < n:
            raise StackUnderflow(f"stack underflow at pc {state.pc}")
        state.push(state.stack[-n])
        return state
    if name.startswith("SWAP"):
        n = info.pops - 1
        if len(state.stack) < n + 1:
            raise StackUnderflow(f"stack underflow at pc {state.pc}")
        state.stack[-1], state.stack[-n - 1] = state.stack[-n - 1], state.stack[-1]
        return state
    if name == "POP":
        state.pop()
        return state

    if name in ("ADD", "MUL", "SUB", "DIV", "SDIV", "MOD", "SMOD", "EXP",
                "SIGNEXTEND", "LT", "GT", "SLT", "SGT", "EQ", "AND", "OR",
                "XOR", "BYTE", "SHL", "SHR", "SAR"):
        a = state.pop()
        b = state.pop()
        op = {"SIGNEXTEND": "signext"}.get(name, name.lower())
        state.push(binop(op, a, b))
        return state
    if name in ("ADDMOD", "MULMOD"):
        a, b, n = state.pop(), state.pop(), state.pop()
        wide = binop("wadd" if name == "ADDMOD" else "wmul", a, b)
        state.push(binop("mod", wide, n))
        return state
    if name in ("ISZERO", "NOT"):
        state.push(unop(name.lower(), state.pop()))
        return state

    if name in ("CALLER", "CALLVALUE", "ADDRESS", "TIMESTAMP", "NUMBER", "GAS",
                "CALLDATASIZE"):
        state.push(env(name))
        if name in _EVENT_ENV_TAGS:
            state.emit("env_read", tag=name)
        return state
    if name == "CALLDATALOAD":
        offset = state.pop()
        state.push(env("CALLDATA", offset))
        state.emit("env_read", tag="CALLDATA")
        return state
    if name == "BALANCE":
        addr = state.pop()
        state.push(env("BALANCE", addr))
        state.emit("env_read", tag="BALANCE")
        return state
    if name == "PC":
        state.push(const(instr.offset))
        return state

    if name == "MLOAD":
        state.push(state.mem_read_word(state.pop()))
        return state
    if name == "MSTORE":
        offset, value = state.pop(), state.pop()
        state.memory.append(MemWrite(offset, value, 32))
        return state
    if name == "MSTORE8":
        offset, value = state.pop(), state.pop()
        state.memory.append(MemWrite(offset, binop("and", value, Const(0xFF)), 1))
        return state

    if name == "SLOAD":
        slot = state.pop()
        state.push(state.storage_read(slot))
        state.emit("load", slot=slot)
        return state
    if name == "SSTORE":
        slot, value = state.pop(), state.pop()
        state.storage_log.append((slot, value))
        state.storage[slot] = value
        state.storage_generation += 1
        state.emit("store", slot=slot, value=value)
        return state

    if name == "SHA3":
        offset, size = state.pop(), state.pop()
        state.push(_sha3(state, offset, size))
        return state

    if name in ("CALL", "CALLCODE"):
        gas = state.pop()
        to = state.pop()
        value = state.pop()
        for _ in range(4):  # argsOffset, argsLength, retOffset, retLength
            state.pop()
        state.emit("call_out", gas=gas, to=to, value=value)
        state.push(Const(1))  # assumed success; callee not modelled
        return state
    if name in ("DELEGATECALL", "STATICCALL"):
        gas = state.pop()
        to = state.pop()
        for _ in range(4):
            state.pop()
        state.emit("call_out", gas=gas, to=to, value=Const(0))
        state.push(Const(1))
        return state

    if name == "JUMP":
        state.pending_jump = state.pop()
        return state
    if name == "JUMPI":
        state.pending_jump = state.pop()
        state.pending_branch = state.pop()
        return state
    if name == "JUMPDEST":
        return state
    if name in ("STOP",):
        return state
    if name in ("RETURN", "REVERT"):
        state.pop()
        state.pop()
        return state
    if name == "SELFDESTRUCT":
        state.pop()
        return state
    if name == "INVALID":
        return state

    raise UnsupportedOpcode(f"no symbolic semantics for {name} at pc {instr.offset}")


def _sha3(state: MachineState, offset: SymExpr, size: SymExpr) -> SymExpr:
    if not isinstance(size, Const):
        return hash_of([state.fresh("hash over symbolically-sized memory range")])
    n = size.value
    if n == 0:
        return hash_of([])
    if n % 32 != 0 or n > 32 * 16:
        return hash_of([state.fresh(f"hash over unaligned memory range of {n} bytes")])
    words = []
    for i in range(n // 32):
        words.append(state.mem_read_word(binop("add", offset, Const(32 * i))))
    return hash_of(words)


@dataclass
class PathRun:
    path: BlockPath
    state: MachineState
    feasible: bool
    success: bool
    ended: str  # stop | return | selfdestruct | revert | invalid | stuck | aborted | infeasible
    diagnostics: list[str] = field(default_factory=list)
    discovered_edges: list[Edge] = field(default_factory=list)

    @property
    def events(self) -> list[RawEvent]:
        return self.state.events

    @property
    def included(self) -> bool:
        """Feasible paths that ran to a normal halt make it into reports."""
        return self.feasible and self.success


def run_path(path: BlockPath, instrs: list[Instruction], cfg: Cfg,
             checker: FeasibilityChecker | None = None) -> PathRun:
    """Execute the blocks of a path in order, asserting each branch with the
    polarity the path takes and checking feasibility as conditions accrue."""
    state = MachineState()
    by_id = {b.id: b for b in cfg.blocks}
    edge_set = {(e.src, e.dst, e.kind) for e in cfg.edges}
    pos_in_round = _round_membership(path)
    run = PathRun(path=path, state=state, feasible=True, success=False, ended="stop")

    for pos, block_id in enumerate(path.blocks):
        block = by_id[block_id]
        state.block = block_id
        state.path_pos = pos
        state.loop_context = pos_in_round.get(pos)
        state.pending_jump = None
        state.pending_branch = None
        try:
            for i in block.instr_range():
                step(state, instrs[i])
        except PathAbort as exc:
            run.diagnostics.append(f"path aborted in block {block_id}: {exc.reason}")
            run.success = False
            run.ended = "aborted"
            return run

        nxt = path.blocks[pos + 1] if pos + 1 < len(path.blocks) else None
        term = block.terminator

        if term == TerminatorKind.JUMPI:
            target = state.pending_jump
            raw_cond = state.pending_branch
            fall = by_id.get(block_id + 1)
            target_block = None
            if isinstance(target, Const):
                tb = cfg.block_at_offset(target.value)
                target_block = tb.id if tb is not None else None
                if (target_block is not None
                        and (block_id, target_block, EdgeKind.BRANCH_TRUE) not in edge_set):
                    run.discovered_edges.append(Edge(block_id, target_block, EdgeKind.BRANCH_TRUE))
            if nxt is None:
                run.ended = "stuck"
                run.diagnostics.append(f"path ends at JUMPI block {block_id} with no successor")
                return run
            if target_block is not None and nxt == target_block and (fall is None or nxt != fall.id):
                polarity = True
            elif fall is not None and nxt == fall.id:
                polarity = False
            elif target_block is not None and nxt == target_block:
                polarity = True
            else:
                run.diagnostics.append(
                    f"block {block_id}: successor {nxt} matches neither branch; aborting")
                run.ended = "aborted"
                return run
            cond, polarity = strip_iszero(raw_cond, polarity)
            state.path_condition.append((cond, polarity))
            state.emit("branch", cond=cond, taken=polarity)
            verdict = check_feasible(state.path_condition, checker)
            if verdict is Feasibility.INFEASIBLE:
                run.feasible = False
                run.ended = "infeasible"
                run.diagnostics.append(
                    f"path condition contradictory after block {block_id}")
                return run
        elif term == TerminatorKind.JUMP:
            target = state.pending_jump
            if isinstance(target, Const):
                tb = cfg.block_at_offset(target.value)
                if tb is not None and nxt is None:
                    if (block_id, tb.id, EdgeKind.JUMP_TAKEN) not in edge_set:
                        run.discovered_edges.append(Edge(block_id, tb.id, EdgeKind.JUMP_TAKEN))
                if tb is not None and nxt is not None and tb.id != nxt:
                    run.diagnostics.append(
                        f"block {block_id}: jump target resolves to block {tb.id}, path goes to {nxt}")
                    run.ended = "aborted"
                    return run
            if nxt is None:
                run.ended = "stuck"
                run.diagnostics.append(f"path ends at JUMP block {block_id} with no successor")
                return run
        elif term in (TerminatorKind.STOP, TerminatorKind.RETURN, TerminatorKind.SELFDESTRUCT):
            run.success = True
            run.ended = term.value
            if nxt is not None:
                run.diagnostics.append(f"blocks after terminator in block {block_id}; ignored")
            return run
        elif term in (TerminatorKind.REVERT, TerminatorKind.INVALID):
            run.success = False
            run.ended = term.value
            run.diagnostics.append(f"path ends in {term.value} at block {block_id}")
            return run
        else:  # fallthrough
            if nxt is None:
                run.ended = "stuck"
                run.diagnostics.append(f"path falls off the end of code after block {block_id}")
                return run

    run.ended = "stuck"
    return run


def _round_membership(path: BlockPath) -> dict[int, tuple[int, int]]:
    membership: dict[int, tuple[int, int]] = {}
    for span in path.loop_spans:
        for pos in range(span.first_round[0], span.first_round[1] + 1):
            membership[pos] = (span.loop_id, 1)
        for pos in range(span.second_round[0], span.second_round[1] + 1):
            membership[pos] = (span.loop_id, 2)
    return membership

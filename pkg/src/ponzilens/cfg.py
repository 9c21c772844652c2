"""Basic-block recovery, jump-target resolution, loops, and path enumeration.

Jump targets on this stack machine are data, so the graph is recovered by
propagating an abstract stack (constants or unknown) along block chains from
the entry.  Targets that stay unknown here are left to the symbolic executor,
which reports any concretised targets back so edges can be merged in before
grouping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from . import u256
from .bytecode import Instruction
from .opcodes import is_push, lookup


class TerminatorKind(str, Enum):
    JUMP = "jump"
    JUMPI = "jumpi"
    STOP = "stop"
    RETURN = "return"
    REVERT = "revert"
    SELFDESTRUCT = "selfdestruct"
    INVALID = "invalid"
    FALLTHROUGH = "fallthrough"


class EdgeKind(str, Enum):
    JUMP_TAKEN = "jump_taken"
    FALL_THROUGH = "fall_through"
    BRANCH_TRUE = "branch_true"
    BRANCH_FALSE = "branch_false"


_TERMINATOR_BY_MNEMONIC = {
    "JUMP": TerminatorKind.JUMP,
    "JUMPI": TerminatorKind.JUMPI,
    "STOP": TerminatorKind.STOP,
    "RETURN": TerminatorKind.RETURN,
    "REVERT": TerminatorKind.REVERT,
    "SELFDESTRUCT": TerminatorKind.SELFDESTRUCT,
    "INVALID": TerminatorKind.INVALID,
}

SUCCESS_TERMINATORS = {TerminatorKind.STOP, TerminatorKind.RETURN, TerminatorKind.SELFDESTRUCT}


class NoEntryBlockError(ValueError):
    pass


@dataclass(frozen=True)
class BasicBlock:
    id: int
    start_offset: int
    end_offset: int  # offset one past the last byte of the block
    first_instr: int
    last_instr: int  # inclusive index into the instruction list
    terminator: TerminatorKind

    def instr_range(self) -> range:
        return range(self.first_instr, self.last_instr + 1)


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: EdgeKind


@dataclass(frozen=True)
class Loop:
    id: int
    back_edge: Edge
    head: int
    body: frozenset[int]
    irreducible: bool = False


@dataclass
class Cfg:
    blocks: list[BasicBlock]
    edges: list[Edge]
    entry: int
    diagnostics: list[str] = field(default_factory=list)
    loops: list[Loop] = field(default_factory=list)

    def block_at_offset(self, offset: int) -> BasicBlock | None:
        for b in self.blocks:
            if b.start_offset == offset:
                return b
        return None

    def successors(self, block_id: int) -> list[Edge]:
        return sorted(
            (e for e in self.edges if e.src == block_id),
            key=lambda e: (e.dst, e.kind.value),
        )

    @property
    def back_edges(self) -> set[Edge]:
        return {lp.back_edge for lp in self.loops}


def split_blocks(instrs: list[Instruction]) -> list[BasicBlock]:
    """Partition instructions into blocks at JUMPDESTs and after terminators."""
    blocks: list[BasicBlock] = []
    if not instrs:
        return blocks
    start = 0
    for i, ins in enumerate(instrs):
        info = lookup(ins.op)
        if ins.mnemonic == "JUMPDEST" and i > start:
            _append_block(blocks, instrs, start, i - 1)
            start = i
        if info.terminator or ins.truncated:
            _append_block(blocks, instrs, start, i)
            start = i + 1
    if start < len(instrs):
        _append_block(blocks, instrs, start, len(instrs) - 1)
    return blocks


def _append_block(blocks: list[BasicBlock], instrs: list[Instruction], first: int, last: int) -> None:
    tail = instrs[last]
    if tail.truncated:
        kind = TerminatorKind.INVALID
    else:
        info = lookup(tail.op)
        if info.terminator:
            kind = _TERMINATOR_BY_MNEMONIC.get(tail.mnemonic, TerminatorKind.INVALID)
        else:
            kind = TerminatorKind.FALLTHROUGH
    blocks.append(
        BasicBlock(
            id=len(blocks),
            start_offset=instrs[first].offset,
            end_offset=tail.offset + tail.width,
            first_instr=first,
            last_instr=last,
            terminator=kind,
        )
    )


# --- abstract stack used for jump-target resolution ---------------------------

_STACK_DIGEST_DEPTH = 16
_MAX_VISITS_PER_BLOCK = 64


def _abstract_step(stack: list[int | None], ins: Instruction) -> None:
    info = lookup(ins.op)

    def pop() -> int | None:
        return stack.pop() if stack else None

    name = ins.mnemonic
    if is_push(ins.op) or name == "PUSH0":
        stack.append(ins.operand if ins.operand is not None else 0)
    elif name.startswith("DUP"):
        n = info.pops
        stack.append(stack[-n] if len(stack) >= n else None)
    elif name.startswith("SWAP"):
        n = info.pops - 1
        if len(stack) >= n + 1:
            stack[-1], stack[-n - 1] = stack[-n - 1], stack[-1]
        else:
            for _ in range(min(len(stack), 2)):
                stack.pop()
            stack.extend([None, None])
    elif name == "PC":
        stack.append(ins.offset)
    elif name == "JUMPDEST":
        pass
    else:
        fn = u256.BINOPS.get(name.lower()) if info.pops == 2 and info.pushes == 1 else None
        un = u256.UNOPS.get(name.lower()) if info.pops == 1 and info.pushes == 1 else None
        args = [pop() for _ in range(info.pops)]
        if fn is not None and args[0] is not None and args[1] is not None:
            stack.append(fn(args[0], args[1]))
        elif un is not None and args[0] is not None:
            stack.append(un(args[0]))
        else:
            stack.extend([None] * info.pushes)


def resolve_cfg(blocks: list[BasicBlock], instrs: list[Instruction],
                extra_edges: list[Edge] | None = None) -> Cfg:
    """Build the graph by abstract execution from the entry block.

    Push-constants propagate through DUP/SWAP and constant-foldable
    arithmetic; dynamic targets that stay unknown are recorded as
    diagnostics rather than edges.  ``extra_edges`` lets the driver merge in
    targets the symbolic executor discovered on a previous pass.
    """
    if not blocks:
        raise NoEntryBlockError("program has no instructions, so no entry block")

    by_start = {b.start_offset: b for b in blocks}
    by_id = {b.id: b for b in blocks}
    edges: set[Edge] = set()
    diags: list[str] = []
    jumpdest_starts = {
        b.start_offset for b in blocks if instrs[b.first_instr].mnemonic == "JUMPDEST"
    }

    def add_jump_edge(src: BasicBlock, target: int | None, kind: EdgeKind) -> int | None:
        if target is None:
            diags.append(f"block {src.id}: dynamic jump target unresolved by constant propagation")
            return None
        if target not in by_start or target not in jumpdest_starts:
            diags.append(f"block {src.id}: jump target 0x{target:x} is not a JUMPDEST block start")
            return None
        dst = by_start[target]
        edges.add(Edge(src.id, dst.id, kind))
        return dst.id

    entry = blocks[0]
    worklist: list[tuple[int, tuple[int | None, ...]]] = [(entry.id, ())]
    if extra_edges:
        for e in extra_edges:
            dst = by_id.get(e.dst)
            src = by_id.get(e.src)
            if dst is None or src is None:
                continue
            if instrs[dst.first_instr].mnemonic != "JUMPDEST":
                diags.append(f"discovered edge {e.src}->{e.dst} rejected: target not a JUMPDEST")
                continue
            edges.add(e)
            worklist.append((e.dst, ()))
    visited: set[tuple[int, tuple[int | None, ...]]] = set()
    visit_count: dict[int, int] = {}

    while worklist:
        block_id, stack_digest = worklist.pop()
        key = (block_id, stack_digest)
        if key in visited:
            continue
        visited.add(key)
        visit_count[block_id] = visit_count.get(block_id, 0) + 1
        if visit_count[block_id] > _MAX_VISITS_PER_BLOCK:
            diags.append(f"block {block_id}: jump resolution visit budget exhausted")
            continue
        block = by_id[block_id]
        stack: list[int | None] = list(stack_digest)

        for i in block.instr_range():
            ins = instrs[i]
            if ins.mnemonic in ("JUMP", "JUMPI") and i == block.last_instr:
                break
            _abstract_step(stack, ins)

        def push_succ(dst_id: int, succ_stack: list[int | None]) -> None:
            digest = tuple(succ_stack[-_STACK_DIGEST_DEPTH:])
            worklist.append((dst_id, digest))

        term = block.terminator
        next_block = by_id.get(block_id + 1)
        if term == TerminatorKind.JUMP:
            target = stack.pop() if stack else None
            dst = add_jump_edge(block, target, EdgeKind.JUMP_TAKEN)
            if dst is not None:
                push_succ(dst, stack)
        elif term == TerminatorKind.JUMPI:
            target = stack.pop() if stack else None
            stack.pop() if stack else None  # condition
            dst = add_jump_edge(block, target, EdgeKind.BRANCH_TRUE)
            if dst is not None:
                push_succ(dst, stack)
            if next_block is not None:
                edges.add(Edge(block.id, next_block.id, EdgeKind.BRANCH_FALSE))
                push_succ(next_block.id, stack)
            else:
                diags.append(f"block {block.id}: JUMPI falls off the end of code")
        elif term == TerminatorKind.FALLTHROUGH:
            if next_block is not None:
                edges.add(Edge(block.id, next_block.id, EdgeKind.FALL_THROUGH))
                push_succ(next_block.id, stack)
            else:
                diags.append(f"block {block.id}: execution falls off the end of code")

    cfg = Cfg(blocks=blocks, edges=sorted(edges, key=lambda e: (e.src, e.dst, e.kind.value)),
              entry=entry.id, diagnostics=diags)
    _check_invariants(cfg)
    return cfg


def _check_invariants(cfg: Cfg) -> None:
    for b in cfg.blocks:
        if b.terminator == TerminatorKind.JUMPI:
            outs = [e for e in cfg.edges if e.src == b.id]
            if sum(1 for e in outs if e.kind == EdgeKind.BRANCH_TRUE) > 1:
                cfg.diagnostics.append(f"block {b.id}: multiple resolved true-branch targets")


def find_loops(cfg: Cfg) -> list[Loop]:
    """Depth-first back-edge detection plus natural-loop body computation.

    Back edges whose head does not dominate the tail (irreducible entry) are
    flagged, not guessed at.  The result is stored on ``cfg.loops``.
    """
    succs = {b.id: [e for e in cfg.successors(b.id)] for b in cfg.blocks}
    preds: dict[int, set[int]] = {b.id: set() for b in cfg.blocks}
    for e in cfg.edges:
        preds[e.dst].add(e.src)

    color: dict[int, int] = {}
    back: list[Edge] = []
    stack: list[tuple[int, int]] = [(cfg.entry, 0)]
    color[cfg.entry] = 1
    while stack:
        node, idx = stack[-1]
        out = succs.get(node, [])
        if idx < len(out):
            stack[-1] = (node, idx + 1)
            edge = out[idx]
            state = color.get(edge.dst, 0)
            if state == 1:
                back.append(edge)
            elif state == 0:
                color[edge.dst] = 1
                stack.append((edge.dst, 0))
        else:
            color[node] = 2
            stack.pop()

    dom = _dominators(cfg)
    loops: list[Loop] = []
    for i, edge in enumerate(sorted(back, key=lambda e: (e.src, e.dst))):
        head, tail = edge.dst, edge.src
        body = {head}
        work = [tail]
        while work:
            n = work.pop()
            if n in body:
                continue
            body.add(n)
            work.extend(p for p in preds.get(n, ()) if p not in body)
        irreducible = head not in dom.get(tail, set())
        if irreducible:
            cfg.diagnostics.append(
                f"irreducible loop: back edge {tail}->{head} whose head does not dominate its tail"
            )
        loops.append(Loop(id=i, back_edge=edge, head=head, body=frozenset(body),
                          irreducible=irreducible))
    cfg.loops = loops
    return loops


def _dominators(cfg: Cfg) -> dict[int, set[int]]:
    ids = [b.id for b in cfg.blocks]
    preds: dict[int, set[int]] = {i: set() for i in ids}
    for e in cfg.edges:
        preds[e.dst].add(e.src)
    full = set(ids)
    dom = {i: ({i} if i == cfg.entry else set(full)) for i in ids}
    changed = True
    while changed:
        changed = False
        for i in ids:
            if i == cfg.entry:
                continue
            ps = [dom[p] for p in preds[i]]
            new = (set.intersection(*ps) if ps else set()) | {i}
            if new != dom[i]:
                dom[i] = new
                changed = True
    return dom


# --- bounded path enumeration --------------------------------------------------


@dataclass(frozen=True)
class PathLimits:
    max_paths: int = 4096
    max_blocks_per_path: int = 512

    # rounds per back edge is a constant of the method, read-only by design
    @property
    def rounds_per_back_edge(self) -> int:
        return 2

    def __post_init__(self):
        if self.max_paths <= 0 or self.max_blocks_per_path <= 0:
            raise ValueError("path limits must be positive")


@dataclass(frozen=True)
class LoopSpan:
    loop_id: int
    first_round: tuple[int, int]   # inclusive index range into the block sequence
    second_round: tuple[int, int]


@dataclass(frozen=True)
class BlockPath:
    blocks: tuple[int, ...]
    loop_spans: tuple[LoopSpan, ...] = ()


@dataclass
class PathSet:
    paths: list[BlockPath]
    truncated: bool = False
    diagnostics: list[str] = field(default_factory=list)


def enumerate_paths(cfg: Cfg, limits: PathLimits | None = None) -> PathSet:
    """Depth-first entry-to-terminator enumeration with two-round loops.

    Each back edge is taken exactly 0 or 2 times: a single round carries no
    information the two-round unrolling lacks, and two rounds are what the
    round-comparison view needs.  Output order is lexicographic by block-id
    sequence regardless of exploration order.
    """
    limits = limits or PathLimits()
    back = {(lp.back_edge.src, lp.back_edge.dst): lp.id for lp in cfg.loops}
    succs = {b.id: cfg.successors(b.id) for b in cfg.blocks}
    end_kinds = {
        TerminatorKind.STOP, TerminatorKind.RETURN, TerminatorKind.REVERT,
        TerminatorKind.SELFDESTRUCT, TerminatorKind.INVALID,
    }
    by_id = {b.id: b for b in cfg.blocks}

    result = PathSet(paths=[])
    path: list[int] = [cfg.entry]
    counts: dict[tuple[int, int], int] = {}
    frames: list[int] = [0]  # next successor index to try per depth
    length_pruned = False

    def emit() -> None:
        if any(c == 1 for c in counts.values()):
            return
        result.paths.append(BlockPath(tuple(path), _loop_spans(path, back)))

    while frames:
        if len(result.paths) >= limits.max_paths:
            result.truncated = True
            result.diagnostics.append(
                f"path enumeration truncated at max_paths={limits.max_paths}")
            break
        node = path[-1]
        block = by_id[node]
        out = succs[node]
        idx = frames[-1]
        if idx == 0 and (block.terminator in end_kinds or not out):
            emit()
        if idx >= len(out) or len(path) >= limits.max_blocks_per_path:
            if len(path) >= limits.max_blocks_per_path and idx < len(out):
                result.truncated = True
                if not length_pruned:
                    length_pruned = True
                    result.diagnostics.append(
                        f"path exceeded max_blocks_per_path={limits.max_blocks_per_path}; pruned")
            frames.pop()
            path.pop()
            if frames:
                prev_edge = (path[-1], node)
                if prev_edge in back:
                    counts[prev_edge] -= 1
            continue
        frames[-1] = idx + 1
        edge = out[idx]
        key = (node, edge.dst)
        if key in back:
            if counts.get(key, 0) >= 2:
                continue
            counts[key] = counts.get(key, 0) + 1
        path.append(edge.dst)
        frames.append(0)

    result.paths.sort(key=lambda p: p.blocks)
    deduped: list[BlockPath] = []
    for p in result.paths:
        if not deduped or deduped[-1].blocks != p.blocks:
            deduped.append(p)
    result.paths = deduped
    return result


def _loop_spans(path: list[int], back: dict[tuple[int, int], int]) -> tuple[LoopSpan, ...]:
    taken: dict[tuple[int, int], list[int]] = {}
    for i in range(len(path) - 1):
        key = (path[i], path[i + 1])
        if key in back:
            taken.setdefault(key, []).append(i)
    spans = []
    for key, positions in taken.items():
        if len(positions) != 2:
            continue
        head = key[1]
        i1, i2 = positions
        j1 = max(j for j in range(i1 + 1) if path[j] == head)
        spans.append(LoopSpan(back[key], (j1, i1), (i1 + 1, i2)))
    return tuple(sorted(spans, key=lambda s: s.first_round))


def to_dot(cfg: Cfg, instrs: list[Instruction]) -> str:
    """DOT export for debugging (``--emit-cfg-dot``)."""
    lines = ["digraph cfg {", "  node [shape=box, fontname=monospace];"]
    for b in cfg.blocks:
        body = "\\l".join(str(instrs[i]) for i in b.instr_range())
        lines.append(f'  b{b.id} [label="block {b.id} @0x{b.start_offset:x}\\l{body}\\l"];')
    style = {
        EdgeKind.JUMP_TAKEN: "solid",
        EdgeKind.FALL_THROUGH: "dotted",
        EdgeKind.BRANCH_TRUE: "solid",
        EdgeKind.BRANCH_FALSE: "dashed",
    }
    back = {(lp.back_edge.src, lp.back_edge.dst) for lp in cfg.loops}
    for e in cfg.edges:
        color = "red" if (e.src, e.dst) in back else "black"
        lines.append(
            f'  b{e.src} -> b{e.dst} [style={style[e.kind]}, color={color}, label="{e.kind.value}"];'
        )
    lines.append("}")
    return "\n".join(lines)

"""From raw machine events to tagged semantic actions.

Stores become Write Information, value-bearing outgoing calls become Invoke
Payment, branch assertions become Check Constraint, and loads of storage or
environment become Read Information.  A second pass links actions to storage
slot families, infers slot structure from the shape of the slot-number
expression, and applies the contract-wide semantic tags (investing, update,
payback, rewarding).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .symex.expr import (
    BinOp,
    Const,
    Env,
    Hash,
    SLoad,
    Segment,
    SymExpr,
    contains,
    contains_env,
    diff_segments,
    normalize,
    pretty,
)
from .symex.machine import PathRun, RawEvent


class ActionKind(str, Enum):
    WRITE = "write_information"
    PAYMENT = "invoke_payment"
    CONSTRAINT = "check_constraint"
    READ = "read_information"


class Structure(str, Enum):
    VARIABLE = "variable"
    ARRAY = "array"
    MAPPING = "mapping"
    AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class SlotRef:
    family: str
    structure: Structure
    base: SymExpr


def classify_slot(slot: SymExpr) -> SlotRef:
    """Infer the storage structure from the shape of the slot expression.

    Constant slot -> variable; hash of one constant word (plus offset) ->
    dynamic array at that word; hash of (key, constant word) -> mapping at
    that word.  Anything else keeps the full expression as its own family.
    """
    slot = normalize(slot)
    base, _off = _split_base(slot)
    if isinstance(base, Const):
        return SlotRef(f"var:{base.value}", Structure.VARIABLE, base)
    if isinstance(base, Hash):
        ch = base.children
        if len(ch) == 1 and isinstance(ch[0], Const):
            return SlotRef(f"arr:{ch[0].value}", Structure.ARRAY, base)
        if len(ch) == 2 and isinstance(ch[1], Const):
            return SlotRef(f"map:{ch[1].value}", Structure.MAPPING, base)
    return SlotRef(f"expr:{pretty(slot)}", Structure.AMBIGUOUS, slot)


def _split_base(expr: SymExpr) -> tuple[SymExpr, Optional[SymExpr]]:
    if isinstance(expr, BinOp) and expr.op == "add":
        if isinstance(expr.left, Hash):
            return expr.left, expr.right
        if isinstance(expr.right, Hash):
            return expr.right, expr.left
    return expr, None


@dataclass
class Action:
    kind: ActionKind
    pc: int
    block: int
    path_pos: int
    loop_context: Optional[tuple[int, int]] = None

    def operand_key(self) -> tuple:
        """Structural identity of the action's parameters; two actions with
        equal keys are 'the same action' for lane separation and diffs."""
        raise NotImplementedError

    def operand_fields(self) -> list[tuple[str, SymExpr]]:
        raise NotImplementedError


@dataclass
class WriteAction(Action):
    slot: SymExpr = None  # type: ignore[assignment]
    content: SymExpr = None  # type: ignore[assignment]
    slot_ref: Optional[SlotRef] = None
    is_update: bool = False
    is_investing: bool = False

    def operand_key(self) -> tuple:
        return (self.kind.value, self.slot, self.content)

    def operand_fields(self) -> list[tuple[str, SymExpr]]:
        return [("slot", self.slot), ("content", self.content)]


@dataclass
class PaymentAction(Action):
    payee: SymExpr = None  # type: ignore[assignment]
    value: SymExpr = None  # type: ignore[assignment]
    payee_slot: Optional[SlotRef] = None
    value_slot: Optional[SlotRef] = None
    is_payback: bool = False
    is_rewarding: bool = False

    def operand_key(self) -> tuple:
        return (self.kind.value, self.payee, self.value)

    def operand_fields(self) -> list[tuple[str, SymExpr]]:
        return [("payee", self.payee), ("value", self.value)]


@dataclass
class ConstraintAction(Action):
    cond: SymExpr = None  # type: ignore[assignment]
    polarity: bool = True

    def operand_key(self) -> tuple:
        return (self.kind.value, self.cond, self.polarity)

    def operand_fields(self) -> list[tuple[str, SymExpr]]:
        return [("condition", self.cond)]


@dataclass
class ReadAction(Action):
    source_slot: Optional[SymExpr] = None
    source_env: Optional[str] = None
    slot_ref: Optional[SlotRef] = None

    def operand_key(self) -> tuple:
        return (self.kind.value, self.source_slot, self.source_env)

    def operand_fields(self) -> list[tuple[str, SymExpr]]:
        return [("source", self.source_slot)] if self.source_slot is not None else []


@dataclass(frozen=True)
class FieldDiff:
    field: str
    same: bool
    round_one: tuple[Segment, ...]
    round_two: tuple[Segment, ...]


@dataclass(frozen=True)
class LoopRounds:
    loop_id: int
    first_round: tuple[int, ...]   # action indices
    second_round: tuple[int, ...]


@dataclass
class ActionSequence:
    path_id: str
    actions: list[Action]
    loop_rounds: list[LoopRounds] = field(default_factory=list)
    diff_markers: set[int] = field(default_factory=set)
    field_diffs: dict[int, list[FieldDiff]] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)


def parse_operands(event: RawEvent) -> dict:
    """Extract the kind-specific, normalized parameters of an event."""
    if event.kind == "store":
        return {"slot": normalize(event.slot), "content": normalize(event.value)}
    if event.kind == "call_out":
        return {"payee": normalize(event.to), "value": normalize(event.value)}
    if event.kind == "branch":
        return {"cond": normalize(event.cond), "polarity": event.taken}
    raise ValueError(f"event kind {event.kind} carries no operands")


def extract_actions(run: PathRun, path_id: str = "") -> ActionSequence:
    """S1+S2: map the event stream to actions with parsed operands."""
    seq = ActionSequence(path_id=path_id, actions=[])
    for ev in run.events:
        common = dict(pc=ev.pc, block=ev.block, path_pos=ev.path_pos,
                      loop_context=ev.loop_context)
        if ev.kind == "store":
            ops = parse_operands(ev)
            seq.actions.append(WriteAction(ActionKind.WRITE, **common,
                                           slot=ops["slot"], content=ops["content"]))
        elif ev.kind == "call_out":
            ops = parse_operands(ev)
            if ops["value"] == Const(0):
                # zero value distributes nothing; keep as diagnostic only
                seq.diagnostics.append(
                    f"pc {ev.pc}: zero-value call to {pretty(ops['payee'])} not a payment")
                continue
            seq.actions.append(PaymentAction(ActionKind.PAYMENT, **common,
                                             payee=ops["payee"], value=ops["value"]))
        elif ev.kind == "branch":
            ops = parse_operands(ev)
            seq.actions.append(ConstraintAction(ActionKind.CONSTRAINT, **common,
                                                cond=ops["cond"], polarity=ops["polarity"]))
        elif ev.kind == "load":
            seq.actions.append(ReadAction(ActionKind.READ, **common,
                                          source_slot=normalize(ev.slot)))
        elif ev.kind == "env_read":
            seq.actions.append(ReadAction(ActionKind.READ, **common, source_env=ev.tag))
    _assign_loop_rounds(seq, run)
    return seq


def _assign_loop_rounds(seq: ActionSequence, run: PathRun) -> None:
    by_loop: dict[int, tuple[list[int], list[int]]] = {}
    for idx, action in enumerate(seq.actions):
        if action.loop_context is None:
            continue
        loop_id, rnd = action.loop_context
        rounds = by_loop.setdefault(loop_id, ([], []))
        rounds[rnd - 1].append(idx)
    for loop_id in sorted(by_loop):
        r1, r2 = by_loop[loop_id]
        seq.loop_rounds.append(LoopRounds(loop_id, tuple(r1), tuple(r2)))


def link_storage(seq: ActionSequence) -> ActionSequence:
    """S3: attach slot families to writes, reads, and payment parameters."""
    for action in seq.actions:
        if isinstance(action, WriteAction):
            action.slot_ref = _classified(seq, action.slot)
        elif isinstance(action, ReadAction) and action.source_slot is not None:
            action.slot_ref = _classified(seq, action.source_slot)
        elif isinstance(action, PaymentAction):
            payee_load = _first_sload(action.payee)
            if payee_load is not None:
                action.payee_slot = _classified(seq, payee_load.slot)
            value_load = _first_sload(action.value)
            if value_load is not None:
                action.value_slot = _classified(seq, value_load.slot)
    return seq


def _classified(seq: ActionSequence, slot: SymExpr) -> SlotRef:
    ref = classify_slot(slot)
    if ref.structure is Structure.AMBIGUOUS:
        seq.diagnostics.append(f"ambiguous slot shape: {pretty(slot)}")
    return ref


def _first_sload(expr: SymExpr) -> Optional[SLoad]:
    from .symex.expr import walk

    # data flow only: the selector of an aliasing-guard conditional mentions
    # slot computations that are not where this value was collected from
    for node in walk(expr, into_ite_conds=False):
        if isinstance(node, SLoad):
            return node
    return None


def translate_semantics(sequences: list[ActionSequence]) -> dict[str, SlotRef]:
    """S4 over the whole contract: apply tags and build the investor-slot
    registry.  Runs after every path has been linked, because rewarding in a
    payout path usually reads slots written by a different investing path."""
    registry: dict[str, SlotRef] = {}
    for seq in sequences:
        for action in seq.actions:
            if not isinstance(action, WriteAction):
                continue
            if contains_env(action.content, "CALLER", into_sload_slots=False):
                action.is_investing = True
                registry[action.slot_ref.family] = action.slot_ref
            elif _caller_keyed_deposit(action):
                # withdraw-scheme bookkeeping: a caller-keyed mapping fed from
                # the incoming amount registers the slot for rewarding
                # detection, without counting as an investing path feature
                registry[action.slot_ref.family] = action.slot_ref
            if _is_update(action):
                action.is_update = True
    for seq in sequences:
        for action in seq.actions:
            if isinstance(action, PaymentAction):
                if action.payee == Env("CALLER"):
                    action.is_payback = True
                if action.payee_slot is not None and action.payee_slot.family in registry:
                    action.is_rewarding = True
    return registry


def _caller_keyed_deposit(action: WriteAction) -> bool:
    ref = action.slot_ref
    if ref is None or ref.structure is not Structure.MAPPING:
        return False
    key = ref.base.children[0] if isinstance(ref.base, Hash) and ref.base.children else None
    if key is None or not contains_env(key, "CALLER"):
        return False
    return contains_env(action.content, "CALLVALUE", into_sload_slots=False)


def _is_update(action: WriteAction) -> bool:
    if action.slot_ref is None:
        return False
    family = action.slot_ref.family

    def same_family_load(node: SymExpr) -> bool:
        return isinstance(node, SLoad) and classify_slot(node.slot).family == family

    return contains(action.content, same_family_load)


def diff_loop_rounds(seq: ActionSequence) -> set[int]:
    """Mark second-round actions whose parameters differ from round one and
    record field-level diffs for the comparison popover."""
    seq.diff_markers.clear()
    seq.field_diffs.clear()
    for rounds in seq.loop_rounds:
        if len(rounds.first_round) != len(rounds.second_round):
            seq.diagnostics.append(
                f"loop {rounds.loop_id}: rounds have {len(rounds.first_round)} vs "
                f"{len(rounds.second_round)} actions; shapes do not pair")
            continue
        for i1, i2 in zip(rounds.first_round, rounds.second_round):
            a1, a2 = seq.actions[i1], seq.actions[i2]
            if a1.operand_key() == a2.operand_key():
                continue
            seq.diff_markers.add(i2)
            if a1.kind != a2.kind:
                continue
            diffs: list[FieldDiff] = []
            f1 = dict(a1.operand_fields())
            for name, e2 in a2.operand_fields():
                e1 = f1.get(name)
                if e1 is None:
                    continue
                s1, s2 = diff_segments(e1, e2)
                diffs.append(FieldDiff(name, e1 == e2, tuple(s1), tuple(s2)))
            seq.field_diffs[i2] = diffs
    return seq.diff_markers

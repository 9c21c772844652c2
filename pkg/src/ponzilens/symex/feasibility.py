"""Lightweight path-condition feasibility with a pluggable solver interface.

The built-in check does constant evaluation, syntactic contradiction (the
same condition asserted both ways), and unsigned-interval propagation over
comparisons between an arbitrary subexpression and a constant.  Anything it
cannot decide is Unknown, and Unknown counts as feasible: over-reporting
paths for human inspection beats silently dropping them.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Protocol

from .. import u256
from .expr import BinOp, Const, SymExpr, UnOp, pretty

Condition = tuple[SymExpr, bool]


class Feasibility(str, Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNKNOWN = "unknown"

    @property
    def included(self) -> bool:
        return self is not Feasibility.INFEASIBLE


class FeasibilityChecker(Protocol):
    """Solver plug-in point: receives the whole path condition each time."""

    def check(self, conditions: list[Condition]) -> Feasibility: ...


def strip_iszero(cond: SymExpr, polarity: bool) -> tuple[SymExpr, bool]:
    """Peel boolean negation wrappers, flipping the asserted polarity."""
    while isinstance(cond, UnOp) and cond.op == "iszero":
        cond = cond.child
        polarity = not polarity
    return cond, polarity


@dataclass
class _Interval:
    lo: int = 0
    hi: int = u256.MASK

    def empty(self) -> bool:
        return self.lo > self.hi


class IntervalChecker:
    def check(self, conditions: list[Condition]) -> Feasibility:
        asserted: dict[SymExpr, set[bool]] = {}
        intervals: dict[SymExpr, _Interval] = {}
        precise = True

        for raw_cond, raw_pol in conditions:
            cond, pol = strip_iszero(raw_cond, raw_pol)
            if isinstance(cond, Const):
                if (cond.value != 0) != pol:
                    return Feasibility.INFEASIBLE
                continue
            seen = asserted.setdefault(cond, set())
            seen.add(pol)
            if len(seen) == 2:
                return Feasibility.INFEASIBLE
            if not self._propagate(cond, pol, intervals):
                precise = False
        for iv in intervals.values():
            if iv.empty():
                return Feasibility.INFEASIBLE
        return Feasibility.FEASIBLE if precise and not intervals else Feasibility.UNKNOWN

    def _propagate(self, cond: SymExpr, pol: bool,
                   intervals: dict[SymExpr, _Interval]) -> bool:
        if not isinstance(cond, BinOp) or cond.op not in ("lt", "gt", "eq"):
            return False
        left, right = cond.left, cond.right
        if isinstance(right, Const) and not isinstance(left, Const):
            atom, k, atom_on_left = left, right.value, True
        elif isinstance(left, Const) and not isinstance(right, Const):
            atom, k, atom_on_left = right, left.value, False
        else:
            return False
        iv = intervals.setdefault(atom, _Interval())
        op = cond.op
        if not atom_on_left and op in ("lt", "gt"):
            op = {"lt": "gt", "gt": "lt"}[op]  # k < X  <=>  X > k
        if op == "eq":
            if pol:
                iv.lo, iv.hi = max(iv.lo, k), min(iv.hi, k)
            elif iv.lo == iv.hi == k:
                iv.hi = iv.lo - 1
            return True
        if op == "lt":  # X < k
            if pol:
                iv.hi = min(iv.hi, k - 1)
            else:
                iv.lo = max(iv.lo, k)
        else:  # X > k
            if pol:
                iv.lo = max(iv.lo, k + 1)
            else:
                iv.hi = min(iv.hi, k)
        return True


_DEFAULT = IntervalChecker()


def check_feasible(conditions: Iterable[Condition],
                   checker: FeasibilityChecker | None = None) -> Feasibility:
    return (checker or _DEFAULT).check(list(conditions))


def serialize_conditions(conditions: Iterable[Condition]) -> list[dict]:
    """Wire form handed to external solver plug-ins (and trace dumps)."""
    return [
        {"condition": pretty(cond), "asserted": pol, "tree": _tree(cond)}
        for cond, pol in conditions
    ]


def _tree(expr: SymExpr) -> dict:
    from .expr import Env, Fresh, Hash, Ite, SLoad

    if isinstance(expr, Const):
        return {"kind": "const", "value": str(expr.value)}
    if isinstance(expr, Env):
        return {"kind": "env", "tag": expr.tag, "args": [_tree(a) for a in expr.args]}
    if isinstance(expr, BinOp):
        return {"kind": "binop", "op": expr.op, "left": _tree(expr.left), "right": _tree(expr.right)}
    if isinstance(expr, UnOp):
        return {"kind": "unop", "op": expr.op, "child": _tree(expr.child)}
    if isinstance(expr, Hash):
        return {"kind": "hash", "children": [_tree(c) for c in expr.children]}
    if isinstance(expr, SLoad):
        return {"kind": "sload", "slot": _tree(expr.slot), "generation": expr.generation}
    if isinstance(expr, Ite):
        return {"kind": "ite", "cond": _tree(expr.cond), "then": _tree(expr.then),
                "else": _tree(expr.orelse)}
    if isinstance(expr, Fresh):
        return {"kind": "fresh", "serial": expr.serial}
    raise TypeError(f"not a SymExpr: {expr!r}")

"""Per-path feature vectors, signature grouping, and parallel-sets data."""

from __future__ import annotations

from dataclasses import dataclass, field

from .actions import ActionKind, ActionSequence, PaymentAction, WriteAction
from .cfg import BlockPath

COLUMN_NAMES = ("Investing", "Payment", "Loop", "Rewarding")


class UnknownColumnNameError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    investing: bool
    payment: bool
    has_loop: bool
    rewarding: bool

    def __post_init__(self):
        if self.rewarding and not self.payment:
            raise ValueError("a rewarding action is a payment")

    def get(self, column: str) -> bool:
        return {
            "Investing": self.investing,
            "Payment": self.payment,
            "Loop": self.has_loop,
            "Rewarding": self.rewarding,
        }[column]

    def bits(self, columns: tuple[str, ...] = COLUMN_NAMES) -> str:
        return "".join("1" if self.get(c) else "0" for c in columns)


@dataclass
class PathGroup:
    signature: FeatureVector
    path_ids: list[str]

    @property
    def band_width(self) -> int:
        return len(self.path_ids)

    @property
    def id(self) -> str:
        # canonical column order so the id survives column reordering
        return "g" + self.signature.bits()


@dataclass
class ParallelSetsData:
    columns: tuple[str, ...]
    groups: list[PathGroup]
    column_totals: dict[str, tuple[int, int]] = field(default_factory=dict)  # dark, light
    crossings: int = 0


def tag_features(seq: ActionSequence, path: BlockPath) -> FeatureVector:
    investing = any(isinstance(a, WriteAction) and a.is_investing for a in seq.actions)
    payment = any(a.kind is ActionKind.PAYMENT for a in seq.actions)
    has_loop = bool(path.loop_spans)
    rewarding = any(isinstance(a, PaymentAction) and a.is_rewarding for a in seq.actions)
    return FeatureVector(investing, payment, has_loop, rewarding)


def group_paths(vectors: dict[str, FeatureVector]) -> list[PathGroup]:
    """Exact partition by signature equality (at most 16 signatures exist)."""
    by_sig: dict[FeatureVector, list[str]] = {}
    for path_id in sorted(vectors):
        by_sig.setdefault(vectors[path_id], []).append(path_id)
    groups = [PathGroup(sig, ids) for sig, ids in by_sig.items()]
    assert len(groups) <= 16
    return groups


def order_columns_and_groups(groups: list[PathGroup],
                             column_order: tuple[str, ...] | None = None) -> ParallelSetsData:
    """Arrange columns and groups for the feature-distribution view.

    Columns default to Investing, Payment, Loop, Rewarding — the order a
    manual audit checks them in.  Groups sort by their signature read as a
    4-bit key in column order, feature-present first, so suspicious bands sit
    on top.
    """
    columns = tuple(column_order) if column_order else COLUMN_NAMES
    if sorted(columns) != sorted(COLUMN_NAMES):
        bad = [c for c in columns if c not in COLUMN_NAMES]
        raise UnknownColumnNameError(
            f"unknown column name(s) {bad}; expected a permutation of {list(COLUMN_NAMES)}")

    ordered = sorted(groups, key=lambda g: g.signature.bits(columns), reverse=True)
    data = ParallelSetsData(columns=columns, groups=ordered)
    total = sum(g.band_width for g in ordered)
    for col in columns:
        dark = sum(g.band_width for g in ordered if g.signature.get(col))
        data.column_totals[col] = (dark, total - dark)
    data.crossings = _crossings(ordered, columns)
    return data


def _crossings(groups: list[PathGroup], columns: tuple[str, ...]) -> int:
    """Count band-pair inversions between adjacent columns, where each column
    stacks dark bands (in group order) above light bands."""
    count = 0
    for a, b in zip(columns, columns[1:]):
        order_a = _column_order(groups, a)
        order_b = _column_order(groups, b)
        pos_b = {gid: i for i, gid in enumerate(order_b)}
        for i in range(len(order_a)):
            for j in range(i + 1, len(order_a)):
                if pos_b[order_a[i]] > pos_b[order_a[j]]:
                    count += 1
    return count


def _column_order(groups: list[PathGroup], column: str) -> list[str]:
    dark = [g.id for g in groups if g.signature.get(column)]
    light = [g.id for g in groups if not g.signature.get(column)]
    return dark + light

"""Two-step path merging for the group-level summary view.

Step 1 clusters a group's paths by shared basic-block subsequences without
order conflicts and folds each cluster into one full column sequence that
every member embeds into.  Step 2 splits each merged column into lanes of
members whose action subsequence for that block is structurally identical —
same kinds, same order, same parameters.

A block can occur several times in one path once loops are unrolled, so
columns are keyed by (block id, occurrence index) and occurrences of the
same block never collapse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

ColumnKey = tuple[int, int]  # (block id, occurrence index within path)


def to_column_keys(blocks: Sequence[int]) -> tuple[ColumnKey, ...]:
    seen: dict[int, int] = {}
    keys = []
    for b in blocks:
        occ = seen.get(b, 0)
        seen[b] = occ + 1
        keys.append((b, occ))
    return tuple(keys)


@dataclass
class Cluster:
    members: list[int]                      # indices into the group's path list
    full_sequence: list[ColumnKey]
    member_keys: dict[int, tuple[ColumnKey, ...]] = field(default_factory=dict)


def _compatible(full: Sequence[ColumnKey], candidate: Sequence[ColumnKey]) -> bool:
    shared = set(full) & set(candidate)
    if not shared:
        return True
    order_a = [k for k in full if k in shared]
    order_b = [k for k in candidate if k in shared]
    return order_a == order_b


def _interleave(a: Sequence[ColumnKey], b: Sequence[ColumnKey]) -> list[ColumnKey]:
    """Common supersequence via pairwise interleaving in shared-block order;
    between anchors, pending elements merge lowest block id first."""
    shared = set(a) & set(b)
    out: list[ColumnKey] = []
    ia = ib = 0

    def drain_until(seq: Sequence[ColumnKey], i: int, anchor: ColumnKey | None) -> tuple[list[ColumnKey], int]:
        seg = []
        while i < len(seq) and seq[i] != anchor and seq[i] not in shared:
            seg.append(seq[i])
            i += 1
        return seg, i

    anchors = [k for k in a if k in shared]
    for anchor in anchors + [None]:
        seg_a, ia = drain_until(a, ia, anchor)
        seg_b, ib = drain_until(b, ib, anchor)
        pa = pb = 0
        while pa < len(seg_a) and pb < len(seg_b):
            if seg_a[pa] <= seg_b[pb]:
                out.append(seg_a[pa])
                pa += 1
            else:
                out.append(seg_b[pb])
                pb += 1
        out.extend(seg_a[pa:])
        out.extend(seg_b[pb:])
        if anchor is not None:
            out.append(anchor)
            ia += 1
            ib += 1
    return out


def merge_subsequences(block_sequences: list[Sequence[int]]) -> list[Cluster]:
    """Step 1: first-fit clustering in stable path order.

    A path joins the first cluster whose current full sequence it has no
    order conflict with; the cluster's full sequence then absorbs the path.
    The result is deterministic for a given input order.
    """
    clusters: list[Cluster] = []
    for idx, blocks in enumerate(block_sequences):
        keys = to_column_keys(blocks)
        placed = False
        for cluster in clusters:
            if _compatible(cluster.full_sequence, keys):
                cluster.members.append(idx)
                cluster.full_sequence = _interleave(cluster.full_sequence, keys)
                cluster.member_keys[idx] = keys
                placed = True
                break
        if not placed:
            clusters.append(Cluster(members=[idx], full_sequence=list(keys),
                                    member_keys={idx: keys}))
    return clusters


@dataclass
class Lane:
    members: list[int]
    actions_key: tuple
    representative: list  # the actions of the first member, in block order

    @property
    def width(self) -> int:
        return len(self.members)


@dataclass
class MergedColumn:
    key: ColumnKey
    lanes: list[Lane]


@dataclass
class MergedGroup:
    cluster: Cluster
    columns: list[MergedColumn]
    anchors: dict[int, tuple[int, int]] = field(default_factory=dict)  # member -> first/last column


ActionsFor = Callable[[int, int], Sequence]  # (member index, position in path) -> actions


def separate_actions(cluster: Cluster, actions_for: ActionsFor,
                     key_of: Callable[[object], tuple] = lambda a: a.operand_key()) -> MergedGroup:
    """Step 2: within each merged column, partition members by the structural
    identity of their action subsequence for that block occurrence."""
    columns: list[MergedColumn] = []
    positions = {
        m: {k: i for i, k in enumerate(cluster.member_keys[m])}
        for m in cluster.members
    }
    for key in cluster.full_sequence:
        lanes: list[Lane] = []
        lane_by_key: dict[tuple, Lane] = {}
        for m in cluster.members:
            pos = positions[m].get(key)
            if pos is None:
                continue
            acts = list(actions_for(m, pos))
            akey = tuple(key_of(a) for a in acts)
            lane = lane_by_key.get(akey)
            if lane is None:
                lane = Lane(members=[], actions_key=akey, representative=acts)
                lane_by_key[akey] = lane
                lanes.append(lane)
            lane.members.append(m)
        columns.append(MergedColumn(key=key, lanes=lanes))

    merged = MergedGroup(cluster=cluster, columns=columns)
    col_index = {key: i for i, key in enumerate(cluster.full_sequence)}
    for m in cluster.members:
        keys = cluster.member_keys[m]
        merged.anchors[m] = (col_index[keys[0]], col_index[keys[-1]])
    return merged

"""Assembly and validation of the three-level analysis report.

The report is a versioned JSON document with a feature-distribution level
(parallel sets), a group level (merged lanes with highlight projections),
and a path level (full action sequences, loop round pairing with diffs, and
the storage panel).  Serialization is deterministic: sorted keys, stable
array orders, no floats.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any, Optional

from .actions import (
    ActionSequence,
    ConstraintAction,
    PaymentAction,
    ReadAction,
    SlotRef,
    WriteAction,
)
from .features import ParallelSetsData
from .merge import MergedGroup, merge_subsequences, separate_actions
from .symex.expr import contains_env, pretty
from .symex.machine import PathRun

SCHEMA_VERSION = "1"


class ConsistencyViolation(RuntimeError):
    pass


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def build_report(*, code: bytes, address: Optional[str],
                 parallel: ParallelSetsData,
                 sequences: dict[str, ActionSequence],
                 runs: dict[str, PathRun],
                 registry: dict[str, SlotRef],
                 diagnostics: list[dict],
                 path_counts: dict[str, int]) -> dict:
    report = {
        "schema_version": SCHEMA_VERSION,
        "contract": {
            "address": address,
            "bytecode_sha256": hashlib.sha256(code).hexdigest(),
            "byte_length": len(code),
        },
        "diagnostics": diagnostics,
        "path_counts": path_counts,
        "feature_level": _feature_level(parallel),
        "group_level": [
            _group_level(group, sequences, runs) for group in parallel.groups
        ],
        "path_level": {
            pid: _path_detail(sequences[pid], runs[pid], registry)
            for pid in sorted(sequences)
        },
    }
    violations = validate_report(report)
    if violations:
        raise ConsistencyViolation("; ".join(violations))
    return report


def _feature_level(parallel: ParallelSetsData) -> dict:
    total = sum(g.band_width for g in parallel.groups)
    return {
        "columns": list(parallel.columns),
        "total_paths": total,
        "crossings": parallel.crossings,
        "column_totals": {
            col: {"dark": dark, "light": light}
            for col, (dark, light) in parallel.column_totals.items()
        },
        "groups": [
            {
                "id": g.id,
                "signature": {col: g.signature.get(col) for col in parallel.columns},
                "path_ids": list(g.path_ids),
                "band_width": g.band_width,
                "cells": {
                    col: "dark" if g.signature.get(col) else "light"
                    for col in parallel.columns
                },
            }
            for g in parallel.groups
        ],
    }


def _group_level(group, sequences: dict[str, ActionSequence],
                 runs: dict[str, PathRun]) -> dict:
    member_ids = list(group.path_ids)
    block_seqs = [runs[pid].path.blocks for pid in member_ids]
    clusters = merge_subsequences(block_seqs)
    merged_entries = []
    for ci, cluster in enumerate(clusters):
        merged = separate_actions(
            cluster,
            lambda m, pos: _actions_at(sequences[member_ids[m]], pos),
        )
        merged_entries.append(_merged_dict(f"{group.id}.c{ci}", merged, member_ids,
                                           sequences, runs))
    return {
        "id": group.id,
        "signature": {col: g for col, g in
                      zip(("Investing", "Payment", "Loop", "Rewarding"),
                          (group.signature.investing, group.signature.payment,
                           group.signature.has_loop, group.signature.rewarding))},
        "path_ids": member_ids,
        "merged": merged_entries,
    }


def _actions_at(seq: ActionSequence, path_pos: int) -> list:
    return [a for a in seq.actions if a.path_pos == path_pos]


def _merged_dict(merged_id: str, merged: MergedGroup, member_ids: list[str],
                 sequences: dict[str, ActionSequence],
                 runs: dict[str, PathRun]) -> dict:
    columns = []
    for col in merged.columns:
        lanes = []
        for lane in col.lanes:
            lanes.append({
                "members": [member_ids[m] for m in lane.members],
                "width": lane.width,
                "actions": [_action_summary(a) for a in lane.representative],
            })
        columns.append({
            "block": col.key[0],
            "occurrence": col.key[1],
            "lanes": lanes,
        })
    wrappers, connectors = _highlights(merged, member_ids, sequences, runs)
    return {
        "id": merged_id,
        "member_path_ids": [member_ids[m] for m in merged.cluster.members],
        "full_sequence": [
            {"block": k[0], "occurrence": k[1]} for k in merged.cluster.full_sequence
        ],
        "columns": columns,
        "anchors": {
            member_ids[m]: {"entry": a[0], "exit": a[1]}
            for m, a in sorted(merged.anchors.items())
        },
        "loop_wrappers": wrappers,
        "connectors": connectors,
    }


def _highlights(merged: MergedGroup, member_ids: list[str],
                sequences: dict[str, ActionSequence],
                runs: dict[str, PathRun]) -> tuple[list[dict], list[dict]]:
    col_index = {key: i for i, key in enumerate(merged.cluster.full_sequence)}

    wrappers: list[dict] = []
    seen_spans = set()
    for m in merged.cluster.members:
        path = runs[member_ids[m]].path
        keys = merged.cluster.member_keys[m]
        for span in path.loop_spans:
            first = col_index[keys[span.first_round[0]]]
            last = col_index[keys[span.second_round[1]]]
            mark = (span.loop_id, first, last)
            if mark not in seen_spans:
                seen_spans.add(mark)
                wrappers.append({"loop_id": span.loop_id,
                                 "first_column": first, "last_column": last})
    wrappers.sort(key=lambda w: (w["first_column"], w["last_column"], w["loop_id"]))

    invest_positions: list[tuple[str, dict]] = []
    reward_positions: dict[str, list[dict]] = {}
    for ci, col in enumerate(merged.columns):
        for li, lane in enumerate(col.lanes):
            for ai, action in enumerate(lane.representative):
                pos = {"column": ci, "lane": li, "action": ai}
                if isinstance(action, WriteAction) and action.is_investing:
                    invest_positions.append((action.slot_ref.family, pos))
                if (isinstance(action, PaymentAction) and action.is_rewarding
                        and not (action.loop_context and action.loop_context[1] == 2)):
                    # the second round repeats the first; one connector per pair
                    fam = action.payee_slot.family
                    reward_positions.setdefault(fam, []).append(pos)
    connectors = []
    seen_links = set()
    for family, src in invest_positions:
        for dst in reward_positions.get(family, [])[:1]:
            link = (family, tuple(src.items()), tuple(dst.items()))
            if link not in seen_links:
                seen_links.add(link)
                connectors.append({"family": family, "from": src, "to": dst})
    return wrappers, connectors


def _action_summary(action) -> dict:
    rec: dict[str, Any] = {
        "kind": action.kind.value,
        "pc": action.pc,
        "block": action.block,
    }
    if action.loop_context is not None:
        rec["loop"] = {"id": action.loop_context[0], "round": action.loop_context[1]}
    rec.update(_operands_dict(action))
    rec["marks"] = _marks(action)
    return rec


def _operands_dict(action) -> dict:
    if isinstance(action, WriteAction):
        return {"operands": {
            "slot": pretty(action.slot),
            "content": pretty(action.content),
            "slot_family": action.slot_ref.family if action.slot_ref else None,
        }}
    if isinstance(action, PaymentAction):
        return {"operands": {
            "payee": pretty(action.payee),
            "value": pretty(action.value),
            "payee_family": action.payee_slot.family if action.payee_slot else None,
            "value_family": action.value_slot.family if action.value_slot else None,
        }}
    if isinstance(action, ConstraintAction):
        return {"operands": {
            "condition": pretty(action.cond),
            "asserted": action.polarity,
        }}
    if isinstance(action, ReadAction):
        if action.source_env is not None:
            return {"operands": {"source_kind": "env", "source": action.source_env}}
        return {"operands": {
            "source_kind": "slot",
            "source": pretty(action.source_slot),
            "slot_family": action.slot_ref.family if action.slot_ref else None,
        }}
    return {"operands": {}}


def _marks(action) -> dict:
    return {
        "investing": isinstance(action, WriteAction) and action.is_investing,
        "update": isinstance(action, WriteAction) and action.is_update,
        "payment": isinstance(action, PaymentAction),
        "payback": isinstance(action, PaymentAction) and action.is_payback,
        "rewarding": isinstance(action, PaymentAction) and action.is_rewarding,
    }


def _path_detail(seq: ActionSequence, run: PathRun,
                 registry: dict[str, SlotRef]) -> dict:
    actions = []
    for idx, action in enumerate(seq.actions):
        rec = _action_summary(action)
        rec["index"] = idx
        actions.append(rec)

    loops = []
    for rounds in seq.loop_rounds:
        markers = sorted(i for i in seq.diff_markers
                         if i in rounds.second_round)
        diffs = {}
        for i in markers:
            if i in seq.field_diffs:
                diffs[str(i)] = [
                    {
                        "field": d.field,
                        "same": d.same,
                        "round_one": [{"text": s.text, "same": s.same} for s in d.round_one],
                        "round_two": [{"text": s.text, "same": s.same} for s in d.round_two],
                    }
                    for d in seq.field_diffs[i]
                ]
        loops.append({
            "loop_id": rounds.loop_id,
            "round_one": list(rounds.first_round),
            "round_two": list(rounds.second_round),
            "diff_markers": markers,
            "diffs": diffs,
        })

    return {
        "blocks": list(run.path.blocks),
        "path_condition": [
            {"condition": pretty(cond), "asserted": pol}
            for cond, pol in run.state.path_condition
        ],
        "actions": actions,
        "loops": loops,
        "storage": _storage_panel(seq, registry),
    }


def _storage_panel(seq: ActionSequence, registry: dict[str, SlotRef]) -> list[dict]:
    """Slot families this path touches: structure glyph, stored contents,
    write links (colored by whether the content carries investor identity or
    incoming value), and payment parameter provenance links."""
    families: dict[str, dict] = {}

    def family_entry(ref: SlotRef) -> dict:
        entry = families.get(ref.family)
        if entry is None:
            entry = {
                "family": ref.family,
                "structure": ref.structure.value,
                "investor_slot": ref.family in registry,
                "contents": [],
                "writes": [],
                "reads": [],
                "payment_links": [],
            }
            families[ref.family] = entry
        return entry

    for idx, action in enumerate(seq.actions):
        if isinstance(action, WriteAction) and action.slot_ref is not None:
            entry = family_entry(action.slot_ref)
            related = (contains_env(action.content, "CALLER")
                       or contains_env(action.content, "CALLVALUE"))
            content = {
                "text": pretty(action.content),
                "has_caller": contains_env(action.content, "CALLER"),
                "has_callvalue": contains_env(action.content, "CALLVALUE"),
            }
            if content not in entry["contents"]:
                entry["contents"].append(content)
            entry["writes"].append({"action": idx, "ponzi_related": related})
        elif isinstance(action, ReadAction) and action.slot_ref is not None:
            family_entry(action.slot_ref)["reads"].append({"action": idx})
        elif isinstance(action, PaymentAction):
            if action.payee_slot is not None:
                family_entry(action.payee_slot)["payment_links"].append(
                    {"action": idx, "parameter": "payee", "style": "solid"})
            if action.value_slot is not None:
                family_entry(action.value_slot)["payment_links"].append(
                    {"action": idx, "parameter": "value", "style": "dashed"})
    return [families[f] for f in sorted(families)]


# --- validation -------------------------------------------------------------------


def validate_report(doc: dict) -> list[str]:
    """Structural invariants plus schema conformance; returns violations."""
    violations: list[str] = []
    if not isinstance(doc, dict):
        return ["report is not a JSON object"]
    if doc.get("schema_version") != SCHEMA_VERSION:
        violations.append(
            f"unknown schema_version {doc.get('schema_version')!r}; expected {SCHEMA_VERSION!r}")
        return violations

    violations.extend(_schema_violations(doc))
    if violations:
        return violations

    path_ids = set(doc["path_level"].keys())
    feature_ids: set[str] = set()
    for group in doc["feature_level"]["groups"]:
        feature_ids.update(group["path_ids"])
    group_ids: set[str] = set()
    for group in doc["group_level"]:
        group_ids.update(group["path_ids"])
        for merged in group["merged"]:
            for pid in merged["member_path_ids"]:
                if pid not in group["path_ids"]:
                    violations.append(f"merged view references {pid} outside its group")
    for pid in feature_ids | group_ids:
        if pid not in path_ids:
            violations.append(f"path id {pid} referenced but missing from path_level")
    for pid in path_ids:
        if pid not in feature_ids:
            violations.append(f"path id {pid} not referenced by any feature group")
        if pid not in group_ids:
            violations.append(f"path id {pid} not referenced by any merged group")

    total = doc["feature_level"]["total_paths"]
    if total != len(path_ids):
        violations.append(f"total_paths {total} != number of paths {len(path_ids)}")
    for col, counts in doc["feature_level"]["column_totals"].items():
        if counts["dark"] + counts["light"] != total:
            violations.append(f"column {col}: dark+light != total paths")
    if sum(g["band_width"] for g in doc["feature_level"]["groups"]) != total:
        violations.append("band widths do not sum to total paths")

    for pid, detail in doc["path_level"].items():
        known = {entry["family"] for entry in detail["storage"]}
        for action in detail["actions"]:
            ops = action.get("operands", {})
            for key in ("slot_family", "payee_family", "value_family"):
                fam = ops.get(key)
                if fam is not None and fam not in known:
                    violations.append(
                        f"path {pid}: action references family {fam} missing from storage panel")
    for group in doc["group_level"]:
        for merged in group["merged"]:
            member_set = set(merged["member_path_ids"])
            for col in merged["columns"]:
                lane_members: list[str] = []
                for lane in col["lanes"]:
                    lane_members.extend(lane["members"])
                    if lane["width"] != len(lane["members"]):
                        violations.append(f"{merged['id']}: lane width mismatch")
                if len(lane_members) != len(set(lane_members)):
                    violations.append(f"{merged['id']}: a path appears in two lanes of one column")
                if not set(lane_members) <= member_set:
                    violations.append(f"{merged['id']}: lane member outside cluster")
            for conn in merged["connectors"]:
                fams = set()
                for pid in merged["member_path_ids"]:
                    for entry in doc["path_level"][pid]["storage"]:
                        fams.add(entry["family"])
                if conn["family"] not in fams:
                    violations.append(
                        f"{merged['id']}: connector family {conn['family']} not in member storage")
    return violations


_SCHEMA_CACHE: dict | None = None


def load_schema() -> dict:
    global _SCHEMA_CACHE
    if _SCHEMA_CACHE is None:
        from importlib import resources

        with resources.files("ponzilens").joinpath("schema/analysis-report-v1.json").open() as fh:
            _SCHEMA_CACHE = json.load(fh)
    return _SCHEMA_CACHE


def _schema_violations(doc: dict) -> list[str]:
    import jsonschema

    validator = jsonschema.Draft202012Validator(load_schema())
    return [
        f"schema: {err.json_path}: {err.message}"
        for err in sorted(validator.iter_errors(doc), key=lambda e: str(e.json_path))
    ][:20]

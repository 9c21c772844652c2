"""End-to-end analysis driver with a content-addressed report cache.

The driver iterates CFG construction and symbolic execution to a fixpoint:
paths that end at a jump the constant-propagation pass could not resolve are
still executed, and any concrete targets the machine derives are merged back
as edges before the next round of enumeration and grouping.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from .actions import (
    ActionSequence,
    diff_loop_rounds,
    extract_actions,
    link_storage,
    translate_semantics,
)
from .bytecode import Bytecode, disassemble
from .cfg import (
    Cfg,
    Edge,
    NoEntryBlockError,
    PathLimits,
    enumerate_paths,
    find_loops,
    resolve_cfg,
    split_blocks,
    to_dot,
)
from .features import group_paths, order_columns_and_groups, tag_features
from .report import build_report, canonical_json
from .symex.feasibility import FeasibilityChecker, serialize_conditions
from .symex.machine import PathRun, run_path

log = logging.getLogger("ponzilens")

_MAX_CFG_ROUNDS = 8

CACHE_ENV = "PONZILENS_CACHE_DIR"


@dataclass
class AnalysisResult:
    report: dict
    serialized: str
    cfg: Cfg | None = None
    runs: list[PathRun] = field(default_factory=list)
    from_cache: bool = False


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "ponzilens"))


def analyze_bytes(code: bytes, limits: PathLimits | None = None, *,
                  address: str | None = None,
                  checker: FeasibilityChecker | None = None) -> AnalysisResult:
    """Run the full pipeline on raw bytecode and assemble the report."""
    limits = limits or PathLimits()
    diagnostics: list[dict] = []

    def diag(stage: str, message: str) -> None:
        diagnostics.append({"stage": stage, "message": message})

    instrs = disassemble(code)
    blocks = split_blocks(instrs)
    log.info("disassembled %d instructions into %d blocks", len(instrs), len(blocks))

    if not blocks:
        diag("cfg", "no entry block: program is empty")
        report = build_report(code=code, address=address,
                              parallel=order_columns_and_groups([]),
                              sequences={}, runs={}, registry={},
                              diagnostics=diagnostics,
                              path_counts={"enumerated": 0, "included": 0,
                                           "excluded_infeasible": 0, "excluded_failed": 0})
        return AnalysisResult(report=report, serialized=canonical_json(report))

    extra_edges: list[Edge] = []
    cfg = None
    runs: list[PathRun] = []
    enumerated = 0
    for round_no in range(_MAX_CFG_ROUNDS):
        cfg = resolve_cfg(blocks, instrs, extra_edges=extra_edges)
        find_loops(cfg)
        path_set = enumerate_paths(cfg, limits)
        enumerated = len(path_set.paths)
        log.info("round %d: %d blocks, %d edges, %d paths",
                 round_no, len(cfg.blocks), len(cfg.edges), enumerated)
        runs = [run_path(p, instrs, cfg, checker) for p in path_set.paths]
        discovered: list[Edge] = []
        seen = {(e.src, e.dst, e.kind) for e in cfg.edges} | {
            (e.src, e.dst, e.kind) for e in extra_edges}
        for run in runs:
            for e in run.discovered_edges:
                key = (e.src, e.dst, e.kind)
                if key not in seen:
                    seen.add(key)
                    discovered.append(e)
        if not discovered:
            for msg in cfg.diagnostics:
                diag("cfg", msg)
            for msg in path_set.diagnostics:
                diag("paths", msg)
            break
        diag("cfg", f"merged {len(discovered)} execution-discovered edge(s); re-deriving paths")
        extra_edges.extend(discovered)
    assert cfg is not None

    included: dict[str, PathRun] = {}
    excluded_infeasible = 0
    excluded_failed = 0
    ordered = sorted((r for r in runs), key=lambda r: r.path.blocks)
    for run in ordered:
        for msg in run.diagnostics:
            diag("symex", msg)
        if run.included:
            included[f"p{len(included):03d}"] = run
        elif not run.feasible:
            excluded_infeasible += 1
        else:
            excluded_failed += 1

    sequences: dict[str, ActionSequence] = {}
    for pid, run in included.items():
        seq = extract_actions(run, path_id=pid)
        link_storage(seq)
        sequences[pid] = seq
    registry = translate_semantics(list(sequences.values()))
    for pid, seq in sequences.items():
        diff_loop_rounds(seq)
        for msg in seq.diagnostics:
            diag("actions", f"{pid}: {msg}")

    vectors = {pid: tag_features(seq, included[pid].path) for pid, seq in sequences.items()}
    groups = group_paths(vectors)
    parallel = order_columns_and_groups(groups)

    report = build_report(
        code=code,
        address=address,
        parallel=parallel,
        sequences=sequences,
        runs=included,
        registry=registry,
        diagnostics=diagnostics,
        path_counts={
            "enumerated": enumerated,
            "included": len(included),
            "excluded_infeasible": excluded_infeasible,
            "excluded_failed": excluded_failed,
        },
    )
    return AnalysisResult(report=report, serialized=canonical_json(report),
                          cfg=cfg, runs=runs)


def analyze(code: Bytecode | bytes, limits: PathLimits | None = None, *,
            address: str | None = None, cache_dir: Path | None = None,
            use_cache: bool = True) -> AnalysisResult:
    """Cached entry point: identical bytecode + limits returns byte-identical
    reports, served from a content-addressed disk cache when available."""
    data = code.data if isinstance(code, Bytecode) else code
    limits = limits or PathLimits()
    cache_dir = cache_dir or default_cache_dir()
    key = hashlib.sha256(
        data + f"|{limits.max_paths}|{limits.max_blocks_per_path}|{address}".encode()
    ).hexdigest()
    cache_file = cache_dir / "reports" / f"{key}.json"
    if use_cache and cache_file.exists():
        serialized = cache_file.read_text()
        return AnalysisResult(report=json.loads(serialized), serialized=serialized,
                              from_cache=True)
    result = analyze_bytes(data, limits, address=address)
    if use_cache:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        tmp = cache_file.with_suffix(".tmp")
        tmp.write_text(result.serialized)
        tmp.replace(cache_file)
    return result


def reorder_columns(report: dict, columns: list[str]) -> dict:
    """Recompute feature-level ordering only; membership and widths stay."""
    from .features import COLUMN_NAMES, FeatureVector, PathGroup

    groups = []
    for g in report["feature_level"]["groups"]:
        sig = g["signature"]
        vector = FeatureVector(sig["Investing"], sig["Payment"], sig["Loop"], sig["Rewarding"])
        groups.append(PathGroup(vector, list(g["path_ids"])))
    parallel = order_columns_and_groups(groups, tuple(columns))
    from .report import _feature_level

    return _feature_level(parallel)


def dump_trace(result: AnalysisResult, path_id: str) -> dict:
    """RawEvent list of one enumerated path as JSON (``--dump-trace``)."""
    from .symex.expr import pretty

    ordered = sorted(result.runs, key=lambda r: r.path.blocks)
    try:
        idx = int(path_id.lstrip("p") or "0")
    except ValueError:
        raise ValueError(f"bad path id {path_id!r}")
    if idx >= len(ordered):
        raise ValueError(f"path {path_id!r} not found ({len(ordered)} paths enumerated)")
    run = ordered[idx]
    events = []
    for ev in run.events:
        rec = {"kind": ev.kind, "pc": ev.pc, "block": ev.block}
        if ev.loop_context:
            rec["loop"] = {"id": ev.loop_context[0], "round": ev.loop_context[1]}
        for name in ("slot", "value", "gas", "to", "cond"):
            expr = getattr(ev, name)
            if expr is not None:
                rec[name] = pretty(expr)
        if ev.taken is not None:
            rec["taken"] = ev.taken
        if ev.tag is not None:
            rec["tag"] = ev.tag
        events.append(rec)
    return {
        "path": list(run.path.blocks),
        "feasible": run.feasible,
        "ended": run.ended,
        "events": events,
        "path_condition": serialize_conditions(run.state.path_condition),
    }


def emit_cfg_dot(code: bytes) -> str:
    instrs = disassemble(code)
    blocks = split_blocks(instrs)
    if not blocks:
        raise NoEntryBlockError("empty program has no CFG")
    cfg = resolve_cfg(blocks, instrs)
    find_loops(cfg)
    return to_dot(cfg, instrs)

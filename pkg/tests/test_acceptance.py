"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Everything here runs at desk scale; the whole module finishes in well under
a minute on a laptop.
"""

from __future__ import annotations

import random

import pytest

from evm_oracle import OracleEnv, block_trace, run as oracle_run
from progs import random_straightline
from ponzilens.bytecode import disassemble, reassemble
from ponzilens.cfg import enumerate_paths, find_loops, resolve_cfg, split_blocks
from ponzilens.fixtures import (
    DIAMOND,
    FIXTURE_CHAIN,
    FIXTURE_WALLET,
    FIXTURE_WITHDRAW,
    PAYBACK_HEX,
    STORE_SEQ_HEX,
    assemble,
)
from ponzilens.merge import merge_subsequences, separate_actions
from ponzilens.pipeline import analyze_bytes
from ponzilens.report import validate_report
from ponzilens.symex import run_path
from ponzilens.symex.expr import ConcreteEnv, evaluate
from test_merge import FakeAction, _is_subsequence, _mk_actions, _random_group

ALL_FIXTURES = {
    "chain": FIXTURE_CHAIN,
    "withdraw": FIXTURE_WITHDRAW,
    "wallet": FIXTURE_WALLET,
    "store": bytes.fromhex(STORE_SEQ_HEX),
    "payback": bytes.fromhex(PAYBACK_HEX),
    "diamond": DIAMOND,
}


def _verdict(name: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def _build(code: bytes):
    instrs = disassemble(code)
    blocks = split_blocks(instrs)
    cfg = resolve_cfg(blocks, instrs)
    find_loops(cfg)
    return cfg, instrs


def test_disassembler_round_trip():
    rng = random.Random(0xACCE55)
    failures = 0
    for _ in range(10_000):
        data = bytes(rng.getrandbits(8) for _ in range(rng.randint(0, 64)))
        if reassemble(disassemble(data)) != data:
            failures += 1
    _verdict("disassembler round-trip on 10,000 random byte strings",
             failures == 0, f"{failures} failures")


def test_oracle_equivalence():
    rng = random.Random(0x0AC1E)
    mismatches = 0
    checked_events = 0

    def compare(code: bytes, run, env: OracleEnv) -> None:
        nonlocal mismatches, checked_events
        cenv = ConcreteEnv(caller=env.caller, callvalue=env.callvalue,
                           address=env.address, timestamp=env.timestamp,
                           number=env.number, gas=env.gas, calldata=env.calldata,
                           balances=env.balances, default_balance=env.default_balance,
                           storage0=dict(env.storage))
        trace = oracle_run(code, env)
        stores = [e for e in run.events if e.kind == "store"]
        calls = [e for e in run.events if e.kind == "call_out"]
        if len(stores) != len(trace.stores) or len(calls) != len(trace.calls):
            mismatches += 1
            return
        for ev, (slot, value) in zip(stores, trace.stores):
            checked_events += 1
            if evaluate(ev.slot, cenv) != slot or evaluate(ev.value, cenv) != value:
                mismatches += 1
        for ev, (gas, to, value) in zip(calls, trace.calls):
            checked_events += 1
            if (evaluate(ev.gas, cenv), evaluate(ev.to, cenv),
                    evaluate(ev.value, cenv)) != (gas, to, value):
                mismatches += 1

    # fixtures: each included path under an input satisfying its condition
    grid = []
    for cv in (0, 1, 700, 1001, 40_000):
        for storage in ({}, {1: 1}, {1: (1 << 256) - 1}, {0: 5000, 1: 1, 2: 77}):
            grid.append(OracleEnv(caller=rng.getrandbits(160), callvalue=cv,
                                  gas=rng.getrandbits(20) + 1, storage=dict(storage)))
    for code in ALL_FIXTURES.values():
        cfg, instrs = _build(code)
        for path in enumerate_paths(cfg).paths:
            run = run_path(path, instrs, cfg)
            if not run.included:
                continue
            def sat(env):
                cenv = ConcreteEnv(caller=env.caller, callvalue=env.callvalue,
                                   address=env.address, timestamp=env.timestamp,
                                   number=env.number, gas=env.gas,
                                   storage0=dict(env.storage))
                try:
                    return all((evaluate(c, cenv) != 0) == p
                               for c, p in run.state.path_condition)
                except Exception:
                    return False
            env = next((e for e in grid if sat(e)), None)
            if env is None:
                mismatches += 1
                continue
            compare(code, run, env)

    # 1,000 randomized straight-line programs
    for _ in range(1_000):
        code = assemble(random_straightline(rng))
        cfg, instrs = _build(code)
        paths = enumerate_paths(cfg).paths
        run = run_path(paths[0], instrs, cfg)
        if not run.included:
            mismatches += 1
            continue
        env = OracleEnv(caller=rng.getrandbits(160),
                        callvalue=rng.getrandbits(64),
                        address=rng.getrandbits(160),
                        timestamp=rng.getrandbits(32),
                        number=rng.getrandbits(24),
                        gas=rng.getrandbits(24) + 1,
                        calldata=bytes(rng.getrandbits(8) for _ in range(36)),
                        default_balance=rng.getrandbits(40),
                        storage={s: rng.getrandbits(64) for s in range(5)})
        compare(code, run, env)

    _verdict("oracle equivalence (fixtures + 1,000 random programs, exact 256-bit)",
             mismatches == 0,
             f"{mismatches} mismatches over {checked_events} store/call events")


def test_cfg_containment():
    rng = random.Random(0xC047A1)
    violations = 0
    for name, code in ALL_FIXTURES.items():
        cfg, _ = _build(code)
        edges = {(e.src, e.dst) for e in cfg.edges}
        starts = {b.start_offset: b.id for b in cfg.blocks}
        for _ in range(10):
            env = OracleEnv(caller=rng.getrandbits(160),
                            callvalue=rng.choice([0, 1, 999, 1001, rng.getrandbits(48)]),
                            gas=rng.getrandbits(20) + 1,
                            storage={0: rng.randint(0, 9999), 1: rng.randint(0, 3)})
            trace = oracle_run(code, env)
            blocks = block_trace(trace, starts)
            if trace.status.startswith("error") or not blocks or blocks[0] != cfg.entry:
                violations += 1
                continue
            violations += sum(1 for a, b in zip(blocks, blocks[1:]) if (a, b) not in edges)
    _verdict("CFG containment (10 random concrete runs per fixture)",
             violations == 0, f"{violations} violations")


def test_loop_bounding():
    violations = 0
    total = 0
    for code in ALL_FIXTURES.values():
        cfg, _ = _build(code)
        back = {(lp.back_edge.src, lp.back_edge.dst) for lp in cfg.loops}
        for p in enumerate_paths(cfg).paths:
            total += 1
            for edge in back:
                count = sum(1 for i in range(len(p.blocks) - 1)
                            if (p.blocks[i], p.blocks[i + 1]) == edge)
                if count not in (0, 2):
                    violations += 1
    _verdict("loop bounding: every back-edge count in {0, 2}",
             violations == 0, f"{violations} violations over {total} paths")


def test_case_one_reproduction():
    rep = analyze_bytes(FIXTURE_CHAIN).report
    groups = rep["feature_level"]["groups"]
    all_true = [g for g in groups if all(g["signature"].values())]
    ok = len(all_true) == 1
    detail = [f"all-true groups: {len(all_true)}"]
    if ok:
        gid = all_true[0]["id"]
        group = next(g for g in rep["group_level"] if g["id"] == gid)
        merged = group["merged"][0]
        payment_cols = [
            ci for ci, col in enumerate(merged["columns"])
            if any(a["kind"] == "invoke_payment"
                   for lane in col["lanes"] for a in lane["actions"])
        ]
        wrapped = any(w["first_column"] <= ci <= w["last_column"]
                      for w in merged["loop_wrappers"] for ci in payment_cols)
        ok &= wrapped
        detail.append(f"loop wrapper encloses a payment: {wrapped}")

        conns = merged["connectors"]
        one_conn = len(conns) == 1
        ok &= one_conn
        detail.append(f"rewarding connectors: {len(conns)}")
        if conns:
            pid = all_true[0]["path_ids"][0]
            fam = next(s for s in rep["path_level"][pid]["storage"]
                       if s["family"] == conns[0]["family"])
            ok &= fam["structure"] == "array"
            detail.append(f"connector family structure: {fam['structure']}")

        pid = all_true[0]["path_ids"][0]
        loops = rep["path_level"][pid]["loops"]
        marked_payment = any(
            rep["path_level"][pid]["actions"][i]["kind"] == "invoke_payment"
            for lp in loops for i in lp["diff_markers"]
        )
        ok &= marked_payment
        detail.append(f"second-round payment diff-marked: {marked_payment}")
    _verdict("case-1 reproduction (chain fixture)", ok, "; ".join(detail))


def test_case_two_reproduction():
    rep = analyze_bytes(FIXTURE_WITHDRAW).report
    checks: dict[str, bool] = {}

    groups = rep["feature_level"]["groups"]
    checks["no group with >=2 features"] = all(
        sum(g["signature"].values()) < 2 for g in groups)

    payment_groups = [g for g in groups if g["signature"]["Payment"]]
    checks["single payment group"] = len(payment_groups) == 1

    lanes_ok = False
    if payment_groups:
        gid = payment_groups[0]["id"]
        group = next(g for g in rep["group_level"] if g["id"] == gid)
        for merged in group["merged"]:
            for col in merged["columns"]:
                constraint_lanes = []
                for lane in col["lanes"]:
                    for a in lane["actions"]:
                        if (a["kind"] == "check_constraint"
                                and a["operands"]["condition"] == "CALLVALUE > 1000"):
                            constraint_lanes.append(a["operands"]["asserted"])
                if sorted(constraint_lanes) == [False, True]:
                    lanes_ok = True
    checks["two constraint lanes, polarities {true, false} on CALLVALUE > 1000"] = lanes_ok

    details = rep["path_level"].values()
    checks["one payment has value CALLVALUE / 10"] = any(
        a["kind"] == "invoke_payment" and a["operands"]["value"] == "CALLVALUE / 10"
        for det in details for a in det["actions"])

    checks["credit write is Update containing CALLVALUE / 400"] = any(
        a["kind"] == "write_information" and a["marks"]["update"]
        and "CALLVALUE / 400" in a["operands"]["content"]
        for det in rep["path_level"].values() for a in det["actions"])

    payback_ok = False
    for det in rep["path_level"].values():
        for a in det["actions"]:
            if a["kind"] != "invoke_payment" or not a["marks"]["payback"]:
                continue
            fam_name = a["operands"]["value_family"]
            fam = next((s for s in det["storage"] if s["family"] == fam_name), None)
            if fam and fam["structure"] == "mapping" and any(
                    l["style"] == "dashed" and l["action"] == a["index"]
                    for l in fam["payment_links"]):
                payback_ok = True
    checks["withdraw payment is Payback with dashed link to a Mapping family"] = payback_ok

    for name, ok in checks.items():
        print(f"    [{'ok' if ok else 'FAIL'}] {name}")
    _verdict("case-2 reproduction (withdraw fixture)", all(checks.values()))


def test_merge_properties():
    rng = random.Random(0x4E46)
    violations = 0
    for _ in range(500):
        seqs, actions = _random_group(rng)
        clusters = merge_subsequences(seqs)
        # coverage across clusters
        seen = sorted(m for c in clusters for m in c.members)
        if seen != list(range(len(seqs))):
            violations += 1
        for cluster in clusters:
            # subsequence property
            for m in cluster.members:
                if not _is_subsequence(cluster.member_keys[m], cluster.full_sequence):
                    violations += 1
            merged = separate_actions(
                cluster,
                _mk_actions({k: [FakeAction(p).payload for p in v]
                             for k, v in actions.items()}))
            positions = {m: set(cluster.member_keys[m]) for m in cluster.members}
            for col in merged.columns:
                lane_members = sorted(m for lane in col.lanes for m in lane.members)
                traversing = sorted(m for m in cluster.members if col.key in positions[m])
                if lane_members != traversing:
                    violations += 1
        # idempotence on singletons
        single = merge_subsequences([seqs[0]])
        if len(single) != 1 or list(single[0].member_keys[0]) != single[0].full_sequence:
            violations += 1
        # determinism
        if [(c.members, c.full_sequence) for c in merge_subsequences(seqs)] != \
                [(c.members, c.full_sequence) for c in clusters]:
            violations += 1
    _verdict("merge properties on 500 randomized groups", violations == 0,
             f"{violations} violations")


def test_report_self_consistency():
    rng = random.Random(0x5E1F)
    bad = 0
    total = 0
    for code in ALL_FIXTURES.values():
        total += 1
        rep = analyze_bytes(code)
        if validate_report(rep.report) != []:
            bad += 1
        if analyze_bytes(code).serialized != rep.serialized:
            bad += 1
    for _ in range(40):  # randomized inputs through the whole pipeline
        total += 1
        data = bytes(rng.getrandbits(8) for _ in range(rng.randint(0, 200)))
        rep = analyze_bytes(data)
        if validate_report(rep.report) != []:
            bad += 1
        if analyze_bytes(data).serialized != rep.serialized:
            bad += 1
    _verdict("report self-consistency + byte determinism", bad == 0,
             f"{bad} failures over {total} inputs")


def test_grouping_arithmetic():
    rng = random.Random(0x6A17)
    bad = 0
    inputs = list(ALL_FIXTURES.values())
    inputs += [bytes(rng.getrandbits(8) for _ in range(rng.randint(1, 120)))
               for _ in range(20)]
    for code in inputs:
        rep = analyze_bytes(code).report
        total = rep["feature_level"]["total_paths"]
        for col, counts in rep["feature_level"]["column_totals"].items():
            if counts["dark"] + counts["light"] != total:
                bad += 1
    _verdict("grouping arithmetic: dark+light = total paths per column",
             bad == 0, f"{bad} violations")

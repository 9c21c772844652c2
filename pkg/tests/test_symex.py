import pytest
from hypothesis import given, strategies as st

from ponzilens.bytecode import Instruction, disassemble, parse_hex
from ponzilens.cfg import enumerate_paths, find_loops, resolve_cfg, split_blocks
from ponzilens.fixtures import FIXTURE_WITHDRAW, PAYBACK_HEX, STORE_SEQ_HEX
from ponzilens.symex import (
    BinOp,
    Const,
    Env,
    Feasibility,
    MachineState,
    binop,
    check_feasible,
    diff_segments,
    env,
    normalize,
    pretty,
    run_path,
    step,
    unop,
)
from ponzilens.symex.expr import ConcreteEnv, Hash, Ite, SLoad, UnOp, evaluate, hash_of, ite
from ponzilens.symex.feasibility import IntervalChecker, serialize_conditions
from ponzilens.symex.machine import StackUnderflow


def _run_single(code_hex: str):
    instrs = disassemble(parse_hex(code_hex))
    blocks = split_blocks(instrs)
    cfg = resolve_cfg(blocks, instrs)
    find_loops(cfg)
    paths = enumerate_paths(cfg).paths
    return [run_path(p, instrs, cfg) for p in paths], cfg, instrs


# --- step ------------------------------------------------------------------


def test_step_add_symbolic():
    state = MachineState(stack=[Const(1), env("CALLVALUE")])
    step(state, Instruction(0, 0x01, "ADD", 1))
    assert state.stack == [BinOp("add", Env("CALLVALUE"), Const(1))]
    assert pretty(state.stack[0]) == "CALLVALUE + 1"


def test_step_add_constant_folds():
    state = MachineState(stack=[Const(3), Const(2)])
    step(state, Instruction(0, 0x01, "ADD", 1))
    assert state.stack == [Const(5)]


def test_step_pop_underflow():
    state = MachineState()
    with pytest.raises(StackUnderflow):
        step(state, Instruction(0, 0x50, "POP", 1))


def test_step_records_store_event():
    state = MachineState(stack=[Const(3), Const(0)])
    step(state, Instruction(0, 0x55, "SSTORE", 1))
    assert state.storage_generation == 1
    ev = state.events[0]
    assert (ev.kind, ev.slot, ev.value) == ("store", Const(0), Const(3))


def test_step_sha3_resolves_memory_words():
    state = MachineState()
    for ins in disassemble(parse_hex("6001600052602060002000")):
        if ins.mnemonic == "STOP":
            break
        step(state, ins)
    assert state.stack == [hash_of([Const(1)])]


# --- run_path ---------------------------------------------------------------


def test_run_path_straight_line_store():
    runs, _, _ = _run_single(STORE_SEQ_HEX)
    assert len(runs) == 1
    run = runs[0]
    assert run.success and run.feasible
    stores = [e for e in run.events if e.kind == "store"]
    assert len(stores) == 1
    assert stores[0].slot == Const(0)
    assert stores[0].value == Const(3)


def test_run_path_withdraw_deposit_condition():
    runs, _, _ = _run_single(FIXTURE_WITHDRAW.hex())
    deposit = [r for r in runs
               if (binop("gt", Env("CALLVALUE"), Const(1000)), True) in r.state.path_condition]
    assert len(deposit) == 1


def test_run_path_contradiction_is_infeasible():
    # JUMPI twice on the same condition, taking opposite polarities:
    # CALLVALUE gates a jump into a block that re-checks it and falls through
    code_hex = "34600557005b34600b57005bfe"
    # 0: CALLVALUE; PUSH1 5; JUMPI; STOP;
    # 5: JUMPDEST; CALLVALUE; PUSH1 0xb; JUMPI; STOP; 0xb: JUMPDEST; INVALID
    runs, _, _ = _run_single(code_hex)
    contradictory = [r for r in runs if [p for _, p in r.state.path_condition] == [True, False]]
    assert contradictory == [] or all(not r.feasible for r in contradictory)
    infeasible = [r for r in runs if not r.feasible]
    assert len(infeasible) == 1  # the true-then-false walk


def test_events_in_execution_order():
    runs, _, _ = _run_single(PAYBACK_HEX)
    run = runs[0]
    pcs = [e.pc for e in run.events]
    assert pcs == sorted(pcs)
    assert [e.kind for e in run.events] == ["env_read", "env_read", "call_out"]
    assert [e.tag for e in run.events[:2]] == ["CALLVALUE", "CALLER"]


# --- feasibility ------------------------------------------------------------


def test_feasible_constant_condition():
    # Gt(1, 0) folds to Const(1) at construction
    assert check_feasible([(binop("gt", Const(1), Const(0)), True)]) is Feasibility.FEASIBLE


def test_infeasible_syntactic_contradiction():
    cond = binop("gt", Env("CALLVALUE"), Const(1000))
    verdict = check_feasible([(cond, True), (cond, False)])
    assert verdict is Feasibility.INFEASIBLE


def test_infeasible_by_interval_propagation():
    # brute force over sampled CALLVALUE values confirms emptiness
    high = binop("gt", Env("CALLVALUE"), Const(1000))
    low = binop("lt", Env("CALLVALUE"), Const(500))
    for cv in range(0, 2001, 50):
        cenv = ConcreteEnv(callvalue=cv)
        assert not (evaluate(high, cenv) and evaluate(low, cenv))
    assert check_feasible([(high, True), (low, True)]) is Feasibility.INFEASIBLE


def test_unknown_counts_as_included():
    verdict = check_feasible([(binop("gt", Env("CALLVALUE"), Const(1000)), True)])
    assert verdict is Feasibility.UNKNOWN
    assert verdict.included


def test_iszero_wrappers_flip_polarity():
    cond = unop("iszero", binop("gt", Env("CALLVALUE"), Const(1000)))
    assert check_feasible([(cond, True),
                           (binop("gt", Env("CALLVALUE"), Const(1000)), True)]) \
        is Feasibility.INFEASIBLE


def test_checker_protocol_pluggable():
    class AlwaysNo:
        def check(self, conditions):
            return Feasibility.INFEASIBLE

    assert check_feasible([], checker=AlwaysNo()) is Feasibility.INFEASIBLE


def test_serialize_conditions_shape():
    out = serialize_conditions([(binop("gt", Env("CALLVALUE"), Const(1000)), True)])
    assert out[0]["condition"] == "CALLVALUE > 1000"
    assert out[0]["asserted"] is True
    assert out[0]["tree"]["kind"] == "binop"


# --- pretty -----------------------------------------------------------------


def test_pretty_examples():
    assert pretty(binop("div", Env("CALLVALUE"), Const(400))) == "CALLVALUE / 400"
    assert pretty(Const(0)) == "0"
    assert pretty(binop("gt", Env("CALLVALUE"), Const(1000))) == "CALLVALUE > 1000"


def test_pretty_hash_and_sload():
    expr = SLoad(hash_of([Env("CALLER"), Const(2)]), 0)
    assert pretty(expr) == "storage[keccak(CALLER, 2)]"


def test_pretty_parenthesization():
    expr = binop("div", binop("add", SLoad(Const(0), 0), Env("CALLVALUE")), Const(10))
    assert pretty(expr) == "(storage[0] + CALLVALUE) / 10"


# --- normalization ----------------------------------------------------------


def _exprs(depth=3):
    leaves = st.one_of(
        st.integers(min_value=0, max_value=2**256 - 1).map(Const),
        st.sampled_from([Env("CALLER"), Env("CALLVALUE"), Env("TIMESTAMP"), SLoad(Const(1), 0)]),
    )

    def extend(children):
        ops = st.sampled_from(["add", "sub", "mul", "div", "lt", "gt", "eq", "and", "xor"])
        return st.one_of(
            st.tuples(ops, children, children).map(lambda t: BinOp(t[0], t[1], t[2])),
            children.map(lambda c: UnOp("iszero", c)),
            st.tuples(children, children).map(lambda t: Hash((t[0], t[1]))),
            st.tuples(children, children, children).map(lambda t: Ite(t[0], t[1], t[2])),
        )

    return st.recursive(leaves, extend, max_leaves=8)


@given(_exprs())
def test_normalize_idempotent(expr):
    once = normalize(expr)
    assert normalize(once) == once


@given(_exprs())
def test_normalized_has_no_const_const_binop(expr):
    from ponzilens.symex.expr import walk

    for node in walk(normalize(expr)):
        if isinstance(node, BinOp):
            assert not (isinstance(node.left, Const) and isinstance(node.right, Const))


@given(_exprs(), st.integers(min_value=0, max_value=2**256 - 1))
def test_normalization_preserves_meaning(expr, cv):
    cenv = ConcreteEnv(caller=0xAB, callvalue=cv, timestamp=12345, storage0={1: 7})
    assert evaluate(normalize(expr), cenv) == evaluate(expr, cenv)


# --- diff segments -----------------------------------------------------------


def test_diff_segments_identical():
    e = binop("add", Env("CALLVALUE"), Const(1))
    s1, s2 = diff_segments(e, e)
    assert all(s.same for s in s1) and all(s.same for s in s2)


def test_diff_segments_localizes_change():
    a = SLoad(binop("add", hash_of([Const(1)]), Const(2)), 3)
    b = SLoad(binop("add", hash_of([Const(1)]), Const(3)), 3)
    s1, s2 = diff_segments(a, b)
    assert [s.text for s in s1 if not s.same] == ["2"]
    assert [s.text for s in s2 if not s.same] == ["3"]
    assert "".join(s.text for s in s2) == "storage[(keccak(1) + 3)]"


def test_ite_folding():
    assert ite(Const(1), Env("CALLER"), Const(0)) == Env("CALLER")
    assert ite(Const(0), Env("CALLER"), Const(0)) == Const(0)
    assert ite(Env("CALLVALUE"), Const(5), Const(5)) == Const(5)

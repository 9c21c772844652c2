"""Hand-assembled runtime bytecode fixtures with documented listings.

These reconstruct the canonical scheme shapes — a chain scheme paying every
recorded investor in a loop, a gated deposit/withdraw scheme with a fee and
per-investor credit, and a plain refund wallet — plus micro programs used by
unit tests.  They are verified against the concrete reference interpreter in
the test suite and are not byte-for-byte copies of any deployed contract.
"""

from __future__ import annotations

from dataclasses import dataclass

from .opcodes import BY_NAME, is_push


@dataclass(frozen=True)
class Label:
    name: str


@dataclass(frozen=True)
class Ref:
    """A PUSH2 whose operand is a label's byte offset."""
    name: str


Item = "str | tuple[str, int] | Label | Ref"


def assemble(items: list) -> bytes:
    """Two-pass assembler: mnemonics, (PUSHn, imm) pairs, labels, and PUSH2
    label references (fixed width keeps offsets stable across passes)."""
    offsets: dict[str, int] = {}
    pc = 0
    for item in items:
        if isinstance(item, Label):
            offsets[item.name] = pc
        elif isinstance(item, Ref):
            pc += 3  # PUSH2 + two operand bytes
        elif isinstance(item, tuple):
            name, _ = item
            info = BY_NAME[name]
            pc += 1 + info.push_bytes
        else:
            pc += 1

    out = bytearray()
    for item in items:
        if isinstance(item, Label):
            continue
        if isinstance(item, Ref):
            out.append(BY_NAME["PUSH2"].value)
            out += offsets[item.name].to_bytes(2, "big")
        elif isinstance(item, tuple):
            name, imm = item
            info = BY_NAME[name]
            if not is_push(info.value):
                raise ValueError(f"{name} takes no immediate")
            out.append(info.value)
            out += imm.to_bytes(info.push_bytes, "big")
        else:
            out.append(BY_NAME[item].value)
    return bytes(out)


# -- micro fixtures ----------------------------------------------------------

# PUSH1 1; PUSH1 2; ADD; PUSH1 0; SSTORE; STOP  -> stores 3 at slot 0
STORE_SEQ_HEX = "600160020160005500"

# PUSH1 0 x4; CALLVALUE; CALLER; GAS; CALL; STOP -> refunds the caller
PAYBACK_HEX = "600060006000600034335af100"

# PUSH1 3; JUMP; JUMPDEST; STOP
JUMP_PAIR_HEX = "6003565b00"

# if (CALLVALUE) { left arm } else { right arm }, both rejoining at one exit
DIAMOND = assemble([
    "CALLVALUE", Ref("left"), "JUMPI",
    Ref("join"), "JUMP",
    Label("left"), "JUMPDEST", Ref("join"), "JUMP",
    Label("join"), "JUMPDEST", "STOP",
])


def _keccak_slot_prelude() -> list:
    """mem[0] = 1; push keccak(1) (the element region of the array at slot 1)."""
    return [
        ("PUSH1", 1), ("PUSH1", 0), "MSTORE",
        ("PUSH1", 32), ("PUSH1", 0), "SHA3",
    ]


# -- FIXTURE-CHAIN -------------------------------------------------------------
#
# Storage layout: slot 0 = pooled balance, slot 1 = investor array (length at
# the slot, elements at keccak(1)+i).
#
#   entry:   if (CALLVALUE > 0) goto invest; STOP
#   invest:  investors[len] = CALLER         (investing write)
#            slot1 = len + 1                 (length update)
#            slot0 = slot0 + CALLVALUE       (balance update)
#            i = 0
#   loop:    if (i < slot1) goto body; POP i; STOP
#   body:    CALL(GAS, investors[i], slot0 / 10)   (rewarding payment)
#            i = i + 1; goto loop

FIXTURE_CHAIN = assemble([
    # entry (block 0)
    ("PUSH1", 0), "CALLVALUE", "GT",          # [cv > 0]
    Ref("invest"), "JUMPI",
    # refuse branch (block 1)
    "STOP",
    # invest (block 2)
    Label("invest"), "JUMPDEST",
    ("PUSH1", 1), "SLOAD",                    # [len]
    "DUP1",                                   # [len, len]
    *_keccak_slot_prelude(),                  # [keccak(1), len, len]
    "ADD",                                    # [keccak(1)+len, len]
    "CALLER", "SWAP1",                        # [keccak(1)+len, CALLER, len]
    "SSTORE",                                 # investors[len] = CALLER    [len]
    ("PUSH1", 1), "ADD",                      # [len+1]
    ("PUSH1", 1), "SSTORE",                   # slot1 = len+1              []
    "CALLVALUE", ("PUSH1", 0), "SLOAD", "ADD",  # [bal + cv]
    ("PUSH1", 0), "SSTORE",                   # slot0 = bal + cv           []
    ("PUSH1", 0),                             # i = 0
    # loop head (block 3)
    Label("loop"), "JUMPDEST",                # [i]
    ("PUSH1", 1), "SLOAD",                    # [len', i]
    "DUP2",                                   # [i, len', i]
    "LT",                                     # [i < len', i]
    Ref("body"), "JUMPI",
    # exit (block 4)
    "POP", "STOP",
    # body (block 5)
    Label("body"), "JUMPDEST",                # [i]
    ("PUSH1", 0), ("PUSH1", 0), ("PUSH1", 0), ("PUSH1", 0),  # ret/args scratch
    ("PUSH1", 10), ("PUSH1", 0), "SLOAD", "DIV",  # [bal/10, 0,0,0,0, i]
    *_keccak_slot_prelude(),                  # [keccak(1), bal/10, 0,0,0,0, i]
    "DUP7", "ADD",                            # [keccak(1)+i, ...]
    "SLOAD",                                  # [investors[i], bal/10, 0,0,0,0, i]
    "GAS", "CALL", "POP",                     # pay investors[i]           [i]
    ("PUSH1", 1), "ADD",                      # [i+1]
    Ref("loop"), "JUMP",
])

FIXTURE_CHAIN_HEX = FIXTURE_CHAIN.hex()


# -- FIXTURE-WITHDRAW ----------------------------------------------------------
#
# One gate splits deposit from withdrawal; credits live in a mapping at
# slot 2 keyed by the caller.
#
#   entry:    if (CALLVALUE > 1000) goto deposit
#   withdraw: CALL(GAS, CALLER, credits[CALLER]); STOP      (payback)
#   deposit:  CALL(GAS, 0xfee..., CALLVALUE / 10)           (operator fee)
#             credits[CALLER] += CALLVALUE / 400            (update)
#             STOP

_FEE_SINK = 0x00FEE5C0FFEE00000000000000000000000000BE


def _credit_slot_prelude() -> list:
    """mem[0] = CALLER; mem[32] = 2; push keccak(CALLER, 2)."""
    return [
        "CALLER", ("PUSH1", 0), "MSTORE",
        ("PUSH1", 2), ("PUSH1", 32), "MSTORE",
        ("PUSH1", 64), ("PUSH1", 0), "SHA3",
    ]


FIXTURE_WITHDRAW = assemble([
    # entry (block 0)
    ("PUSH2", 1000), "CALLVALUE", "GT",       # [cv > 1000]
    Ref("deposit"), "JUMPI",
    # withdraw branch (block 1)
    ("PUSH1", 0), ("PUSH1", 0), ("PUSH1", 0), ("PUSH1", 0),
    *_credit_slot_prelude(),                  # [keccak(CALLER,2), 0,0,0,0]
    "SLOAD",                                  # [credits[CALLER], ...]
    "CALLER", "GAS", "CALL", "POP",           # pay credits[CALLER] to CALLER
    "STOP",
    # deposit branch (block 2)
    Label("deposit"), "JUMPDEST",
    ("PUSH1", 0), ("PUSH1", 0), ("PUSH1", 0), ("PUSH1", 0),
    ("PUSH1", 10), "CALLVALUE", "DIV",        # [cv/10, 0,0,0,0]
    ("PUSH20", _FEE_SINK), "GAS", "CALL", "POP",  # operator fee
    ("PUSH2", 400), "CALLVALUE", "DIV",       # [cv/400]
    *_credit_slot_prelude(),                  # [slot, cv/400]
    "DUP1", "SLOAD",                          # [old, slot, cv/400]
    "SWAP1", "SWAP2",                         # [cv/400, old, slot]
    "ADD",                                    # [cv/400 + old, slot]
    "SWAP1",                                  # [slot, cv/400 + old]
    "SSTORE",                                 # credits[CALLER] += cv/400
    "STOP",
])

FIXTURE_WITHDRAW_HEX = FIXTURE_WITHDRAW.hex()


# -- FIXTURE-WALLET --------------------------------------------------------------
#
# Non-scheme foil: a wallet that simply refunds whatever arrives.
#
#   entry: if (CALLVALUE > 0) goto refund; STOP
#   refund: CALL(GAS, CALLER, CALLVALUE); STOP               (payback)

FIXTURE_WALLET = assemble([
    ("PUSH1", 0), "CALLVALUE", "GT",
    Ref("refund"), "JUMPI",
    "STOP",
    Label("refund"), "JUMPDEST",
    ("PUSH1", 0), ("PUSH1", 0), ("PUSH1", 0), ("PUSH1", 0),
    "CALLVALUE", "CALLER", "GAS", "CALL", "POP",
    "STOP",
])

FIXTURE_WALLET_HEX = FIXTURE_WALLET.hex()


FIXTURES: dict[str, bytes] = {
    "chain": FIXTURE_CHAIN,
    "withdraw": FIXTURE_WITHDRAW,
    "wallet": FIXTURE_WALLET,
}

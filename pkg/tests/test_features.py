import pytest

from ponzilens.features import (
    COLUMN_NAMES,
    FeatureVector,
    PathGroup,
    UnknownColumnNameError,
    group_paths,
    order_columns_and_groups,
    tag_features,
)


def _vec(bits: str) -> FeatureVector:
    return FeatureVector(*(c == "1" for c in bits))


def test_rewarding_implies_payment():
    with pytest.raises(ValueError):
        FeatureVector(investing=False, payment=False, has_loop=False, rewarding=True)


def test_tag_features_chain_all_true(chain_result):
    rep = chain_result.report
    all_true = [g for g in rep["feature_level"]["groups"]
                if all(g["signature"].values())]
    assert len(all_true) == 1


def test_tag_features_payback_only(wallet_report):
    sigs = {g["id"]: g["signature"] for g in wallet_report["feature_level"]["groups"]}
    assert sigs["g0100"] == {"Investing": False, "Payment": True,
                             "Loop": False, "Rewarding": False}


def test_tag_features_empty_sequence():
    from ponzilens.actions import ActionSequence
    from ponzilens.cfg import BlockPath

    vec = tag_features(ActionSequence(path_id="p", actions=[]), BlockPath((0,)))
    assert vec == _vec("0000")


def test_group_paths_single_signature():
    groups = group_paths({f"p{i}": _vec("1010") for i in range(5)})
    assert len(groups) == 1
    assert groups[0].band_width == 5


def test_group_paths_partition():
    groups = group_paths({"a": _vec("1100"), "b": _vec("1100"), "c": _vec("0100")})
    widths = {g.signature.bits(): g.band_width for g in groups}
    assert widths == {"1100": 2, "0100": 1}


def test_withdraw_single_payment_group(withdraw_report):
    groups = withdraw_report["feature_level"]["groups"]
    multi = [g for g in groups if sum(g["signature"].values()) >= 2]
    assert multi == []
    payment = [g for g in groups if g["signature"]["Payment"]]
    assert len(payment) == 1


def test_default_column_order():
    data = order_columns_and_groups([PathGroup(_vec("1111"), ["a"])])
    assert data.columns == ("Investing", "Payment", "Loop", "Rewarding")


def test_single_group_zero_crossings():
    data = order_columns_and_groups([PathGroup(_vec("1010"), ["a", "b"])])
    assert data.crossings == 0


def test_group_sort_by_bit_key():
    groups = [
        PathGroup(_vec("0000"), ["a"]),
        PathGroup(_vec("1111"), ["b"]),
        PathGroup(_vec("1010"), ["c"]),
    ]
    data = order_columns_and_groups(groups)
    assert [g.signature.bits() for g in data.groups] == ["1111", "1010", "0000"]


def test_column_override_changes_order_only():
    groups = [PathGroup(_vec("1000"), ["a"]), PathGroup(_vec("0101"), ["b", "c"])]
    default = order_columns_and_groups(groups)
    flipped = order_columns_and_groups(groups, ("Rewarding", "Loop", "Payment", "Investing"))
    assert flipped.columns == ("Rewarding", "Loop", "Payment", "Investing")
    # membership and widths unchanged
    def key(data):
        return {g.id: sorted(g.path_ids) for g in data.groups}
    assert key(default) == key(flipped)
    # but the vertical order now leads with the rewarding group
    assert flipped.groups[0].signature.rewarding


def test_unknown_column_name():
    with pytest.raises(UnknownColumnNameError):
        order_columns_and_groups([], ("Investing", "Payment", "Loop", "Bogus"))


def test_column_totals_partition():
    groups = [PathGroup(_vec("1100"), ["a", "b"]), PathGroup(_vec("0100"), ["c"])]
    data = order_columns_and_groups(groups)
    for col in COLUMN_NAMES:
        dark, light = data.column_totals[col]
        assert dark + light == 3
    assert data.column_totals["Investing"] == (2, 1)
    assert data.column_totals["Payment"] == (3, 0)

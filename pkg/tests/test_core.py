import pytest
from hypothesis import given, strategies as st

from binstretch.core import (
    BinConfiguration, GameParams, ItemMultiset, PackingCertificate, StructureError, add_item,
    canonicalize, max_load, validate_packing,
)


def test_params_alpha_and_depth():
    p = GameParams(3, 19, 14)
    assert p.alpha == 4
    assert p.depth_bound == 3 * 14 + 2


@pytest.mark.parametrize("m,t,g", [(0, 4, 3), (3, 4, 0), (3, 1, 3)])
def test_params_rejects_nonsense(m, t, g):
    with pytest.raises(StructureError):
        GameParams(m, t, g)


def test_degenerate_ratio_is_accepted():
    assert GameParams(2, 3, 5).alpha == -3


def test_canonicalize_sorts_descending():
    assert canonicalize([1, 5, 3]) == (5, 3, 1)
    with pytest.raises(StructureError):
        canonicalize([1, 2], m=3)


def test_add_item_resorts_and_tracks_items():
    c = BinConfiguration.empty(GameParams(3, 4, 3))
    c = add_item(c, 1, 2)
    assert c.loads == (1, 0, 0)
    c = add_item(c, 3, 1)
    assert c.loads == (3, 1, 0)
    assert c.items.items() == [3, 1]
    assert max_load(c) == 3
    with pytest.raises(StructureError):
        add_item(c, 1, 3)


def test_last_item_only_when_tracked():
    p = GameParams(3, 4, 3)
    assert add_item(BinConfiguration.empty(p), 2, 0).last_item is None
    assert add_item(BinConfiguration.empty(p, track_last=True), 2, 0).last_item == 2


def test_configuration_identity_includes_last_item():
    a = BinConfiguration.from_items((2, 1, 0), [1, 2], 3, last_item=1)
    b = BinConfiguration.from_items((2, 1, 0), [1, 2], 3, last_item=2)
    assert a != b
    assert a == BinConfiguration.from_items((1, 2, 0), [2, 1], 3, last_item=1)


def test_from_items_checks_volume():
    with pytest.raises(StructureError):
        BinConfiguration.from_items((3, 0, 0), [1], 3)


def test_multiset_counts():
    ms = ItemMultiset(5, [5, 1, 1])
    assert ms.counts == [0, 2, 0, 0, 0, 1]
    assert ms.total == 7 and len(ms) == 3
    ms.remove(1)
    assert ms.items(descending=False) == [1, 5]
    with pytest.raises(StructureError):
        ms.remove(2)
    with pytest.raises(StructureError):
        ms.add(6)


def test_fig1_leaf_packing():
    p = GameParams(3, 4, 3)
    cert = PackingCertificate.of([[3], [3], [1, 1]])
    assert str(cert) == "[{3}; {3}; {1,1}]"
    assert validate_packing([3, 3, 1, 1], cert, p)
    assert validate_packing([3, 3, 1, 1], PackingCertificate.of([[3], [3, 1], [1]]), p) is False
    assert validate_packing([3, 3, 1, 1], PackingCertificate.of([[3], [2, 1], [1]]), p) is False
    assert not validate_packing([3, 3, 1, 1], PackingCertificate.of([[3, 3], [1], [1]]), p)


def test_packing_needs_exactly_m_bins():
    p = GameParams(3, 4, 3)
    assert not validate_packing([1], PackingCertificate.of([[1], []]), p)


@given(st.lists(st.integers(1, 6), max_size=8), st.data())
def test_validate_packing_is_monotone_in_items(items, data):
    p = GameParams(4, 9, 6)
    bins = [[] for _ in range(4)]
    for s in items:
        bins[data.draw(st.integers(0, 3))].append(s)
    cert = PackingCertificate.of(bins)
    ok = validate_packing(items, cert, p)
    if ok and items:
        sub = items[: data.draw(st.integers(0, len(items)))]
        assert validate_packing(sub, cert, p)

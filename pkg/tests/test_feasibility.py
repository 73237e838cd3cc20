import itertools

from hypothesis import given, settings, strategies as st

from binstretch.core import BinConfiguration, GameParams, ItemMultiset, validate_packing
from binstretch.feasibility import (
    Feasibility, ObfState, bfd_lowerbound, dynprog_max, find_packing, max_feasible, obf_insert,
    obf_lowerbound, obf_remove, query_feasibility_cache, record_feasibility,
)
from binstretch.hashing import FeasibilityCache, ZobristTables


def brute_fits(items, m, g):
    for assign in itertools.product(range(m), repeat=len(items)):
        loads = [0] * m
        for s, b in zip(items, assign):
            loads[b] += s
        if max(loads, default=0) <= g:
            return True
    return False


def brute_max_feasible(items, m, g):
    for y in range(g, 0, -1):
        if brute_fits(list(items) + [y], m, g):
            return y
    return 0


small_items = st.lists(st.integers(1, 6), max_size=7)


@settings(max_examples=150, deadline=None)
@given(small_items)
def test_max_feasible_matches_enumeration(items):
    p = GameParams(3, 9, 6)
    if not brute_fits(items, 3, 6):
        return
    tables = ZobristTables(p)
    c = BinConfiguration.from_items((sum(items), 0, 0), items, 6) if sum(items) < 9 else None
    if c is None:
        return
    got = max_feasible(c, None, FeasibilityCache(10), tables)
    assert got == brute_max_feasible(items, 3, 6)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(1, 5), max_size=8))
def test_dynprog_agrees_with_enumeration(items):
    p = GameParams(3, 8, 5)
    got = dynprog_max(ItemMultiset(5, items), p)
    if not brute_fits(items, 3, 5):
        assert got == -1
    else:
        assert got == brute_max_feasible(items, 3, 5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 5), max_size=8))
def test_dedup_does_not_change_the_answer(items):
    p = GameParams(3, 8, 5)
    ms = ItemMultiset(5, items)
    assert dynprog_max(ms, p, dedup=True) == dynprog_max(ms, p, dedup=False)


def test_trace_bounds_only_tighten():
    p = GameParams(3, 19, 14)
    tables = ZobristTables(p)
    items = [5, 5, 4, 3, 2]
    c = BinConfiguration.from_items((10, 9, 0), items, 14)
    tr = max_feasible(c, 10, FeasibilityCache(12), tables, trace=True)
    ran = [b for b in tr.stages.values() if b is not None]
    for (lb0, ub0), (lb1, ub1) in zip(ran, ran[1:]):
        assert lb1 >= lb0 and ub1 <= ub0
    assert tr.y == min(10, brute_max_feasible(items, 3, 14))


def test_prev_y_caps_the_answer():
    p = GameParams(3, 19, 14)
    c = BinConfiguration.from_items((3, 0, 0), [3], 14)
    assert max_feasible(c, 7, FeasibilityCache(12), ZobristTables(p)) == 7


def test_cache_hits_are_reused():
    p = GameParams(3, 8, 6)
    tables = ZobristTables(p)
    cache = FeasibilityCache(10)
    items = ItemMultiset(6, [4, 4])
    assert query_feasibility_cache(cache, tables, items, 4) is Feasibility.UNKNOWN
    record_feasibility(cache, tables, items.with_items(4), True)
    assert query_feasibility_cache(cache, tables, items, 4) is Feasibility.FEASIBLE
    record_feasibility(cache, tables, items.with_items(5), False)
    assert query_feasibility_cache(cache, tables, items, 5) is Feasibility.INFEASIBLE


def test_online_best_fit_remove_restores():
    s = ObfState(2, 5)
    for e in (3, 3, 2, 2):
        obf_insert(s, e)
    assert obf_lowerbound(s) == 0
    obf_insert(s, 4)
    assert obf_lowerbound(s) is None
    obf_remove(s, 4)
    assert obf_lowerbound(s) == 0
    obf_remove(s, 2)
    assert obf_lowerbound(s) == 2


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 6), max_size=8))
def test_lower_bounds_are_sound(items):
    p = GameParams(3, 9, 6)
    if not brute_fits(items, 3, 6):
        return
    best = brute_max_feasible(items, 3, 6)
    lb = bfd_lowerbound(ItemMultiset(6, items), p)
    assert lb <= best
    s = ObfState(3, 6)
    for e in items:
        obf_insert(s, e)
    olb = obf_lowerbound(s)
    assert olb is None or olb <= best


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 6), max_size=8))
def test_find_packing_is_exact(items):
    p = GameParams(3, 9, 6)
    cert = find_packing(items, p)
    assert (cert is not None) == brute_fits(items, 3, 6)
    if cert is not None:
        assert validate_packing(items, cert, p)

"""Quick win detection for both players.

Good situations 1-3 certify that the algorithm can finish the packing
with a simple online rule. The large-item and five/nine heuristics
certify an adversary win and come with a constructive witness that the
strategy recorder replays into explicit nodes.

All kernels take the load vector sorted non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .core import BinConfiguration, GameParams
from .feasibility import dynprog_max_raw
from .hashing import ZobristTables, cache_insert_raw, cache_lookup_raw, hash_items

LARGE_ITEM = "large_item"
FIVE_NINE = "five_nine"


# --- good situations ------------------------------------------------------

@njit(cache=True, nogil=True)
def gs1_raw(loads, m, t, g):
    alpha = t - 1 - g
    s = 0
    for j in range(m - 1):
        s += loads[j]
    return s >= (m - 1) * g - alpha


@njit(cache=True, nogil=True)
def gs2_raw(loads, m, t, g):
    if m < 4:
        return False
    alpha = t - 1 - g
    total = 0
    for j in range(m):
        total += loads[j]
    need = (m - 2) * g - 2 * alpha - 1
    for a in range(m):
        for b in range(a + 1, m):
            if total - loads[a] - loads[b] < need:
                continue
            for c in range(m):
                if c != a and c != b and loads[c] < alpha:
                    return True
    return False


@njit(cache=True, nogil=True)
def gs3_raw(loads, m, t, g):
    if m < 4:
        return False
    alpha = t - 1 - g
    s = 0
    for j in range(m - 2):
        s += loads[j]
    second = loads[m - 2]
    target = (m - 1) * g - alpha
    r = t
    for x in range(t):
        low = x if x < second else second
        if s + second + x - low >= target:
            r = x
            break
    if r > t - 1:
        return False
    o = t - r
    floor = (m - 1) * g - alpha - o - s
    if floor < second <= alpha:
        return True
    last = loads[m - 1]
    return floor < last <= alpha


@njit(cache=True, nogil=True)
def any_good_situation(loads, m, t, g):
    return gs1_raw(loads, m, t, g) or gs2_raw(loads, m, t, g) or gs3_raw(loads, m, t, g)


def _loads(c: BinConfiguration) -> np.ndarray:
    return np.asarray(c.loads, dtype=np.int64)


def gs1(c: BinConfiguration, params: GameParams) -> bool:
    return bool(gs1_raw(_loads(c), params.m, params.t, params.g))


def gs2(c: BinConfiguration, params: GameParams) -> bool:
    return bool(gs2_raw(_loads(c), params.m, params.t, params.g))


def gs3(c: BinConfiguration, params: GameParams) -> bool:
    return bool(gs3_raw(_loads(c), params.m, params.t, params.g))


@dataclass(frozen=True)
class Gs3Quantities:
    s: int
    r: int
    o: int


def gs3_quantities(c: BinConfiguration, params: GameParams) -> Gs3Quantities:
    m, t, g, alpha = params.m, params.t, params.g, params.alpha
    s = sum(c.loads[: m - 2])
    second = c.loads[m - 2]
    r = next((x for x in range(t) if s + second + x - min(x, second) >= (m - 1) * g - alpha), t)
    return Gs3Quantities(s, r, t - r)


# --- feasibility helpers shared by the adversary heuristics ---------------

@njit(cache=True, nogil=True)
def _bump(counts, h, item_keys, size, delta):
    """Add ``delta`` copies of ``size`` to ``counts``; return the updated multiset hash."""
    f = counts[size]
    counts[size] = f + delta
    if f + delta >= item_keys.shape[1] or f >= item_keys.shape[1]:
        return np.uint64(0)
    return h ^ item_keys[size, f] ^ item_keys[size, f + delta]


@njit(cache=True, nogil=True)
def feasible_counts(counts, h, m, g, dp_keys, fcache, fshift, fprobe):
    """Feasibility of ``counts`` (hash ``h``, 0 = unhashable), through the cache."""
    if h != np.uint64(0):
        hit = cache_lookup_raw(fcache, fshift, fprobe, h)
        if hit >= 0:
            return hit == 1
    ok = dynprog_max_raw(counts, m, g, dp_keys, True) >= 0
    if h != np.uint64(0):
        cache_insert_raw(fcache, fshift, fprobe, h, 1 if ok else 0)
    return ok


@njit(cache=True, nogil=True)
def _feasible_plus(counts, volume, h, m, g, size, copies, item_keys, dp_keys, fcache, fshift, fprobe):
    if size > g or volume + size * copies > m * g:
        return False
    h2 = _bump(counts, h, item_keys, size, copies)
    ok = feasible_counts(counts, h2, m, g, dp_keys, fcache, fshift, fprobe)
    _bump(counts, h2, item_keys, size, -copies)
    return ok


# --- large item heuristic -------------------------------------------------

@njit(cache=True, nogil=True)
def large_item_size(loads, m, t, p):
    """Smallest item that overflows bins 0..p and fits at most once on any later bin."""
    i = t - loads[p]
    if p < m - 1:
        # 2*i + loads[b] >= t for every later bin; the emptiest one binds
        twice = (t - loads[m - 1] + 1) // 2
        if twice > i:
            i = twice
    if i < 1:
        i = 1
    return i


@njit(cache=True, nogil=True)
def large_item_raw(loads, counts, volume, h, m, t, g, min_item,
                   item_keys, dp_keys, fcache, fshift, fprobe):
    """Return ``size * 1024 + copies`` of a winning forced sequence, or 0."""
    for p in range(m):
        if loads[p] < t - g:
            break
        i = large_item_size(loads, m, t, p)
        if i < min_item:
            i = min_item
        copies = m - p
        if i > g:
            continue
        if _feasible_plus(counts, volume, h, m, g, i, copies, item_keys, dp_keys,
                          fcache, fshift, fprobe):
            return i * 1024 + copies
    return 0


@dataclass(frozen=True)
class AdversaryWitness:
    """Why a configuration is an adversary win without search.

    ``forced_items`` is the list of identical items for a large-item win.
    A five/nine win is adaptive, so only its kind is recorded; the recorder
    asks :func:`five_nine_move` for the move at each node.
    """

    kind: str
    forced_items: tuple[int, ...] = ()


def large_item_candidates(c: BinConfiguration, params: GameParams) -> list[tuple[int, int, int]]:
    """All (bin position, item size, copies) candidates, before any feasibility test."""
    m, t, g = params.m, params.t, params.g
    loads = _loads(c)
    out = []
    for p in range(m):
        if loads[p] < t - g:
            break
        out.append((p, int(large_item_size(loads, m, t, p)), m - p))
    return out


class _FeasibilityArgs:
    """Bundle of the arrays the heuristic kernels need for feasibility checks."""

    def __init__(self, tables: ZobristTables, fcache=None):
        from .hashing import FeasibilityCache

        self.tables = tables
        self.fcache = fcache if fcache is not None else FeasibilityCache(12)

    def args(self):
        return (self.tables.item_keys, self.tables.dp_keys, self.fcache.table,
                self.fcache.shift, self.fcache.probe_limit)


def large_item_heuristic(c: BinConfiguration, params: GameParams, tables: ZobristTables,
                         fcache=None, min_item: int = 1) -> Optional[AdversaryWitness]:
    fa = _FeasibilityArgs(tables, fcache)
    counts = np.asarray(c.items.counts, dtype=np.int64)
    r = large_item_raw(_loads(c), counts, c.items.total, np.uint64(hash_items(tables, c.items.counts)),
                       params.m, params.t, params.g, min_item, *fa.args())
    if r == 0:
        return None
    size, copies = divmod(int(r), 1024)
    return AdversaryWitness(LARGE_ITEM, (size,) * copies)


# --- five/nine heuristic (t=19, g=14 only) --------------------------------

@njit(cache=True, nogil=True)
def _count_below(loads, m, bound):
    p = 0
    for j in range(m):
        if loads[j] < bound:
            p += 1
    return p


@njit(cache=True, nogil=True)
def five_nine_move_raw(loads, counts, volume, h, m, g, min_item,
                       item_keys, dp_keys, fcache, fshift, fprobe):
    """Next move of the five/nine recipe: 14, 9 or 5, or 0 when the recipe gives up.

    Sending 14 means p+1 copies (p = bins below 5); sending 9 means m copies.
    """
    p = _count_below(loads, m, 5)
    if 14 >= min_item and _feasible_plus(counts, volume, h, m, g, 14, p + 1, item_keys, dp_keys,
                                         fcache, fshift, fprobe):
        return 14
    nines = _feasible_plus(counts, volume, h, m, g, 9, m, item_keys, dp_keys, fcache, fshift, fprobe)
    if loads[0] >= 10 and nines and 9 >= min_item:
        return 9
    if 5 < min_item or loads[0] >= 10:
        return 0
    # keep m nines sendable after the 5
    if volume + 5 + 9 * m > m * g:
        return 0
    h2 = _bump(counts, h, item_keys, 5, 1)
    h3 = _bump(counts, h2, item_keys, 9, m)
    ok = feasible_counts(counts, h3, m, g, dp_keys, fcache, fshift, fprobe)
    _bump(counts, h3, item_keys, 9, -m)
    _bump(counts, h2, item_keys, 5, -1)
    return 5 if ok else 0


@njit(cache=True, nogil=True)
def _five_nine_wins(loads, counts, volume, h, m, t, g, min_item,
                    item_keys, dp_keys, fcache, fshift, fprobe):
    """Does the recipe win against every placement of its 5s?

    An AND-tree walked with an explicit stack (numba's disk cache does not
    cope with recursive kernels). Row d of ``rows`` holds the loads after d
    fives; each open level has one 5 bumped into ``counts``.
    """
    cap = (m * g) // 5 + 2
    rows = np.empty((cap + 1, m), dtype=np.int64)
    nxt = np.zeros(cap + 1, dtype=np.int64)
    hs = np.empty(cap + 1, dtype=np.uint64)
    for k in range(m):
        rows[0, k] = loads[k]
    hs[0] = h
    d = 0
    entering = True
    while True:
        if entering:
            mi = min_item if d == 0 else 0
            move = five_nine_move_raw(rows[d], counts, volume + 5 * d, hs[d], m, g, mi,
                                      item_keys, dp_keys, fcache, fshift, fprobe)
            if move == 0:
                for k in range(d - 1, -1, -1):
                    _bump(counts, hs[k + 1], item_keys, 5, -1)
                return False
            if move == 5:
                hs[d + 1] = _bump(counts, hs[d], item_keys, 5, 1)
                nxt[d] = 0
                entering = False
            else:
                # this node is won outright; resume the parent
                if d == 0:
                    return True
                d -= 1
                entering = False
            continue
        # try the next placement of the 5 sent at level d
        row = rows[d]
        j = nxt[d]
        while j < m and ((j > 0 and row[j] == row[j - 1]) or row[j] + 5 >= t):
            j += 1
        if j >= m or d + 1 > cap:
            _bump(counts, hs[d + 1], item_keys, 5, -1)
            if d == 0:
                return True
            d -= 1
            continue
        nxt[d] = j + 1
        child = rows[d + 1]
        for k in range(m):
            child[k] = row[k]
        child[j] += 5
        k = j
        while k > 0 and child[k] > child[k - 1]:
            tmp = child[k]
            child[k] = child[k - 1]
            child[k - 1] = tmp
            k -= 1
        d += 1
        entering = True


@njit(cache=True, nogil=True)
def five_nine_gate(loads, m, t, g):
    return t == 19 and g == 14 and loads[0] >= 5 and loads[m - 1] >= 1


@njit(cache=True, nogil=True)
def five_nine_raw(loads, counts, volume, h, m, t, g, min_item,
                  item_keys, dp_keys, fcache, fshift, fprobe):
    if not five_nine_gate(loads, m, t, g):
        return False
    if not _feasible_plus(counts, volume, h, m, g, 9, m, item_keys, dp_keys, fcache, fshift, fprobe):
        return False
    return _five_nine_wins(loads, counts, volume, h, m, t, g, min_item,
                           item_keys, dp_keys, fcache, fshift, fprobe)


def five_nine_heuristic(c: BinConfiguration, params: GameParams, tables: ZobristTables,
                        fcache=None, min_item: int = 1) -> Optional[AdversaryWitness]:
    fa = _FeasibilityArgs(tables, fcache)
    counts = np.asarray(c.items.counts, dtype=np.int64)
    ok = five_nine_raw(_loads(c), counts, c.items.total, np.uint64(hash_items(tables, c.items.counts)),
                       params.m, params.t, params.g, min_item, *fa.args())
    return AdversaryWitness(FIVE_NINE) if ok else None


def five_nine_move(c: BinConfiguration, params: GameParams, tables: ZobristTables,
                   fcache=None, min_item: int = 0) -> tuple[int, int]:
    """(item size, copies) the recipe sends next; copies > 1 means a forced run."""
    fa = _FeasibilityArgs(tables, fcache)
    counts = np.asarray(c.items.counts, dtype=np.int64)
    loads = _loads(c)
    move = int(five_nine_move_raw(loads, counts, c.items.total,
                                  np.uint64(hash_items(tables, c.items.counts)),
                                  params.m, params.g, min_item, *fa.args()))
    if move == 14:
        return 14, int(_count_below(loads, params.m, 5)) + 1
    if move == 9:
        return 9, params.m
    return move, 1

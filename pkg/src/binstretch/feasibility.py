"""Largest item the adversary may send: the MaxFeas cascade.

The exact answer comes from a sparse knapsack-style dynamic program over
canonical m-tuples of bin loads. Before paying for it, cheaper bounds are
tried in order:

- the volume bound
- an online best-fit packing kept in sync with the search path
- the feasibility cache
- best fit decreasing

The ``*_raw`` functions are numba kernels over plain arrays; the search
engine calls them directly. The remaining functions are thin wrappers
taking core types.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .core import BinConfiguration, GameParams, ItemMultiset, PackingCertificate, StructureError
from .hashing import (
    DP_DEDUP_BITS,
    FeasibilityCache,
    ZobristTables,
    cache_insert_raw,
    cache_lookup_raw,
    hash_items,
)

INFEASIBLE = -1

# trace rows written by max_feasible_raw: (lb, ub) after each stage
STAGE_INIT, STAGE_OBF, STAGE_CACHE, STAGE_BFD, STAGE_DP = range(5)
N_STAGES = 5


class Feasibility(enum.Enum):
    FEASIBLE = 1
    INFEASIBLE = 0
    UNKNOWN = -1


# --- online best fit ------------------------------------------------------

@njit(cache=True, nogil=True)
def obf_insert_raw(obf_loads, g, e):
    """Put ``e`` in the fullest bin where it fits; return the bin or -1."""
    best = -1
    for j in range(obf_loads.shape[0]):
        if obf_loads[j] + e <= g and (best < 0 or obf_loads[j] > obf_loads[best]):
            best = j
    if best >= 0:
        obf_loads[best] += e
    return best


@njit(cache=True, nogil=True)
def obf_lowerbound_raw(obf_loads, g):
    low = obf_loads[0]
    for j in range(1, obf_loads.shape[0]):
        if obf_loads[j] < low:
            low = obf_loads[j]
    return g - low


@dataclass
class ObfState:
    """Online best-fit packing of the items on the current search path."""

    m: int
    g: int
    bins: list[list[int]] = field(default_factory=list)
    unplaced: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.bins:
            self.bins = [[] for _ in range(self.m)]

    @property
    def consistent(self) -> bool:
        return not self.unplaced

    def _place(self, e: int) -> bool:
        best = None
        for j, b in enumerate(self.bins):
            load = sum(b)
            if load + e <= self.g and (best is None or load > sum(self.bins[best])):
                best = j
        if best is None:
            return False
        self.bins[best].append(e)
        return True


def obf_insert(state: ObfState, e: int) -> None:
    if not state._place(e):
        state.unplaced.append(e)


def obf_remove(state: ObfState, e: int) -> None:
    if e in state.unplaced:
        state.unplaced.remove(e)
    else:
        for b in reversed(state.bins):
            if e in b:
                b.remove(e)
                break
        else:
            raise StructureError(f"item {e} is not in the online packing")
    pending, state.unplaced = state.unplaced, []
    for item in pending:
        obf_insert(state, item)


def obf_lowerbound(state: ObfState) -> Optional[int]:
    if not state.consistent:
        return None
    return state.g - min(sum(b) for b in state.bins)


# --- best fit decreasing --------------------------------------------------

@njit(cache=True, nogil=True)
def bfd_raw(counts, m, g):
    loads = np.zeros(m, dtype=np.int64)
    for s in range(g, 0, -1):
        for _ in range(counts[s]):
            if obf_insert_raw(loads, g, s) < 0:
                return 0
    return obf_lowerbound_raw(loads, g)


def bfd_lowerbound(items: ItemMultiset, params: GameParams) -> int:
    return int(bfd_raw(np.asarray(items.counts, dtype=np.int64), params.m, params.g))


# --- exact dynamic program ------------------------------------------------

@njit(cache=True, nogil=True)
def dynprog_max_raw(counts, m, g, dp_keys, use_dedup):
    """Max over all packings of ``counts`` into m bins of g minus the lowest load.

    Returns -1 when the items do not fit at all.
    """
    dedup = np.zeros(1 << DP_DEDUP_BITS, dtype=np.uint64)
    shift = np.uint64(64 - DP_DEDUP_BITS)
    cap = 256
    cur = np.zeros((cap, m), dtype=np.int64)
    nxt = np.empty((cap, m), dtype=np.int64)
    ncur = 1
    tup = np.empty(m, dtype=np.int64)
    for s in range(g, 0, -1):
        for _ in range(counts[s]):
            nnext = 0
            for q in range(ncur):
                for j in range(m):
                    if j > 0 and cur[q, j] == cur[q, j - 1]:
                        continue
                    if cur[q, j] + s > g:
                        continue
                    for k in range(m):
                        tup[k] = cur[q, k]
                    tup[j] += s
                    k = j
                    while k > 0 and tup[k] > tup[k - 1]:
                        tmp = tup[k]
                        tup[k] = tup[k - 1]
                        tup[k - 1] = tmp
                        k -= 1
                    if use_dedup:
                        h = np.uint64(0)
                        for k in range(m):
                            h ^= dp_keys[k, tup[k]]
                        f = np.int64(h >> shift)
                        if dedup[f] == h:
                            continue
                        dedup[f] = h
                    if nnext == nxt.shape[0]:
                        bigger = np.empty((2 * nnext, m), dtype=np.int64)
                        bigger[:nnext] = nxt[:nnext]
                        nxt = bigger
                    for k in range(m):
                        nxt[nnext, k] = tup[k]
                    nnext += 1
            if nnext == 0:
                return -1
            cur, nxt = nxt, cur
            ncur = nnext
            if nxt.shape[0] < cur.shape[0]:
                nxt = np.empty((cur.shape[0], m), dtype=np.int64)
    best = -1
    for q in range(ncur):
        space = g - cur[q, m - 1]
        if space > best:
            best = space
    return best


def dynprog_max(items: ItemMultiset, params: GameParams, tables: Optional[ZobristTables] = None,
                dedup: bool = True) -> int:
    if tables is None:
        tables = ZobristTables(params)
    counts = np.asarray(items.counts, dtype=np.int64)
    return int(dynprog_max_raw(counts, params.m, params.g, tables.dp_keys, dedup))


# --- the cascade ----------------------------------------------------------

@njit(cache=True, nogil=True)
def _extended_hash(items_hash, counts, item_keys, size, extra):
    f = counts[size]
    if f + extra >= item_keys.shape[1]:
        return np.uint64(0)
    return items_hash ^ item_keys[size, f] ^ item_keys[size, f + extra]


@njit(cache=True, nogil=True)
def feasible_with_raw(counts, volume, items_hash, m, g, size, copies,
                      item_keys, dp_keys, fcache, fshift, fprobe):
    """Can ``copies`` more items of ``size`` join ``counts``? Cached."""
    if size > g or volume + size * copies > m * g:
        return False
    h = _extended_hash(items_hash, counts, item_keys, size, copies)
    if h != np.uint64(0):
        hit = cache_lookup_raw(fcache, fshift, fprobe, h)
        if hit >= 0:
            return hit == 1
    counts[size] += copies
    ok = dynprog_max_raw(counts, m, g, dp_keys, True) >= 0
    counts[size] -= copies
    if h != np.uint64(0):
        cache_insert_raw(fcache, fshift, fprobe, h, 1 if ok else 0)
    return ok


@njit(cache=True, nogil=True)
def max_feasible_raw(counts, volume, items_hash, m, g, prev_y, obf_lb,
                     item_keys, dp_keys, fcache, fshift, fprobe, trace, stats):
    """Exact largest sendable item; ``obf_lb`` < 0 means the online packing is stale.

    ``trace[stage]`` receives (lb, ub) after each stage that ran.
    ``stats`` counts which stage settled the answer.
    """
    ub = m * g - volume
    if prev_y < ub:
        ub = prev_y
    if g < ub:
        ub = g
    lb = 0
    trace[STAGE_INIT, 0] = lb
    trace[STAGE_INIT, 1] = ub
    if ub <= 0:
        stats[STAGE_INIT] += 1
        return ub if ub == 0 else -1
    if obf_lb > lb:
        lb = obf_lb if obf_lb < ub else ub
    trace[STAGE_OBF, 0] = lb
    trace[STAGE_OBF, 1] = ub
    if lb >= ub:
        stats[STAGE_OBF] += 1
        return lb
    j = ub
    while j > lb:
        h = _extended_hash(items_hash, counts, item_keys, j, 1)
        if h != np.uint64(0):
            hit = cache_lookup_raw(fcache, fshift, fprobe, h)
            if hit == 1:
                lb = j
                break
            if hit == 0:
                ub = j - 1
        j -= 1
    trace[STAGE_CACHE, 0] = lb
    trace[STAGE_CACHE, 1] = ub
    if lb >= ub:
        stats[STAGE_CACHE] += 1
        return ub
    b = bfd_raw(counts, m, g)
    if b > lb:
        lb = b if b < ub else ub
    trace[STAGE_BFD, 0] = lb
    trace[STAGE_BFD, 1] = ub
    if lb >= ub:
        stats[STAGE_BFD] += 1
        return lb
    y = dynprog_max_raw(counts, m, g, dp_keys, True)
    stats[STAGE_DP] += 1
    trace[STAGE_DP, 0] = y
    trace[STAGE_DP, 1] = y
    if y < 0:
        return -1
    if y >= 1:
        h = _extended_hash(items_hash, counts, item_keys, y, 1)
        if h != np.uint64(0):
            cache_insert_raw(fcache, fshift, fprobe, h, 1)
    if y + 1 <= g:
        h = _extended_hash(items_hash, counts, item_keys, y + 1, 1)
        if h != np.uint64(0):
            cache_insert_raw(fcache, fshift, fprobe, h, 0)
    return y


def query_feasibility_cache(cache: FeasibilityCache, tables: ZobristTables, items: ItemMultiset,
                            candidate: int) -> Feasibility:
    hit = cache.lookup(hash_items(tables, items.with_items(candidate).counts))
    if hit is None:
        return Feasibility.UNKNOWN
    return Feasibility.FEASIBLE if hit else Feasibility.INFEASIBLE


def record_feasibility(cache: FeasibilityCache, tables: ZobristTables, items: ItemMultiset,
                       feasible: bool) -> None:
    cache.insert(hash_items(tables, items.counts), int(feasible))


@dataclass
class FeasibilityBounds:
    """(lb, ub) after each cascade stage; ``None`` for stages that did not run."""

    stages: dict[str, Optional[tuple[int, int]]]
    prev_y: Optional[int]
    volume: int
    y: int


def max_feasible(c: BinConfiguration, prev_y: Optional[int], cache: FeasibilityCache,
                 tables: ZobristTables, obf: Optional[ObfState] = None,
                 trace: bool = False):
    """Largest item that keeps ``c.items`` packable; -1 if they already are not.

    Without an explicit ``obf`` state, a best-fit packing of the items in
    decreasing order stands in for the path-synchronised one.
    """
    params = tables.params
    counts = np.asarray(c.items.counts, dtype=np.int64)
    if obf is None:
        obf = ObfState(params.m, params.g)
        for s in c.items.items():
            obf_insert(obf, s)
    lb = obf_lowerbound(obf)
    rows = np.full((N_STAGES, 2), -2, dtype=np.int64)
    stats = np.zeros(N_STAGES, dtype=np.int64)
    y = int(max_feasible_raw(counts, c.items.total, np.uint64(hash_items(tables, c.items.counts)),
                             params.m, params.g, params.g if prev_y is None else prev_y,
                             -1 if lb is None else lb, tables.item_keys, tables.dp_keys,
                             cache.table, cache.shift, cache.probe_limit, rows, stats))
    if not trace:
        return y
    names = ["init", "obf", "cache", "bfd", "dynprog"]
    stages = {n: (None if rows[i, 0] == -2 else (int(rows[i, 0]), int(rows[i, 1])))
              for i, n in enumerate(names)}
    return FeasibilityBounds(stages, prev_y, c.items.total, y)


# --- explicit packings ----------------------------------------------------

def find_packing(items: ItemMultiset | list[int], params: GameParams) -> Optional[PackingCertificate]:
    """An explicit m-bin packing of capacity g, or None.

    Depth-first over items in decreasing order; failed (position, loads)
    states are memoised so the search is bounded by the knapsack DP.
    """
    sizes = items.items() if isinstance(items, ItemMultiset) else sorted(items, reverse=True)
    m, g = params.m, params.g
    if sum(sizes) > m * g or (sizes and sizes[0] > g):
        return None
    suffix = [0] * (len(sizes) + 1)
    for i in range(len(sizes) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + sizes[i]
    bins: list[list[int]] = [[] for _ in range(m)]
    loads = [0] * m
    failed: set = set()

    def place(i: int) -> bool:
        if i == len(sizes):
            return True
        key = (i, tuple(sorted(loads)))
        if key in failed:
            return False
        s = sizes[i]
        order = sorted(range(m), key=lambda j: -loads[j])
        tried = set()
        for j in order:
            if loads[j] + s > g or loads[j] in tried:
                continue
            tried.add(loads[j])
            loads[j] += s
            bins[j].append(s)
            if place(i + 1):
                return True
            bins[j].pop()
            loads[j] -= s
        failed.add(key)
        return False

    if not place(0):
        return None
    return PackingCertificate.of(bins)

"""Minimax evaluation of the bin stretching game.

The verdict pass runs entirely inside one numba kernel, ``_search``,
an explicit-stack depth-first minimax that alternates between adversary
nodes (choose an item) and algorithm nodes (place it). It uses a
per-worker workspace (load vectors and a frame row per depth, item
counts, the online best-fit packing) that is updated in place and
restored on backtrack. Keeping the kernel non-recursive also keeps it
loadable from numba's on-disk cache.

Once the root is known to be an adversary win, :func:`record_strategy`
walks the winning strategy again from Python, asking the kernel which
item wins at each adversary node and replaying heuristic witnesses as
explicit nodes. Shared nodes are reused, so the recorded tree is already
stored with its duplicate subtrees merged.
"""

from __future__ import annotations

import enum
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from numba import njit

from .core import BinConfiguration, GameParams, ItemMultiset, PackingCertificate, StructureError
from .feasibility import N_STAGES, find_packing, max_feasible_raw, obf_insert_raw
from .hashing import (
    DEFAULT_HASH_BITS,
    DEFAULT_PROBE,
    DEFAULT_SEED,
    FeasibilityCache,
    StateCache,
    ZobristTables,
    cache_insert_raw,
    cache_lookup_raw,
    hash_items,
    seed_kernel_rng,
)
from .pruning import (
    any_good_situation,
    five_nine_gate,
    five_nine_move,
    five_nine_raw,
    large_item_heuristic,
    large_item_raw,
)

log = logging.getLogger(__name__)

ADV, ALG, ABORTED = 0, 1, 2

# bits of the kernel flag word
F_GS = 1
F_LARGE = 2
F_FIVE_NINE = 4
F_TWO_SIDED = 8
F_STATE_CACHE = 16
F_ASCENDING = 32

# slots of the kernel's int parameter vector
P_M, P_T, P_G, P_MONO, P_FLAGS, P_DEPTH, P_SSHIFT, P_SPROBE, P_FSHIFT, P_FPROBE, P_TASK = range(11)
# slots of the kernel's scalar state vector
S_VOLUME, S_LAST, S_OBF_BAD = range(3)
# slots of the statistics vector
N_ADV, N_ALG, N_CACHE_HIT, N_GS, N_LARGE, N_FIVE_NINE, N_DEPTH_CUT = range(7)
N_STATS = 7

# columns of the per-depth frame table
FR_Y, FR_MIN, FR_ITEM, FR_BIN, FR_SLOT, FR_OLD_LAST, FR_HASH, FR_SKIP_LO, FR_SKIP_HI = range(9)
N_FRAME = 9
# kernel state machine actions
A_ENTER, A_PLACE, A_RETURN, A_QUICK, A_FAIL = range(5)

FULL_GENERALITY = -1


class Winner(enum.Enum):
    ADVERSARY = ADV
    ALGORITHM = ALG

    def __str__(self) -> str:
        return self.name.lower()


class SearchAborted(RuntimeError):
    """The evaluation was cancelled through the abort flags."""


class RecorderError(RuntimeError):
    """The recording pass found no winning move where the verdict pass claimed one."""


# --- kernel ---------------------------------------------------------------

@njit(cache=True, nogil=True)
def _loads_hash(row, m, load_keys):
    h = np.uint64(0)
    for j in range(m):
        h ^= load_keys[j, row[j]]
    return h


@njit(cache=True, nogil=True)
def _push(depth, e, counts, st, hs, obf_loads, fr, item_keys, g):
    """Send item ``e`` at ``depth``: update counts, volume, hashes, online packing."""
    slot = obf_insert_raw(obf_loads, g, e)
    fr[depth, FR_SLOT] = slot
    if slot < 0:
        st[S_OBF_BAD] += 1
    f = counts[e]
    hs[depth + 1] = hs[depth] ^ item_keys[e, f] ^ item_keys[e, f + 1]
    counts[e] = f + 1
    st[S_VOLUME] += e
    fr[depth, FR_OLD_LAST] = st[S_LAST]
    st[S_LAST] = e


@njit(cache=True, nogil=True)
def _pop(depth, e, counts, st, obf_loads, fr):
    st[S_LAST] = fr[depth, FR_OLD_LAST]
    st[S_VOLUME] -= e
    counts[e] -= 1
    slot = fr[depth, FR_SLOT]
    if slot < 0:
        st[S_OBF_BAD] -= 1
    else:
        obf_loads[slot] -= e


@njit(cache=True, nogil=True)
def _next_placement(depth, loads, fr, m, t):
    """Write the next non-overflowing placement of the current item into row depth+1.

    Returns False when every placement has been tried.
    """
    row = loads[depth]
    e = fr[depth, FR_ITEM]
    j = fr[depth, FR_BIN]
    while j < m:
        if (j == 0 or row[j] != row[j - 1]) and row[j] + e < t:
            break
        j += 1
    if j >= m:
        return False
    fr[depth, FR_BIN] = j + 1
    child = loads[depth + 1]
    for k in range(m):
        child[k] = row[k]
    child[j] += e
    k = j
    while k > 0 and child[k] > child[k - 1]:
        tmp = child[k]
        child[k] = child[k - 1]
        child[k - 1] = tmp
        k -= 1
    return True


@njit(cache=True, nogil=True)
def _skip(e, depth, fr, ascending):
    """Move ``e`` past the run of items that good situation 1 settles."""
    if fr[depth, FR_SKIP_LO] <= e <= fr[depth, FR_SKIP_HI]:
        return fr[depth, FR_SKIP_HI] + 1 if ascending else fr[depth, FR_SKIP_LO] - 1
    return e


@njit(cache=True, nogil=True)
def _next_item(depth, fr, flags):
    """Advance to the adversary's next candidate item; 0 when exhausted."""
    e = fr[depth, FR_ITEM]
    ascending = (flags & F_ASCENDING) != 0
    e = _skip(e + 1 if ascending else e - 1, depth, fr, ascending)
    if e > fr[depth, FR_Y] or e < fr[depth, FR_MIN]:
        return 0
    fr[depth, FR_ITEM] = e
    return e


@njit(cache=True, nogil=True)
def _gs1_items(row, m, t, g, fr, depth):
    """Record the item range answered by good situation 1.

    Putting e on the second-smallest bin keeps the smallest bin smallest,
    so the other m-1 loads grow by e; every e in the stored range lets the
    algorithm reach good situation 1 in one move.
    """
    fr[depth, FR_SKIP_LO] = 1
    fr[depth, FR_SKIP_HI] = 0
    if m < 2:
        return
    top = 0
    for j in range(m - 1):
        top += row[j]
    lo = (m - 1) * g - (t - 1 - g) - top
    hi = t - 1 - row[m - 2]
    fr[depth, FR_SKIP_LO] = lo if lo > 1 else 1
    fr[depth, FR_SKIP_HI] = hi


@njit(cache=True, nogil=True)
def _enter_adv(depth, ip, loads, counts, st, hs, obf_loads, fr, load_keys, item_keys,
               last_keys, dp_keys, scache, fcache, trace, fstats, stats):
    """Open an adversary node. Returns ADV/ALG when settled without search,
    or -1 after setting up the first candidate item in the frame."""
    m = ip[P_M]
    t = ip[P_T]
    g = ip[P_G]
    flags = ip[P_FLAGS]
    mono = ip[P_MONO]
    stats[N_ADV] += 1
    row = loads[depth]
    if depth >= ip[P_DEPTH]:
        stats[N_DEPTH_CUT] += 1
        return ALG
    if (flags & F_GS) != 0 and any_good_situation(row, m, t, g):
        stats[N_GS] += 1
        return ALG
    h = _loads_hash(row, m, load_keys) ^ hs[depth]
    last = st[S_LAST]
    if mono >= 0:
        h ^= last_keys[last]
    fr[depth, FR_HASH] = np.int64(h)
    use_cache = (flags & F_STATE_CACHE) != 0
    if use_cache:
        hit = cache_lookup_raw(scache, ip[P_SSHIFT], ip[P_SPROBE], h)
        if hit >= 0:
            stats[N_CACHE_HIT] += 1
            return hit
    min_item = 1
    if mono >= 0 and last - mono > 1:
        min_item = last - mono
    volume = st[S_VOLUME]
    if (flags & F_LARGE) != 0 and row[0] >= t - g:
        # heuristic witnesses are winning in the unrestricted game, so they
        # are not held to the monotonicity restriction
        if large_item_raw(row, counts, volume, hs[depth], m, t, g, 1, item_keys, dp_keys,
                          fcache, ip[P_FSHIFT], ip[P_FPROBE]) != 0:
            stats[N_LARGE] += 1
            _store(ip, scache, h, ADV)
            return ADV
    if (flags & F_FIVE_NINE) != 0 and five_nine_gate(row, m, t, g):
        if five_nine_raw(row, counts, volume, hs[depth], m, t, g, 1, item_keys, dp_keys,
                         fcache, ip[P_FSHIFT], ip[P_FPROBE]):
            stats[N_FIVE_NINE] += 1
            _store(ip, scache, h, ADV)
            return ADV
    obf_lb = -1
    if st[S_OBF_BAD] == 0:
        low = obf_loads[0]
        for j in range(1, m):
            if obf_loads[j] < low:
                low = obf_loads[j]
        obf_lb = g - low
    prev_y = fr[depth - 1, FR_Y] if depth > 0 else fr[depth, FR_Y]
    y = max_feasible_raw(counts, volume, hs[depth], m, g, prev_y, obf_lb, item_keys, dp_keys,
                         fcache, ip[P_FSHIFT], ip[P_FPROBE], trace, fstats)
    if y < min_item:
        _store(ip, scache, h, ALG)
        return ALG
    fr[depth, FR_Y] = y
    fr[depth, FR_MIN] = min_item
    ascending = (flags & F_ASCENDING) != 0
    if (flags & F_GS) != 0:
        _gs1_items(row, m, t, g, fr, depth)
    else:
        fr[depth, FR_SKIP_LO] = 1
        fr[depth, FR_SKIP_HI] = 0
    e = _skip(min_item if ascending else y, depth, fr, ascending)
    if e > y or e < min_item:
        _store(ip, scache, h, ALG)
        return ALG
    fr[depth, FR_ITEM] = e
    return -1


@njit(cache=True, nogil=True)
def _store(ip, scache, h, result):
    flags = ip[P_FLAGS]
    if (flags & F_STATE_CACHE) == 0:
        return
    if result == ALG or (flags & F_TWO_SIDED) != 0:
        cache_insert_raw(scache, ip[P_SSHIFT], ip[P_SPROBE], h, result)


@njit(cache=True, nogil=True)
def _quick_alg(depth, ip, loads, st, hs, fr, load_keys, last_keys, scache, stats):
    """Cheap pass over the placements of the current item: True if one of
    them lands in a good situation or in a configuration cached as won."""
    m = ip[P_M]
    t = ip[P_T]
    g = ip[P_G]
    flags = ip[P_FLAGS]
    use_gs = (flags & F_GS) != 0
    use_cache = (flags & F_STATE_CACHE) != 0
    fr[depth, FR_BIN] = 0
    if not use_gs and not use_cache:
        return False
    e = fr[depth, FR_ITEM]
    hi = hs[depth + 1]
    if ip[P_MONO] >= 0:
        hi ^= last_keys[st[S_LAST]]
    child = loads[depth + 1]
    fr[depth, FR_BIN] = 0
    while _next_placement(depth, loads, fr, m, t):
        if use_gs and any_good_situation(child, m, t, g):
            stats[N_GS] += 1
            return True
        if use_cache:
            h = _loads_hash(child, m, load_keys) ^ hi
            if cache_lookup_raw(scache, ip[P_SSHIFT], ip[P_SPROBE], h) == ALG:
                stats[N_CACHE_HIT] += 1
                return True
    fr[depth, FR_BIN] = 0
    return False


@njit(cache=True, nogil=True)
def _search(root_item, ip, loads, counts, st, hs, obf_loads, fr,
            load_keys, item_keys, last_keys, dp_keys, scache, fcache, trace, fstats, stats, abort):
    """Iterative minimax from the configuration in ``loads[0]``.

    ``root_item == 0`` evaluates the adversary node; ``root_item > 0``
    evaluates the algorithm's answer to that item. ``fr[0, FR_Y]`` must
    hold the upper bound inherited by the root. Frame row d describes the
    adversary node at depth d and the algorithm node placing its current
    item. Returns ADV, ALG or ABORTED.
    """
    m = ip[P_M]
    t = ip[P_T]
    g = ip[P_G]
    flags = ip[P_FLAGS]
    task = ip[P_TASK]
    depth = 0
    if root_item > 0:
        fr[0, FR_ITEM] = root_item
        _push(0, root_item, counts, st, hs, obf_loads, fr, item_keys, g)
        fr[0, FR_BIN] = 0
        stats[N_ALG] += 1
        action = A_QUICK
    else:
        action = A_ENTER
    ret = ALG
    while True:
        if action == A_ENTER:
            if abort[task] != 0:
                # unwind every pushed item
                for d in range(depth - 1, -1, -1):
                    _pop(d, fr[d, FR_ITEM], counts, st, obf_loads, fr)
                if root_item > 0 and depth == 0:
                    _pop(0, root_item, counts, st, obf_loads, fr)
                return ABORTED
            r = _enter_adv(depth, ip, loads, counts, st, hs, obf_loads, fr, load_keys,
                           item_keys, last_keys, dp_keys, scache, fcache, trace, fstats, stats)
            if r >= 0:
                ret = r
                action = A_RETURN
            else:
                _push(depth, fr[depth, FR_ITEM], counts, st, hs, obf_loads, fr, item_keys, g)
                stats[N_ALG] += 1
                action = A_QUICK
        elif action == A_QUICK:
            if _quick_alg(depth, ip, loads, st, hs, fr, load_keys, last_keys, scache, stats):
                action = A_FAIL
            else:
                action = A_PLACE
        elif action == A_PLACE:
            # algorithm node at ``depth``: try the next placement
            if _next_placement(depth, loads, fr, m, t):
                depth += 1
                action = A_ENTER
            else:
                # every placement loses: the item wins for the adversary
                _pop(depth, fr[depth, FR_ITEM], counts, st, obf_loads, fr)
                if root_item > 0 and depth == 0:
                    return ADV
                _store(ip, scache, np.uint64(fr[depth, FR_HASH]), ADV)
                ret = ADV
                action = A_RETURN
        elif action == A_RETURN:
            # an adversary node at ``depth`` has settled with ``ret``
            if depth == 0:
                return ret
            depth -= 1
            action = A_PLACE if ret == ADV else A_FAIL
        else:
            # a placement saves the algorithm: the current item fails
            _pop(depth, fr[depth, FR_ITEM], counts, st, obf_loads, fr)
            if root_item > 0 and depth == 0:
                return ALG
            e = _next_item(depth, fr, flags)
            if e == 0:
                _store(ip, scache, np.uint64(fr[depth, FR_HASH]), ALG)
                ret = ALG
                action = A_RETURN
            else:
                _push(depth, e, counts, st, hs, obf_loads, fr, item_keys, g)
                stats[N_ALG] += 1
                action = A_QUICK


# --- Python-side context --------------------------------------------------

@dataclass
class HeuristicSwitches:
    good_situations: bool = True
    large_item: bool = True
    five_nine: bool = True


class SearchContext:
    """Everything one worker needs: shared caches plus a private workspace.

    ``monotonicity`` is the k of the restriction (each item at least the
    previous one minus k); ``None`` or anything >= g-1 means full generality.
    """

    def __init__(self, params: GameParams, monotonicity: Optional[int] = None, *,
                 seed: int = DEFAULT_SEED, hash_bits: int = DEFAULT_HASH_BITS,
                 probe_limit: int = DEFAULT_PROBE, heuristics: Optional[HeuristicSwitches] = None,
                 state_cache: bool = True, two_sided_cache: bool = False,
                 item_order: str = "desc", depth_budget: Optional[int] = None,
                 tables: Optional[ZobristTables] = None, caches=None):
        self.params = params
        self.seed = seed
        self.tables = tables if tables is not None else ZobristTables(params, seed)
        if caches is None:
            caches = (StateCache(hash_bits, probe_limit), FeasibilityCache(hash_bits, probe_limit))
        self.state_cache, self.feas_cache = caches
        self.heuristics = heuristics or HeuristicSwitches()
        self.use_state_cache = state_cache
        self.two_sided_cache = two_sided_cache
        if item_order not in ("desc", "asc"):
            raise ValueError(f"item order must be 'desc' or 'asc', got {item_order!r}")
        self.item_order = item_order
        self.depth_budget = depth_budget if depth_budget is not None else params.depth_bound
        if self.depth_budget < 1:
            raise ValueError("depth budget must be at least 1")
        self.monotonicity = self._normalize_mono(monotonicity)
        m, g = params.m, params.g
        rows = self.depth_budget + 2
        self.loads = np.zeros((rows, m), dtype=np.int64)
        self.counts = np.zeros(g + 1, dtype=np.int64)
        self.st = np.zeros(3, dtype=np.int64)
        self.hs = np.zeros(rows + 1, dtype=np.uint64)
        self.obf_loads = np.zeros(m, dtype=np.int64)
        self.frames = np.zeros((rows + 1, N_FRAME), dtype=np.int64)
        self.trace = np.zeros((N_STAGES, 2), dtype=np.int64)
        self.fstats = np.zeros(N_STAGES, dtype=np.int64)
        self.stats = np.zeros(N_STATS, dtype=np.int64)
        self.abort = np.zeros(1, dtype=np.int64)
        self.task_slot = 0
        seed_kernel_rng(seed & 0x7FFFFFFF)

    def _normalize_mono(self, k: Optional[int]) -> int:
        if k is None or k >= self.params.g - 1:
            return FULL_GENERALITY
        if k < 0:
            raise ValueError(f"monotonicity must be non-negative, got {k}")
        return k

    @property
    def full_generality(self) -> bool:
        return self.monotonicity == FULL_GENERALITY

    def set_monotonicity(self, k: Optional[int]) -> None:
        new = self._normalize_mono(k)
        if new != self.monotonicity:
            # cached verdicts depend on the restriction
            self.state_cache.clear()
        self.monotonicity = new

    def worker_clone(self) -> "SearchContext":
        """A context with its own workspace but the same tables and caches."""
        clone = SearchContext(self.params, None, seed=self.seed, heuristics=self.heuristics,
                              state_cache=self.use_state_cache,
                              two_sided_cache=self.two_sided_cache, item_order=self.item_order,
                              depth_budget=self.depth_budget, tables=self.tables,
                              caches=(self.state_cache, self.feas_cache))
        clone.monotonicity = self.monotonicity
        return clone

    def flags(self) -> int:
        f = 0
        if self.heuristics.good_situations:
            f |= F_GS
        if self.heuristics.large_item:
            f |= F_LARGE
        if self.heuristics.five_nine:
            f |= F_FIVE_NINE
        if self.two_sided_cache:
            f |= F_TWO_SIDED
        if self.use_state_cache:
            f |= F_STATE_CACHE
        if self.item_order == "asc":
            f |= F_ASCENDING
        return f

    def _ip(self) -> np.ndarray:
        p = self.params
        sc, fc = self.state_cache, self.feas_cache
        return np.array([p.m, p.t, p.g, self.monotonicity, self.flags(), self.depth_budget,
                         sc.shift, sc.probe_limit, fc.shift, fc.probe_limit, self.task_slot],
                        dtype=np.int64)

    def load(self, c: BinConfiguration) -> None:
        """Copy a configuration into the workspace (online packing rebuilt greedily)."""
        p = self.params
        if len(c.loads) != p.m:
            raise StructureError(f"expected {p.m} loads, got {len(c.loads)}")
        if c.loads and c.loads[0] >= p.t:
            raise StructureError(f"configuration {c.loads} is already terminal")
        self.loads[0, :] = c.loads
        self.counts[:] = c.items.counts
        self.st[S_VOLUME] = c.items.total
        self.st[S_LAST] = c.last_item or 0
        self.hs[0] = np.uint64(hash_items(self.tables, c.items.counts))
        self.obf_loads[:] = 0
        bad = 0
        for s in c.items.items():
            if obf_insert_raw(self.obf_loads, p.g, s) < 0:
                bad += 1
        self.st[S_OBF_BAD] = bad

    def _args(self):
        t = self.tables
        return (self._ip(), self.loads, self.counts, self.st, self.hs, self.obf_loads,
                self.frames, t.load_keys, t.item_keys, t.last_keys, t.dp_keys,
                self.state_cache.table, self.feas_cache.table, self.trace, self.fstats,
                self.stats, self.abort)

    def run_adv(self, c: BinConfiguration, prev_y: Optional[int] = None) -> int:
        self.load(c)
        self.frames[0, FR_Y] = self.params.g if prev_y is None else prev_y
        return int(_search(0, *self._args()))

    def run_alg(self, c: BinConfiguration, e: int, prev_y: Optional[int] = None) -> int:
        self.load(c)
        self.frames[0, FR_Y] = self.params.g if prev_y is None else prev_y
        return int(_search(e, *self._args()))

    def max_feasible(self, c: BinConfiguration, prev_y: Optional[int] = None) -> int:
        self.load(c)
        p = self.params
        obf_lb = -1 if self.st[S_OBF_BAD] else p.g - int(self.obf_loads.min())
        fc = self.feas_cache
        return int(max_feasible_raw(self.counts, c.items.total, self.hs[0], p.m, p.g,
                                    p.g if prev_y is None else prev_y, obf_lb,
                                    self.tables.item_keys, self.tables.dp_keys, fc.table,
                                    fc.shift, fc.probe_limit, self.trace, self.fstats))

    def min_item(self, c: BinConfiguration) -> int:
        if self.full_generality or not c.last_item:
            return 1
        return max(1, c.last_item - self.monotonicity)

    def stat_dict(self) -> dict[str, int]:
        names = ["adv_nodes", "alg_nodes", "cache_hits", "gs_prunes", "large_item_wins",
                 "five_nine_wins", "depth_cuts"]
        out = {n: int(v) for n, v in zip(names, self.stats)}
        for n, v in zip(["y_by_volume", "y_by_obf", "y_by_cache", "y_by_bfd", "dynprog_calls"],
                        self.fstats):
            out[n] = int(v)
        return out


def _check(result: int) -> Winner:
    if result == ABORTED:
        raise SearchAborted("evaluation aborted")
    return Winner(result)


def start_configuration(params: GameParams, ctx: Optional[SearchContext] = None) -> BinConfiguration:
    track = ctx is not None and not ctx.full_generality
    return BinConfiguration.empty(params, track_last=track)


def eval_adv(c: BinConfiguration, ctx: SearchContext) -> Winner:
    """Who wins from ``c`` with the adversary to move."""
    if ctx.full_generality and c.last_item is not None:
        c = BinConfiguration(c.loads, c.items, None)
    return _check(ctx.run_adv(c))


def eval_alg(c: BinConfiguration, e: int, ctx: SearchContext) -> Winner:
    """Who wins after the adversary sends ``e`` from ``c``."""
    if e < 1:
        raise StructureError(f"item size must be positive, got {e}")
    p = ctx.params
    if ctx.heuristics.good_situations and any_good_situation(
            np.asarray(c.loads, dtype=np.int64), p.m, p.t, p.g):
        return Winner.ALGORITHM
    return _check(ctx.run_alg(c, e))


# --- strategy recording ---------------------------------------------------

@dataclass(eq=False)
class StrategyTree:
    """A node of the adversary's winning strategy.

    ``children`` maps the canonical loads after a non-overflowing placement
    to the next node. Nodes may be shared between parents.
    """

    loads: tuple[int, ...]
    items: ItemMultiset
    next_items: list[int]
    certificate: Optional[PackingCertificate] = None
    children: dict[tuple[int, ...], "StrategyTree"] = field(default_factory=dict)

    def key(self) -> tuple:
        return (self.loads, self.items.key())

    def walk(self) -> Iterable["StrategyTree"]:
        """Every distinct node once, parents before children."""
        seen: set[int] = set()
        order: list[StrategyTree] = []
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            order.append(node)
            stack.extend(reversed(list(node.children.values())))
        return order

    def distinct_nodes(self) -> int:
        return len(self.walk())

    def tree_size(self) -> int:
        """Node count of the fully unfolded tree."""
        memo: dict[int, int] = {}

        def size(node: StrategyTree) -> int:
            got = memo.get(id(node))
            if got is None:
                got = 1 + sum(size(c) for c in node.children.values())
                memo[id(node)] = got
            return got

        return size(self)


def placements(loads: Sequence[int], e: int, t: int) -> tuple[list[tuple[int, ...]], bool]:
    """Distinct canonical successors of placing ``e``, and whether some bin overflows."""
    kids: list[tuple[int, ...]] = []
    overflow = False
    for j, load in enumerate(loads):
        if load + e >= t:
            overflow = True
            continue
        new = list(loads)
        new[j] += e
        nxt = tuple(sorted(new, reverse=True))
        if nxt not in kids:
            kids.append(nxt)
    return kids, overflow


class StrategyRecorder:
    """Second pass: rebuild the adversary's winning strategy node by node."""

    def __init__(self, ctx: SearchContext):
        self.ctx = ctx
        self.params = ctx.params
        self.memo: dict[tuple, StrategyTree] = {}

    def _node(self, loads, items: ItemMultiset, e: int) -> tuple[StrategyTree, list]:
        kids, overflow = placements(loads, e, self.params.t)
        cert = None
        if overflow:
            cert = find_packing(items.with_items(e), self.params)
            if cert is None:
                raise RecorderError(f"no packing for {items.with_items(e)} at {loads}")
        node = StrategyTree(tuple(loads), items, [e], cert)
        self.memo[node.key()] = node
        return node, kids

    def forced(self, loads, items: ItemMultiset, e: int, remaining: int) -> StrategyTree:
        """Replay a run of identical items that overflows within ``remaining`` steps."""
        key = (tuple(loads), items.key())
        if key in self.memo:
            return self.memo[key]
        node, kids = self._node(loads, items, e)
        if kids and remaining <= 1:
            raise RecorderError(f"forced run of {e} does not overflow from {loads}")
        after = items.with_items(e)
        for kid in kids:
            node.children[kid] = self.forced(kid, after, e, remaining - 1)
        return node

    def five_nine(self, c: BinConfiguration, min_item: int) -> StrategyTree:
        key = (c.loads, c.items.key())
        if key in self.memo:
            return self.memo[key]
        size, copies = five_nine_move(c, self.params, self.ctx.tables, self.ctx.feas_cache, min_item)
        if size == 0:
            raise RecorderError(f"five/nine recipe stalls at {c.loads}")
        if size != 5:
            return self.forced(c.loads, c.items, size, copies)
        node, kids = self._node(c.loads, c.items, 5)
        after = c.items.with_items(5)
        for kid in kids:
            node.children[kid] = self.five_nine(BinConfiguration(kid, after, 5), 0)
        return node

    def record(self, c: BinConfiguration, prev_y: Optional[int] = None) -> StrategyTree:
        key = (c.loads, c.items.key())
        if key in self.memo:
            return self.memo[key]
        ctx, p = self.ctx, self.params
        min_item = ctx.min_item(c)
        h = ctx.heuristics
        if h.large_item and c.loads[0] >= p.t - p.g:
            w = large_item_heuristic(c, p, ctx.tables, ctx.feas_cache, 1)
            if w is not None:
                return self.forced(c.loads, c.items, w.forced_items[0], len(w.forced_items))
        if h.five_nine and five_nine_gate(np.asarray(c.loads, dtype=np.int64), p.m, p.t, p.g):
            if five_nine_raw_ok(c, ctx, 1):
                return self.five_nine(c, 1)
        y = ctx.max_feasible(c, prev_y)
        sizes = range(y, min_item - 1, -1) if ctx.item_order == "desc" else range(min_item, y + 1)
        track = not ctx.full_generality
        for e in sizes:
            if ctx.run_alg(c, e, y) == ADV:
                break
        else:
            raise RecorderError(f"no winning item at {c.loads} with items {c.items}")
        node, kids = self._node(c.loads, c.items, e)
        after = c.items.with_items(e)
        for kid in kids:
            child = BinConfiguration(kid, after, e if track else None)
            node.children[kid] = self.record(child, y)
        return node


def five_nine_raw_ok(c: BinConfiguration, ctx: SearchContext, min_item: int) -> bool:
    from .pruning import five_nine_heuristic

    return five_nine_heuristic(c, ctx.params, ctx.tables, ctx.feas_cache, min_item) is not None


def record_strategy(starts: Sequence[BinConfiguration], ctx: SearchContext,
                    prefix: Sequence[int] = ()) -> StrategyTree:
    """Record the winning strategy below every start configuration.

    With an initial prefix the recorded tree begins at the empty
    configuration and sends the prefix items explicitly.
    """
    saved = ctx.two_sided_cache
    ctx.two_sided_cache = True
    try:
        rec = StrategyRecorder(ctx)
        for c in starts:
            rec.record(c)
        if not prefix:
            return rec.memo[(starts[0].loads, starts[0].items.key())]
        return _prefix_tree(ctx.params, prefix, rec, ctx)
    finally:
        ctx.two_sided_cache = saved


def _prefix_tree(params: GameParams, prefix: Sequence[int], rec: StrategyRecorder,
                 ctx: SearchContext) -> StrategyTree:
    def build(loads, items: ItemMultiset, depth: int) -> StrategyTree:
        key = (tuple(loads), items.key())
        if depth == len(prefix):
            return rec.memo[key]
        if key in rec.memo:
            return rec.memo[key]
        e = prefix[depth]
        node, kids = rec._node(loads, items, e)
        after = items.with_items(e)
        for kid in kids:
            node.children[kid] = build(kid, after, depth + 1)
        return node

    return build((0,) * params.m, ItemMultiset(params.g), 0)


# --- drivers --------------------------------------------------------------

@dataclass
class SearchResult:
    found: bool
    tree: Optional[StrategyTree] = None
    monotonicity: Optional[int] = None
    stats: dict[str, int] = field(default_factory=dict)
    starts: int = 1
    # False when a time limit stopped the run before a verdict
    complete: bool = True


@contextmanager
def time_limit(ctx: SearchContext, seconds: Optional[float]):
    """Raise the abort flag of ``ctx`` once ``seconds`` have passed."""
    ctx.abort[:] = 0
    if seconds is None:
        yield
        return
    timer = threading.Timer(seconds, ctx.abort.fill, (1,))
    timer.daemon = True
    timer.start()
    try:
        yield
    finally:
        timer.cancel()


def apply_initial_strategy(params: GameParams, prefix: Sequence[int],
                           track_last: bool = False) -> list[BinConfiguration]:
    """All canonical configurations after the adversary sends ``prefix``.

    The algorithm may answer each item on any bin that stays below t.
    Raises when the prefix is not packable.
    """
    for e in prefix:
        if not 1 <= e <= params.g:
            raise StructureError(f"prefix item {e} outside 1..{params.g}")
    if prefix and find_packing(list(prefix), params) is None:
        raise StructureError(f"prefix {list(prefix)} cannot be packed into {params.m} bins of {params.g}")
    frontier = {(0,) * params.m}
    for e in prefix:
        nxt: set[tuple[int, ...]] = set()
        for loads in frontier:
            kids, _ = placements(loads, e, params.t)
            nxt.update(kids)
        frontier = nxt
    items = ItemMultiset(params.g, prefix)
    # the restriction is measured from the first item after the prefix,
    # so that item may be any size
    last = 0 if track_last else None
    return [BinConfiguration(loads, items, last) for loads in sorted(frontier, reverse=True)]


def sequential(params: GameParams, ctx: SearchContext, start: Optional[Sequence[int]] = None,
               record: bool = True, limit: Optional[float] = None) -> SearchResult:
    """Evaluate from the empty configuration, or from every configuration after a prefix.

    ``found`` is true when the adversary wins all of them. With ``limit``
    (seconds) an unfinished run returns ``complete=False``.
    """
    try:
        with time_limit(ctx, limit):
            return _sequential(params, ctx, start, record)
    except SearchAborted:
        log.info("time limit of %ss reached", limit)
        return SearchResult(False, None, ctx.monotonicity, ctx.stat_dict(), complete=False)


def _sequential(params: GameParams, ctx: SearchContext, start: Optional[Sequence[int]],
                record: bool) -> SearchResult:
    prefix = list(start or [])
    starts = apply_initial_strategy(params, prefix, track_last=not ctx.full_generality)
    if not starts:
        # the prefix already forces an overflow on every answer
        tree = _prefix_tree(params, prefix, StrategyRecorder(ctx), ctx) if record else None
        return SearchResult(True, tree, ctx.monotonicity, ctx.stat_dict(), 0)
    for i, c in enumerate(starts):
        if len(starts) > 1:
            log.info("start configuration %d of %d: %s", i + 1, len(starts), c.loads)
        if eval_adv(c, ctx) is Winner.ALGORITHM:
            return SearchResult(False, None, ctx.monotonicity, ctx.stat_dict(), len(starts))
    tree = record_strategy(starts, ctx, prefix) if record else None
    return SearchResult(True, tree, ctx.monotonicity, ctx.stat_dict(), len(starts))


def iterate_monotonicity(params: GameParams, ctx: SearchContext,
                         start: Optional[Sequence[int]] = None, record: bool = True,
                         ks: Optional[Iterable[int]] = None) -> SearchResult:
    """Try k = 0, 1, ... up to full generality; stop at the first winning k."""
    last = SearchResult(False)
    for k in (ks if ks is not None else range(params.g)):
        ctx.set_monotonicity(k)
        log.info("monotonicity %d", k)
        last = sequential(params, ctx, start, record)
        if last.found:
            last.monotonicity = k
            return last
    last.monotonicity = None
    return last


__all__ = [
    "SearchContext", "HeuristicSwitches", "Winner", "StrategyTree", "SearchResult",
    "eval_adv", "eval_alg", "sequential", "iterate_monotonicity", "apply_initial_strategy",
    "record_strategy", "placements", "start_configuration", "time_limit", "SearchAborted",
]

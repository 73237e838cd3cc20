"""Zobrist hashing of configurations and the fixed-size lossy caches.

A configuration hash is the XOR of one random key per (bin position, load)
pair and one per (item size, frequency) pair, zero frequencies included.
Under a monotonicity restriction a key for the last item is mixed in too.

Caches are flat ``uint64`` arrays. Each word packs the top 63 bits of a
hash with one result bit; the slot address is a prefix of the hash, and a
collision probes a short fixed window before evicting a random slot of it.
A single aligned numpy store updates a word, so threads sharing a cache
never see torn entries.
"""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np
from numba import njit

from .core import BinConfiguration, GameParams, StructureError

DEFAULT_SEED = 0x5EED_B175
DEFAULT_HASH_BITS = 25
DEFAULT_PROBE = 4
DP_DEDUP_BITS = 12


class ZobristTables:
    """Random keys for every (position, load) and (size, frequency) pair.

    ``load_keys[j, l]`` covers sorted position ``j`` (0 = largest) and load
    ``l < t``. ``item_keys[s, f]`` covers size ``s`` in ``1..g`` (row 0
    unused) and frequency ``f`` in ``0..m*g``. ``last_keys`` and
    ``dp_keys`` are extra tables for the monotone state extension and the
    knapsack tuple dedup.
    """

    def __init__(self, params: GameParams, seed: int = DEFAULT_SEED):
        self.params = params
        self.seed = seed
        m, t, g = params.m, params.t, params.g
        rng = np.random.default_rng(seed)

        def draw(*shape):
            return rng.integers(1, 2**64, size=shape, dtype=np.uint64, endpoint=False)

        self.load_keys = draw(m, t)
        self.item_keys = draw(g + 1, m * g + 1)
        self.item_keys[0, :] = 0
        self.last_keys = draw(g + 1)
        self.dp_keys = draw(m, g + 1)

    def load_key(self, position: int, load: int) -> int:
        if not (0 <= position < self.params.m and 0 <= load < self.params.t):
            raise StructureError(f"load pair ({position}, {load}) out of range")
        return int(self.load_keys[position, load])

    def item_key(self, size: int, freq: int) -> int:
        if not (1 <= size <= self.params.g and 0 <= freq <= self.params.m * self.params.g):
            raise StructureError(f"item pair ({size}, {freq}) out of range")
        return int(self.item_keys[size, freq])


def hash_loads(tables: ZobristTables, loads) -> int:
    h = 0
    for j, load in enumerate(loads):
        h ^= tables.load_key(j, load)
    return h


def hash_items(tables: ZobristTables, counts) -> int:
    h = 0
    for s in range(1, tables.params.g + 1):
        h ^= tables.item_key(s, counts[s])
    return h


def hash_config(tables: ZobristTables, c: BinConfiguration) -> int:
    if len(c.loads) != tables.params.m:
        raise StructureError(f"expected {tables.params.m} loads, got {len(c.loads)}")
    h = hash_loads(tables, c.loads) ^ hash_items(tables, c.items.counts)
    if c.last_item is not None:
        h ^= int(tables.last_keys[c.last_item])
    return h


def hash_update(tables: ZobristTables, old_hash: int,
                changed_pairs: Iterable[tuple[str, int, int]]) -> int:
    """XOR the keys of every pair whose membership flipped into ``old_hash``.

    Pairs are ``("load", position, load)``, ``("item", size, freq)`` or
    ``("last", size, 0)``.
    """
    h = old_hash
    for kind, a, b in changed_pairs:
        if kind == "load":
            h ^= tables.load_key(a, b)
        elif kind == "item":
            h ^= tables.item_key(a, b)
        elif kind == "last":
            h ^= int(tables.last_keys[a])
        else:
            raise StructureError(f"unknown key matrix {kind!r}")
    return h


def placement_delta(c: BinConfiguration, e: int, b: int) -> list[tuple[str, int, int]]:
    """The flipped pairs when ``e`` goes onto sorted position ``b`` of ``c``.

    At most O(m) load pairs change (the positions the grown bin moves over),
    plus two item pairs.
    """
    old = c.loads
    new = list(old)
    new[b] += e
    new.sort(reverse=True)
    pairs: list[tuple[str, int, int]] = []
    for j, (x, y) in enumerate(zip(old, new)):
        if x != y:
            pairs.append(("load", j, x))
            pairs.append(("load", j, y))
    f = c.items.counts[e]
    pairs.append(("item", e, f))
    pairs.append(("item", e, f + 1))
    if c.last_item is not None and c.last_item != e:
        pairs.append(("last", c.last_item, 0))
        pairs.append(("last", e, 0))
    return pairs


# --- lossy cache ---------------------------------------------------------

@njit(cache=True, nogil=True)
def _payload_word(h, bit):
    payload = np.uint64(h) >> np.uint64(1)
    if payload == np.uint64(0):
        payload = np.uint64(1)
    return (payload << np.uint64(1)) | np.uint64(bit)


@njit(cache=True, nogil=True)
def cache_lookup_raw(table, shift, probe, h):
    """Return the cached bit for ``h`` or -1 when absent."""
    size = table.shape[0]
    want = _payload_word(h, 0)
    pos = np.int64(np.uint64(h) >> np.uint64(shift))
    for i in range(probe):
        w = table[(pos + i) % size]
        if w == np.uint64(0):
            continue
        if (w | np.uint64(1)) == (want | np.uint64(1)):
            return np.int64(w & np.uint64(1))
    return np.int64(-1)


@njit(cache=True, nogil=True)
def cache_insert_raw(table, shift, probe, h, bit):
    size = table.shape[0]
    word = _payload_word(h, bit)
    pos = np.int64(np.uint64(h) >> np.uint64(shift))
    free = -1
    for i in range(probe):
        slot = (pos + i) % size
        w = table[slot]
        if w == np.uint64(0):
            if free < 0:
                free = slot
        elif (w | np.uint64(1)) == (word | np.uint64(1)):
            table[slot] = word
            return
    if free < 0:
        free = (pos + np.random.randint(0, probe)) % size
    table[free] = word


@njit(cache=True)
def seed_kernel_rng(seed):
    np.random.seed(seed)


class LossyCache:
    """Fixed-size hash -> bit table with linear probing and random eviction.

    Used both for evaluated configurations and for feasibility facts about
    item multisets; only the key differs.
    """

    def __init__(self, address_bits: int = DEFAULT_HASH_BITS, probe_limit: int = DEFAULT_PROBE,
                 table: Optional[np.ndarray] = None):
        if not 1 <= address_bits <= 40:
            raise StructureError(f"address_bits must be in 1..40, got {address_bits}")
        self.address_bits = address_bits
        self.probe_limit = probe_limit
        self.shift = 64 - address_bits
        if table is None:
            table = np.zeros(1 << address_bits, dtype=np.uint64)
        self.table = table

    def insert(self, h: int, bit: int) -> None:
        cache_insert_raw(self.table, self.shift, self.probe_limit, np.uint64(h), int(bit))

    def lookup(self, h: int) -> Optional[int]:
        r = cache_lookup_raw(self.table, self.shift, self.probe_limit, np.uint64(h))
        return None if r < 0 else int(r)

    def clear(self) -> None:
        self.table[:] = 0

    def occupancy(self) -> int:
        return int(np.count_nonzero(self.table))


class StateCache(LossyCache):
    """Evaluated configurations: bit 1 = algorithm wins, 0 = adversary wins."""


class FeasibilityCache(LossyCache):
    """Item multisets: bit 1 = packable into m bins of capacity g."""


def make_caches(address_bits: int = DEFAULT_HASH_BITS, probe_limit: int = DEFAULT_PROBE,
                feasibility_bits: Optional[int] = None) -> tuple[StateCache, FeasibilityCache]:
    fbits = address_bits if feasibility_bits is None else feasibility_bits
    return StateCache(address_bits, probe_limit), FeasibilityCache(fbits, probe_limit)

import random

import numpy as np
import pytest

from binstretch.core import BinConfiguration, GameParams, StructureError, add_item
from binstretch.hashing import (
    FeasibilityCache, LossyCache, StateCache, ZobristTables, hash_config, hash_update,
    make_caches, placement_delta,
)


def test_distinct_configurations_hash_differently():
    p = GameParams(3, 19, 14)
    z = ZobristTables(p)
    a = BinConfiguration.from_items((5, 4, 2), [1, 1, 2, 3, 4], 14)
    b = BinConfiguration.from_items((5, 4, 2), [1, 2, 2, 2, 4], 14)
    assert hash_config(z, a) != hash_config(z, b)


def test_loads_order_is_canonical():
    z = ZobristTables(GameParams(3, 19, 14))
    a = BinConfiguration.from_items((4, 5, 2), [1, 1, 2, 3, 4], 14)
    b = BinConfiguration.from_items((5, 4, 2), [4, 3, 2, 1, 1], 14)
    assert hash_config(z, a) == hash_config(z, b)


def test_wrong_length_raises():
    z = ZobristTables(GameParams(3, 19, 14))
    c = BinConfiguration.from_items((5, 4, 2, 0), [5, 4, 2], 14)
    with pytest.raises(StructureError):
        hash_config(z, c)


def test_unknown_key_matrix_raises():
    z = ZobristTables(GameParams(2, 4, 3))
    with pytest.raises(StructureError):
        hash_update(z, 0, [("bogus", 0, 0)])


def test_seed_changes_keys_and_is_reproducible():
    p = GameParams(3, 8, 6)
    a, b, c = ZobristTables(p, 1), ZobristTables(p, 1), ZobristTables(p, 2)
    assert np.array_equal(a.load_keys, b.load_keys)
    assert not np.array_equal(a.load_keys, c.load_keys)


@pytest.mark.parametrize("track", [False, True])
def test_incremental_equals_scratch_on_random_walks(track):
    p = GameParams(4, 12, 9)
    z = ZobristTables(p, seed=7)
    rng = random.Random(11)
    walks = 0
    while walks < 5000:
        c = BinConfiguration.empty(p, track_last=track)
        h = hash_config(z, c)
        for _ in range(rng.randint(1, 12)):
            options = [(e, b) for e in range(1, p.g + 1) for b in range(p.m)
                       if c.loads[b] + e < p.t and c.items.total + e <= p.m * p.g]
            if not options:
                break
            e, b = rng.choice(options)
            h = hash_update(z, h, placement_delta(c, e, b))
            c = add_item(c, e, b)
            assert h == hash_config(z, c)
        walks += 1


def test_cache_roundtrip_and_overwrite():
    cache = LossyCache(address_bits=10)
    h = 0xDEADBEEF12345678
    assert cache.lookup(h) is None
    cache.insert(h, 1)
    assert cache.lookup(h) == 1
    cache.insert(h, 0)
    assert cache.lookup(h) == 0
    assert cache.occupancy() == 1
    cache.clear()
    assert cache.lookup(h) is None


def test_cache_never_returns_a_wrong_bit_under_pressure():
    cache = StateCache(address_bits=6, probe_limit=4)
    rng = random.Random(3)
    truth = {}
    for _ in range(5000):
        h = rng.getrandbits(64) | 2
        bit = rng.getrandbits(1)
        truth[h] = bit
        cache.insert(h, bit)
    for h, bit in truth.items():
        got = cache.lookup(h)
        assert got is None or got == bit


def test_probe_window_wraps_around_the_table():
    cache = FeasibilityCache(address_bits=4, probe_limit=4)
    last_slot = 0xF << 60
    for i in range(4):
        cache.insert(last_slot | (i << 8), 1)
    assert all(cache.lookup(last_slot | (i << 8)) == 1 for i in range(4))
    assert cache.table[0] != 0


def test_bad_address_bits():
    with pytest.raises(StructureError):
        LossyCache(address_bits=0)


def test_make_caches_sizes():
    s, f = make_caches(8, 4, feasibility_bits=9)
    assert len(s.table) == 256 and len(f.table) == 512

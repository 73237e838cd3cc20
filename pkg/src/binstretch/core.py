"""Shared vocabulary: game parameters, item multisets, bin configurations.

Everything here is a small value type. The search kernels work on raw
numpy arrays instead, but they use the same conventions: loads are kept
sorted non-increasing, and ``counts[s]`` is the number of items of size
``s`` (index 0 unused).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence


class StructureError(ValueError):
    """Raised when a value violates a structural invariant (wrong length, bad index...)."""


@dataclass(frozen=True)
class GameParams:
    """The triple (m, t, g): bins, adversary target load, offline guarantee."""

    m: int
    t: int
    g: int

    def __post_init__(self) -> None:
        if self.m < 1:
            raise StructureError(f"need at least one bin, got m={self.m}")
        if self.g < 1:
            raise StructureError(f"guarantee must be positive, got g={self.g}")
        if self.t < 2:
            raise StructureError(f"target must be at least 2, got t={self.t}")

    @property
    def alpha(self) -> int:
        """Slack the algorithm may use on top of g without losing."""
        return self.t - 1 - self.g

    @property
    def depth_bound(self) -> int:
        return self.m * self.g + 2

    def __str__(self) -> str:
        return f"m={self.m} t={self.t} g={self.g}"


class ItemMultiset:
    """Multiset of item sizes in ``1..g`` stored as a counts array."""

    __slots__ = ("g", "counts", "total")

    def __init__(self, g: int, items: Iterable[int] = ()):
        self.g = g
        self.counts = [0] * (g + 1)
        self.total = 0
        for s in items:
            self.add(s)

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> "ItemMultiset":
        ms = cls(len(counts) - 1)
        if counts[0] != 0:
            raise StructureError("counts[0] must be zero")
        ms.counts = [int(c) for c in counts]
        ms.total = sum(s * c for s, c in enumerate(ms.counts))
        return ms

    def add(self, size: int, times: int = 1) -> None:
        if not 1 <= size <= self.g:
            raise StructureError(f"item size {size} outside 1..{self.g}")
        self.counts[size] += times
        self.total += size * times

    def remove(self, size: int) -> None:
        if not 1 <= size <= self.g or self.counts[size] == 0:
            raise StructureError(f"no item of size {size} to remove")
        self.counts[size] -= 1
        self.total -= size

    def copy(self) -> "ItemMultiset":
        ms = ItemMultiset(self.g)
        ms.counts = list(self.counts)
        ms.total = self.total
        return ms

    def with_items(self, *sizes: int) -> "ItemMultiset":
        ms = self.copy()
        for s in sizes:
            ms.add(s)
        return ms

    def items(self, descending: bool = True) -> list[int]:
        sizes = range(self.g, 0, -1) if descending else range(1, self.g + 1)
        return [s for s in sizes for _ in range(self.counts[s])]

    def key(self) -> tuple[int, ...]:
        return tuple(self.counts)

    def __len__(self) -> int:
        return sum(self.counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ItemMultiset):
            return NotImplemented
        return self.counts == other.counts

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"ItemMultiset({self.items(descending=False)})"


def canonicalize(loads: Sequence[int], m: Optional[int] = None) -> tuple[int, ...]:
    """Sort loads non-increasing; optionally check there are exactly ``m`` of them."""
    if m is not None and len(loads) != m:
        raise StructureError(f"expected {m} loads, got {len(loads)}")
    if any(x < 0 for x in loads):
        raise StructureError(f"negative load in {list(loads)}")
    return tuple(sorted(loads, reverse=True))


@dataclass(frozen=True)
class BinConfiguration:
    """A state before the adversary moves: sorted loads, items sent so far.

    ``last_item`` is only set when the search runs under a monotonicity
    restriction; two configurations with different last items are then
    different game states.
    """

    loads: tuple[int, ...]
    items: ItemMultiset = field(compare=True)
    last_item: Optional[int] = None

    @classmethod
    def empty(cls, params: GameParams, track_last: bool = False) -> "BinConfiguration":
        return cls((0,) * params.m, ItemMultiset(params.g), 0 if track_last else None)

    @classmethod
    def from_items(cls, loads: Sequence[int], items: Iterable[int], g: int,
                   last_item: Optional[int] = None) -> "BinConfiguration":
        ms = ItemMultiset(g, items)
        loads = canonicalize(loads)
        if sum(loads) != ms.total:
            raise StructureError(f"loads {loads} do not sum to item volume {ms.total}")
        return cls(loads, ms, last_item)

    @property
    def m(self) -> int:
        return len(self.loads)

    def key(self) -> tuple:
        return (self.loads, self.items.key(), self.last_item)

    def __hash__(self) -> int:
        return hash(self.key())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinConfiguration):
            return NotImplemented
        return self.key() == other.key()


def add_item(c: BinConfiguration, e: int, b: int) -> BinConfiguration:
    """Place an item of size ``e`` on the bin at sorted position ``b``.

    The result may have a load >= t; callers decide whether that is terminal.
    """
    if not 0 <= b < c.m:
        raise StructureError(f"bin index {b} outside 0..{c.m - 1}")
    if e < 1:
        raise StructureError(f"item size must be positive, got {e}")
    loads = list(c.loads)
    loads[b] += e
    last = e if c.last_item is not None else None
    return BinConfiguration(canonicalize(loads), c.items.with_items(e), last)


def max_load(c: BinConfiguration) -> int:
    return c.loads[0] if c.loads else 0


@dataclass(frozen=True)
class PackingCertificate:
    """An explicit packing: one list of item sizes per bin."""

    bins: tuple[tuple[int, ...], ...]

    @classmethod
    def of(cls, bins: Iterable[Iterable[int]]) -> "PackingCertificate":
        return cls(tuple(tuple(b) for b in bins))

    def bin_sums(self) -> list[int]:
        return [sum(b) for b in self.bins]

    def item_counter(self) -> Counter:
        return Counter(s for b in self.bins for s in b)

    def __str__(self) -> str:
        return "[" + "; ".join("{" + ",".join(map(str, b)) + "}" for b in self.bins) + "]"


def validate_packing(items: ItemMultiset | Iterable[int], p: PackingCertificate,
                     params: GameParams) -> bool:
    """True iff ``p`` packs at least ``items`` into exactly m bins of capacity g."""
    if len(p.bins) != params.m:
        return False
    if any(s < 1 for b in p.bins for s in b):
        return False
    if any(total > params.g for total in p.bin_sums()):
        return False
    packed = p.item_counter()
    if isinstance(items, ItemMultiset):
        need = {s: c for s, c in enumerate(items.counts) if c}
    else:
        need = Counter(items)
    return all(packed[s] >= c for s, c in need.items())

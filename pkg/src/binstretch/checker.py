"""Independent verification of an adversary strategy DAG.

The checker only uses the value types from :mod:`binstretch.core` and the
DAG container from :mod:`binstretch.dag`. Nothing from the search side
is consulted, so an accepted DAG is a proof on its own: from the empty configuration, whatever the algorithm does, some
bin reaches load t while the items sent so far still fit into m bins of
capacity g.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

from .core import GameParams, ItemMultiset, PackingCertificate, validate_packing
from .dag import StrategyDag

REASONS = (
    "missing-placement", "bad-certificate", "item-mismatch", "cycle",
    "overflow-without-certificate", "load-mismatch", "depth-exceeded", "root-not-zero",
    "item-not-positive",
)


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    node: Optional[str] = None
    reason: Optional[str] = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.accepted

    def __str__(self) -> str:
        if self.accepted:
            return "accepted"
        return f"rejected at node {self.node}: {self.reason} ({self.detail})"


ACCEPTED = Verdict(True)


def _canon(loads: Sequence[int]) -> tuple[int, ...]:
    return tuple(sorted(loads, reverse=True))


def expand_compressed(loads: Sequence[int], derived_items: ItemMultiset, seq: Sequence[int],
                      cert: Optional[PackingCertificate], params: GameParams) -> bool:
    """Does sending ``seq`` one item at a time overflow every placement path?

    ``cert`` must pack ``derived_items`` plus all of ``seq``; it then also
    covers every shorter prefix. The items of ``seq`` are identical in
    practice, so the memo keys on (canonical loads, items still to send).
    """
    seq = tuple(seq)
    if cert is None or not validate_packing(derived_items.with_items(*seq), cert, params):
        return False
    t = params.t

    @lru_cache(maxsize=None)
    def forced(state: tuple[int, ...], pos: int) -> bool:
        if pos == len(seq):
            return False
        e = seq[pos]
        if e < 1:
            return False
        for b in range(len(state)):
            if state[b] + e >= t:
                continue
            grown = list(state)
            grown[b] += e
            if not forced(_canon(grown), pos + 1):
                return False
        return True

    return forced(_canon(loads), 0)


def _reject(dag: StrategyDag, i: int, reason: str, detail: str) -> Verdict:
    node = dag.nodes[i]
    return Verdict(False, node.name if node.name is not None else f"n{i}", reason, detail)


def check(dag: StrategyDag, params: Optional[GameParams] = None) -> Verdict:
    """Accept iff the DAG proves that the adversary wins the game.

    Rules, checked node by node in topological order:

    - the root starts empty
    - items derived along different in-edges agree
    - next items lie in 1..g
    - every bin either overflows, and then a packing of the items plus the
      next item is attached, or has an edge to the matching successor
    - compressed nodes force an overflow
    - no path sends more than m*g + 2 items
    """
    params = params or dag.params
    m, t, g = params.m, params.t, params.g
    n = len(dag.nodes)
    if n == 0:
        return Verdict(False, None, "root-not-zero", "empty graph")
    for i, node in enumerate(dag.nodes):
        if any(c < 0 or c >= n for c in node.children):
            return _reject(dag, i, "missing-placement", "edge to a node that does not exist")
    # Kahn's algorithm; any leftover node sits on a cycle
    indeg = [0] * n
    for node in dag.nodes:
        for c in node.children:
            indeg[c] += 1
    queue = [i for i in range(n) if indeg[i] == 0]
    order = []
    while queue:
        i = queue.pop()
        order.append(i)
        for c in dag.nodes[i].children:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if len(order) < n:
        stuck = next(i for i in range(n) if indeg[i] > 0)
        return _reject(dag, stuck, "cycle", "node lies on a directed cycle")
    root = dag.root
    root_node = dag.nodes[root]
    if len(root_node.loads) != m or any(root_node.loads):
        return _reject(dag, root, "root-not-zero", f"root loads {root_node.loads}")
    limit = m * g + 2
    derived: list[Optional[ItemMultiset]] = [None] * n
    moves: list[int] = [0] * n
    derived[root] = ItemMultiset(g)
    for i in order:
        items = derived[i]
        if items is None:
            # not reachable from the root; it proves nothing and is ignored
            continue
        node = dag.nodes[i]
        loads = tuple(node.loads)
        if len(loads) != m or _canon(loads) != loads or any(x < 0 for x in loads):
            return _reject(dag, i, "load-mismatch", f"loads {loads} are not {m} sorted loads")
        if any(x >= t for x in loads):
            return _reject(dag, i, "load-mismatch", f"loads {loads} already reach {t}")
        if sum(loads) != items.total:
            return _reject(dag, i, "load-mismatch",
                           f"loads sum to {sum(loads)} but derived items sum to {items.total}")
        if not node.next_items or any(e < 1 or e > g for e in node.next_items):
            return _reject(dag, i, "item-not-positive", f"next items {node.next_items}")
        depth = moves[i] + len(node.next_items)
        if depth > limit:
            return _reject(dag, i, "depth-exceeded", f"{depth} items on a path, limit {limit}")
        if len(node.next_items) > 1:
            if node.children:
                return _reject(dag, i, "missing-placement", "compressed node with out-edges")
            if node.certificate is None:
                return _reject(dag, i, "overflow-without-certificate", "compressed node without packing")
            if not validate_packing(items.with_items(*node.next_items), node.certificate, params):
                return _reject(dag, i, "bad-certificate",
                               f"{node.certificate} does not pack the items and {list(node.next_items)}")
            if not expand_compressed(loads, items, node.next_items, node.certificate, params):
                return _reject(dag, i, "missing-placement",
                               f"the algorithm survives {list(node.next_items)}")
            continue
        e = node.next_items[0]
        after = items.with_items(e)
        by_loads: dict[tuple[int, ...], int] = {}
        for c in node.children:
            by_loads.setdefault(_canon(dag.nodes[c].loads), c)
        overflow = False
        for b in range(m):
            if loads[b] + e >= t:
                overflow = True
                continue
            grown = list(loads)
            grown[b] += e
            want = _canon(grown)
            c = by_loads.get(want)
            if c is None:
                return _reject(dag, i, "missing-placement", f"no edge for {e} on bin {b} -> {list(want)}")
        if overflow:
            if node.certificate is None:
                return _reject(dag, i, "overflow-without-certificate", f"{e} overflows but no packing")
            if not validate_packing(after, node.certificate, params):
                return _reject(dag, i, "bad-certificate",
                               f"{node.certificate} does not pack items plus {e}")
        for c in node.children:
            if derived[c] is None:
                derived[c] = after
                moves[c] = depth
            elif derived[c] != after:
                return _reject(dag, c, "item-mismatch", "in-edges derive different items")
            else:
                moves[c] = max(moves[c], depth)
    # children reached only through processed parents are checked above;
    # edges must lead to genuine successors
    for i in order:
        if derived[i] is None:
            continue
        node = dag.nodes[i]
        if len(node.next_items) > 1:
            continue
        e = node.next_items[0]
        for c in node.children:
            child = _canon(dag.nodes[c].loads)
            if not any(node.loads[b] + e < t and _canon(_grow(node.loads, b, e)) == child
                       for b in range(m)):
                return _reject(dag, c, "load-mismatch", f"not a placement of {e} into {node.loads}")
    return ACCEPTED


def _grow(loads: Sequence[int], b: int, e: int) -> list[int]:
    out = list(loads)
    out[b] += e
    return out


__all__ = ["Verdict", "check", "expand_compressed", "REASONS"]

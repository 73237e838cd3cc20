"""Strategy DAGs: hash-consing, last-layer compression and the DOT format.

A recorded strategy is turned into an indexed node table. Nodes with the
same (loads, items) key are merged, so every state appears once. A
subtree in which the adversary keeps sending one item size whatever the
algorithm does is folded into a single node carrying the whole item list
and one packing certificate.

The DOT normal form is one statement per line::

    digraph binstretch {
    bs_m=3;
    bs_t=4;
    bs_g=3;
    n0 [loads="0,0,0",next="1"];
    n1 [loads="3,1,1",next="3",packing="3;3;1,1"];
    n0 -> n1;
    }

Items are never stored. They are derived from the root along the edges,
and every in-edge of a node must derive the same multiset.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .core import GameParams, ItemMultiset, PackingCertificate, StructureError


class DotParseError(ValueError):
    """A DOT file that is not in the normal form; ``line`` is 1-based (0 = whole file)."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line
        self.message = message


@dataclass
class DagNode:
    loads: tuple[int, ...]
    next_items: tuple[int, ...]
    items: Optional[ItemMultiset] = None
    certificate: Optional[PackingCertificate] = None
    children: list[int] = field(default_factory=list)
    name: Optional[str] = None

    @property
    def compressed(self) -> bool:
        return len(self.next_items) > 1

    def key(self) -> tuple:
        return (self.loads, self.items.key() if self.items is not None else None)


@dataclass
class StrategyDag:
    params: GameParams
    nodes: list[DagNode]
    root: int = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def edge_count(self) -> int:
        return sum(len(n.children) for n in self.nodes)

    def copy(self) -> "StrategyDag":
        nodes = [DagNode(n.loads, n.next_items, n.items.copy() if n.items is not None else None,
                         n.certificate, list(n.children), n.name) for n in self.nodes]
        return StrategyDag(self.params, nodes, self.root)

    def topological_order(self) -> Optional[list[int]]:
        """Node indices parents-first, or None if the edges contain a cycle."""
        indeg = [0] * len(self.nodes)
        for n in self.nodes:
            for c in n.children:
                indeg[c] += 1
        queue = deque(i for i, d in enumerate(indeg) if d == 0)
        order = []
        while queue:
            i = queue.popleft()
            order.append(i)
            for c in self.nodes[i].children:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        return order if len(order) == len(self.nodes) else None

    def same_as(self, other: "StrategyDag") -> bool:
        """Structural equality of the parameters and of every node in order."""
        if self.params != other.params or self.root != other.root or len(self) != len(other):
            return False
        for a, b in zip(self.nodes, other.nodes):
            if (a.loads, a.next_items, a.certificate, a.children) != \
                    (b.loads, b.next_items, b.certificate, b.children):
                return False
            if a.items is not None and b.items is not None and a.items != b.items:
                return False
        return True


# --- building -------------------------------------------------------------

def tree_to_dag(tree, params: GameParams) -> StrategyDag:
    """Hash-cons a recorded strategy tree into a DAG (parents before children).

    Two subtrees with equal (loads, items) are merged; if they disagree on
    the item to send the recorder produced an inconsistent tree.
    """
    index: dict[tuple, int] = {}
    nodes: list[DagNode] = []
    # iterative preorder so deep strategies do not hit the recursion limit
    pending: list[tuple] = []

    def intern(t) -> tuple[int, bool]:
        key = (tuple(t.loads), t.items.key())
        got = index.get(key)
        if got is not None:
            if nodes[got].next_items != tuple(t.next_items):
                raise StructureError(
                    f"two subtrees at loads {t.loads} send {nodes[got].next_items} and {t.next_items}")
            return got, False
        index[key] = len(nodes)
        nodes.append(DagNode(tuple(t.loads), tuple(t.next_items), t.items.copy(), t.certificate))
        return len(nodes) - 1, True

    root, _ = intern(tree)
    pending.append((tree, root))
    while pending:
        t, i = pending.pop()
        kids = []
        fresh = []
        for child in t.children.values():
            j, new = intern(child)
            kids.append(j)
            if new:
                fresh.append((child, j))
        nodes[i].children = kids
        pending.extend(reversed(fresh))
    return StrategyDag(params, nodes, root)


def _reachable(dag: StrategyDag) -> StrategyDag:
    """Drop unreachable nodes and renumber in preorder from the root."""
    order: list[int] = []
    seen = set()
    stack = [dag.root]
    while stack:
        i = stack.pop()
        if i in seen:
            continue
        seen.add(i)
        order.append(i)
        stack.extend(reversed([c for c in dag.nodes[i].children if c not in seen]))
    remap = {old: new for new, old in enumerate(order)}
    nodes = []
    for old in order:
        n = dag.nodes[old]
        nodes.append(DagNode(n.loads, n.next_items, n.items, n.certificate,
                             [remap[c] for c in n.children], n.name))
    return StrategyDag(dag.params, nodes, 0)


def compress_last_layer(dag: StrategyDag) -> StrategyDag:
    """Fold every subtree that keeps sending one item size into a single node.

    A node qualifies when it and all its descendants send the same size
    ``e`` one item at a time. The folded node gets ``next_items`` of length
    equal to the longest path in the subtree and the certificate of a
    deepest node, which packs the node's items plus that many copies of e.
    """
    n = len(dag.nodes)
    order = dag.topological_order()
    if order is None:
        raise StructureError("cannot compress a cyclic graph")
    # uniform[i] = (e, depth, deepest node) when the subtree of i only sends e
    uniform: list[Optional[tuple[int, int, int]]] = [None] * n
    for i in reversed(order):
        node = dag.nodes[i]
        if node.compressed:
            uniform[i] = None
            continue
        e = node.next_items[0]
        best = (e, 1, i)
        ok = True
        for c in node.children:
            u = uniform[c]
            if u is None or u[0] != e:
                ok = False
                break
            if u[1] + 1 > best[1]:
                best = (e, u[1] + 1, u[2])
        uniform[i] = best if ok else None
    out = dag.copy()
    changed = False
    for i in range(n):
        u = uniform[i]
        if u is None or u[1] < 2:
            continue
        e, depth, deepest = u
        cert = dag.nodes[deepest].certificate
        if cert is None:
            continue
        node = out.nodes[i]
        node.next_items = (e,) * depth
        node.certificate = cert
        node.children = []
        changed = True
    return _reachable(out) if changed else dag


def decompress(dag: StrategyDag) -> StrategyDag:
    """Unfold compressed nodes back into one node per forced item.

    Every unfolded node reuses the compressed node's certificate, which
    packs at least the items it needs.
    """
    params = dag.params
    nodes = [DagNode(n.loads, n.next_items, n.items, n.certificate, list(n.children), n.name)
             for n in dag.nodes]
    index = {n.key(): i for i, n in enumerate(nodes) if n.items is not None}
    for i in range(len(dag.nodes)):
        node = nodes[i]
        if not node.compressed:
            continue
        seq, cert = node.next_items, node.certificate
        node.next_items = seq[:1]

        def expand(idx: int, remaining: int) -> None:
            cur = nodes[idx]
            e = seq[0]
            kids = []
            for b, load in enumerate(cur.loads):
                if load + e >= params.t:
                    continue
                grown = list(cur.loads)
                grown[b] += e
                loads = tuple(sorted(grown, reverse=True))
                items = cur.items.with_items(e) if cur.items is not None else None
                key = (loads, items.key() if items is not None else None)
                j = index.get(key) if items is not None else None
                if j is None:
                    if remaining <= 1:
                        raise StructureError(f"compressed node at {node.loads} does not force an overflow")
                    j = len(nodes)
                    nodes.append(DagNode(loads, (e,), items, cert))
                    if items is not None:
                        index[key] = j
                    expand(j, remaining - 1)
                if j not in kids:
                    kids.append(j)
            cur.children = kids

        expand(i, len(seq))
    return _reachable(StrategyDag(params, nodes, dag.root))


def derive_items(dag: StrategyDag) -> list[tuple[int, int, int]]:
    """Fill ``items`` on every node by traversal from the root.

    Returns the conflicting edges as (parent, child, ...) triples; an empty
    list means every in-edge derived the same multiset. Nodes not reachable
    from the root keep ``items = None``.
    """
    order = dag.topological_order()
    if order is None:
        raise StructureError("graph has a cycle")
    g = dag.params.g
    derived: list[Optional[ItemMultiset]] = [None] * len(dag.nodes)
    derived[dag.root] = ItemMultiset(g)
    conflicts = []
    for i in order:
        mine = derived[i]
        if mine is None:
            continue
        node = dag.nodes[i]
        e = node.next_items[0] if node.next_items else 0
        if not 1 <= e <= g:
            continue
        after = mine.with_items(e)
        for c in node.children:
            if derived[c] is None:
                derived[c] = after
            elif derived[c] != after:
                conflicts.append((i, c, 0))
    for node, items in zip(dag.nodes, derived):
        node.items = items
    return conflicts


# --- DOT ------------------------------------------------------------------

def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",")) if text else ()


def _packing_text(cert: PackingCertificate) -> str:
    return ";".join(",".join(str(s) for s in b) for b in cert.bins)


def emit_dot(dag: StrategyDag) -> str:
    """Render the DOT normal form: LF line endings, one statement per line."""
    p = dag.params
    lines = ["digraph binstretch {", f"bs_m={p.m};", f"bs_t={p.t};", f"bs_g={p.g};"]
    for i, node in enumerate(dag.nodes):
        attrs = [f'loads="{",".join(map(str, node.loads))}"',
                 f'next="{",".join(map(str, node.next_items))}"']
        if node.certificate is not None:
            attrs.append(f'packing="{_packing_text(node.certificate)}"')
        lines.append(f"n{i} [{','.join(attrs)}];")
    for i, node in enumerate(dag.nodes):
        for c in node.children:
            lines.append(f"n{i} -> n{c};")
    lines.append("}")
    return "\n".join(lines) + "\n"


_ID = r"[A-Za-z_][A-Za-z0-9_]*|\d+"
_GRAPH_ATTR = re.compile(rf"^(bs_[mtg])\s*=\s*\"?(-?\d+)\"?\s*;?$")
_EDGE = re.compile(rf"^({_ID})\s*->\s*({_ID})\s*;?$")
_NODE = re.compile(rf"^({_ID})\s*\[(.*)\]\s*;?$")
_ATTR = re.compile(r'\s*([A-Za-z_]+)\s*=\s*"([^"]*)"\s*(?:,|$)')
_HEADER = re.compile(rf"^(?:strict\s+)?digraph(?:\s+(?:{_ID}|\"[^\"]*\"))?\s*\{{$")


def _parse_attrs(text: str, lineno: int) -> dict[str, str]:
    out: dict[str, str] = {}
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _ATTR.match(text, pos)
        if not m or m.end() == pos:
            raise DotParseError(lineno, f"malformed attribute list near {text[pos:pos + 20]!r}")
        if m.group(1) in out:
            raise DotParseError(lineno, f"duplicate attribute {m.group(1)}")
        out[m.group(1)] = m.group(2)
        pos = m.end()
    return out


def _parse_packing(text: str, lineno: int) -> PackingCertificate:
    try:
        return PackingCertificate(tuple(_ints(b) for b in text.split(";")))
    except ValueError:
        raise DotParseError(lineno, f"malformed packing {text!r}") from None


def parse_dot(text: str, derive: bool = True) -> StrategyDag:
    """Parse the DOT normal form into a DAG with derived items.

    Any malformed input raises :class:`DotParseError` carrying the line
    number of the offending statement (0 when no single line is to blame).
    """
    lines = text.split("\n")
    params: dict[str, int] = {}
    names: dict[str, int] = {}
    nodes: list[DagNode] = []
    node_lines: list[int] = []
    edges: list[tuple[str, str, int]] = []
    state = "header"
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("//") or line.startswith("#"):
            continue
        if state == "header":
            if not _HEADER.match(line):
                raise DotParseError(lineno, "expected 'digraph NAME {'")
            state = "body"
            continue
        if state == "done":
            raise DotParseError(lineno, "content after closing brace")
        if line == "}":
            state = "done"
            continue
        m = _GRAPH_ATTR.match(line)
        if m:
            key = m.group(1)[3:]
            if key in params:
                raise DotParseError(lineno, f"bs_{key} given twice")
            params[key] = int(m.group(2))
            continue
        m = _EDGE.match(line)
        if m:
            edges.append((m.group(1), m.group(2), lineno))
            continue
        m = _NODE.match(line)
        if m:
            name = m.group(1)
            if name in names:
                raise DotParseError(lineno, f"node {name} defined twice")
            attrs = _parse_attrs(m.group(2), lineno)
            unknown = set(attrs) - {"loads", "next", "packing"}
            if unknown:
                raise DotParseError(lineno, f"unknown attribute {sorted(unknown)[0]}")
            if "loads" not in attrs or "next" not in attrs:
                raise DotParseError(lineno, f"node {name} needs loads and next")
            try:
                loads = _ints(attrs["loads"])
                nxt = _ints(attrs["next"])
            except ValueError:
                raise DotParseError(lineno, f"non-integer loads or next on node {name}") from None
            if not nxt:
                raise DotParseError(lineno, f"node {name} has an empty next list")
            cert = _parse_packing(attrs["packing"], lineno) if "packing" in attrs else None
            names[name] = len(nodes)
            nodes.append(DagNode(loads, nxt, None, cert, [], name))
            node_lines.append(lineno)
            continue
        raise DotParseError(lineno, f"unrecognised statement {line[:40]!r}")
    if state == "header":
        raise DotParseError(0, "no digraph found")
    if state != "done":
        raise DotParseError(len(lines), "missing closing brace")
    for key in "mtg":
        if key not in params:
            raise DotParseError(0, f"missing graph attribute bs_{key}")
    try:
        gp = GameParams(params["m"], params["t"], params["g"])
    except StructureError as exc:
        raise DotParseError(0, str(exc)) from None
    for i, node in enumerate(nodes):
        if len(node.loads) != gp.m:
            raise DotParseError(node_lines[i], f"node {node.name} has {len(node.loads)} loads, expected {gp.m}")
        if node.certificate is not None and len(node.certificate.bins) != gp.m:
            raise DotParseError(node_lines[i], f"node {node.name} packing has "
                                               f"{len(node.certificate.bins)} bins, expected {gp.m}")
    edge_line: dict[tuple[int, int], int] = {}
    for a, b, lineno in edges:
        for end in (a, b):
            if end not in names:
                raise DotParseError(lineno, f"edge refers to undefined node {end}")
        i, j = names[a], names[b]
        if j in nodes[i].children:
            raise DotParseError(lineno, f"duplicate edge {a} -> {b}")
        nodes[i].children.append(j)
        edge_line[(i, j)] = lineno
    if not nodes:
        raise DotParseError(0, "no root: the graph has no nodes")
    indeg = [0] * len(nodes)
    for n in nodes:
        for c in n.children:
            indeg[c] += 1
    roots = [i for i, d in enumerate(indeg) if d == 0]
    if not roots:
        raise DotParseError(0, "no root: every node has an in-edge")
    if len(roots) > 1:
        raise DotParseError(node_lines[roots[1]], f"second root {nodes[roots[1]].name}")
    dag = StrategyDag(gp, nodes, roots[0])
    if dag.topological_order() is None:
        raise DotParseError(0, "the graph contains a cycle")
    if derive:
        conflicts = derive_items(dag)
        if conflicts:
            i, j, _ = conflicts[0]
            raise DotParseError(edge_line[(i, j)], f"items derived along {nodes[i].name} -> "
                                                   f"{nodes[j].name} disagree with another in-edge")
    return dag


def read_dot(path) -> StrategyDag:
    with open(path, encoding="ascii") as fh:
        return parse_dot(fh.read())


def write_dot(dag: StrategyDag, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(emit_dot(dag))


# --- statistics -----------------------------------------------------------

@dataclass
class DagStats:
    nodes: int
    edges: int
    depth: int
    compressed: int
    tree_nodes: int

    def as_dict(self) -> dict[str, int]:
        return {"nodes": self.nodes, "edges": self.edges, "depth": self.depth,
                "compressed_nodes": self.compressed, "tree_nodes": self.tree_nodes}


def dag_stats(dag: StrategyDag) -> DagStats:
    """Counts, longest root path (in adversary moves) and unfolded tree size."""
    order = dag.topological_order()
    if order is None:
        raise StructureError("graph has a cycle")
    depth = [0] * len(dag.nodes)
    size = [1] * len(dag.nodes)
    for i in reversed(order):
        node = dag.nodes[i]
        moves = len(node.next_items)
        depth[i] = moves + max((depth[c] for c in node.children), default=0)
        size[i] = 1 + sum(size[c] for c in node.children)
    return DagStats(len(dag.nodes), dag.edge_count(), depth[dag.root],
                    sum(1 for n in dag.nodes if n.compressed), size[dag.root])


def build_dag(tree, params: GameParams, compress: bool = True) -> StrategyDag:
    dag = tree_to_dag(tree, params)
    return compress_last_layer(dag) if compress else dag


__all__ = [
    "DagNode", "StrategyDag", "DotParseError", "DagStats", "tree_to_dag", "compress_last_layer",
    "decompress", "derive_items", "emit_dot", "parse_dot", "read_dot", "write_dot", "dag_stats",
    "build_dag",
]


"""Category hierarchy: a rooted tree over internal nodes and class leaves."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

from .exceptions import (
    CycleDetected,
    DanglingEdge,
    DuplicateNode,
    InputError,
    InvalidParentKind,
    LeafWithChildren,
    MultipleRoots,
    ParseError,
    UnknownNode,
)

INTERNAL = "internal"
SEEN = "seen"
UNSEEN = "unseen"
KINDS = (INTERNAL, SEEN, UNSEEN)


class MultipleParents(InputError):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    label: str
    kind: str

    @property
    def is_leaf_kind(self) -> bool:
        return self.kind != INTERNAL


class Taxonomy:
    """Immutable rooted tree.

    Construct with :meth:`from_edges` (validating) or :func:`parse_taxonomy`.
    Iteration order over node ids is lexicographic everywhere.
    """

    __slots__ = ("_nodes", "_parent", "_children", "_root", "_depth")

    def __init__(self, nodes: Mapping[str, Node], parent: Mapping[str, str], root: str):
        self._nodes = MappingProxyType(dict(sorted(nodes.items())))
        self._parent = MappingProxyType(dict(parent))
        self._root = root
        children: dict[str, list[str]] = {n: [] for n in self._nodes}
        for c, p in self._parent.items():
            children[p].append(c)
        self._children = MappingProxyType({n: tuple(sorted(cs)) for n, cs in children.items()})
        depth = {root: 0}
        queue = deque([root])
        while queue:
            n = queue.popleft()
            for c in self._children[n]:
                depth[c] = depth[n] + 1
                queue.append(c)
        self._depth = MappingProxyType(depth)

    @classmethod
    def from_edges(cls, nodes: Iterable[Node], edges: Iterable[tuple[str, str]]) -> "Taxonomy":
        node_map: dict[str, Node] = {}
        for node in nodes:
            if node.kind not in KINDS:
                raise ParseError(f"node {node.id!r}: unknown kind {node.kind!r}")
            if node.id in node_map:
                raise DuplicateNode(f"duplicate node id {node.id!r}")
            node_map[node.id] = node
        if not node_map:
            raise ParseError("taxonomy has no nodes")

        parent: dict[str, str] = {}
        for p, c in edges:
            for end in (p, c):
                if end not in node_map:
                    raise DanglingEdge(f"edge ({p!r}, {c!r}) references unknown node {end!r}")
            if p == c:
                raise CycleDetected(f"self-loop on {p!r}")
            if c in parent:
                if parent[c] == p:
                    continue
                raise MultipleParents(f"node {c!r} has parents {parent[c]!r} and {p!r}")
            parent[c] = p

        roots = sorted(n for n in node_map if n not in parent)
        if len(roots) > 1:
            raise MultipleRoots(f"parentless nodes: {roots}")
        if not roots:
            raise CycleDetected("every node has a parent; the edges contain a cycle")
        root = roots[0]

        # with one parent per node, anything unreachable from the root sits on a cycle
        reached = {root}
        children: dict[str, list[str]] = {}
        for c, p in parent.items():
            children.setdefault(p, []).append(c)
        queue = deque([root])
        while queue:
            n = queue.popleft()
            for c in children.get(n, ()):
                reached.add(c)
                queue.append(c)
        if len(reached) != len(node_map):
            stuck = sorted(set(node_map) - reached)
            raise CycleDetected(f"nodes not reachable from root {root!r}: {stuck}")

        for p in children:
            if node_map[p].is_leaf_kind:
                raise LeafWithChildren(f"{node_map[p].kind} leaf {p!r} has children")
        return cls(node_map, parent, root)

    # -- queries ---------------------------------------------------------

    @property
    def root(self) -> str:
        return self._root

    @property
    def nodes(self) -> Mapping[str, Node]:
        return self._nodes

    @property
    def edges(self) -> list[tuple[str, str]]:
        return sorted((p, c) for c, p in self._parent.items())

    def __contains__(self, node_id) -> bool:
        return node_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def __iter__(self):
        return iter(self._nodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Taxonomy):
            return NotImplemented
        return (
            self._root == other._root
            and dict(self._nodes) == dict(other._nodes)
            and dict(self._parent) == dict(other._parent)
        )

    def __repr__(self) -> str:
        return f"Taxonomy(root={self._root!r}, n_nodes={len(self)})"

    def __reduce__(self):
        return (Taxonomy, (dict(self._nodes), dict(self._parent), self._root))

    # immutable, so copies can share the instance
    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    def _check(self, n: str) -> None:
        if n not in self._nodes:
            raise UnknownNode(f"unknown node {n!r}")

    def kind(self, n: str) -> str:
        self._check(n)
        return self._nodes[n].kind

    def parent(self, n: str) -> str | None:
        self._check(n)
        return self._parent.get(n)

    def children(self, n: str) -> tuple[str, ...]:
        self._check(n)
        return self._children[n]

    def ancestors(self, n: str) -> list[str]:
        """Strict ancestors of ``n``, root first."""
        self._check(n)
        out = []
        p = self._parent.get(n)
        while p is not None:
            out.append(p)
            p = self._parent.get(p)
        out.reverse()
        return out

    def descendants(self, n: str) -> set[str]:
        self._check(n)
        out: set[str] = set()
        stack = list(self._children[n])
        while stack:
            c = stack.pop()
            out.add(c)
            stack.extend(self._children[c])
        return out

    def depth(self, n: str) -> int:
        self._check(n)
        return self._depth[n]

    def postorder(self) -> list[str]:
        """Children before parents; siblings in lexicographic order."""
        out = []
        stack = [(self._root, False)]
        while stack:
            n, expanded = stack.pop()
            if expanded:
                out.append(n)
                continue
            stack.append((n, True))
            for c in reversed(self._children[n]):
                stack.append((c, False))
        return out

    def nodes_of_kind(self, kind: str) -> list[str]:
        return [n for n, node in self._nodes.items() if node.kind == kind]

    @property
    def seen_leaves(self) -> list[str]:
        return self.nodes_of_kind(SEEN)

    @property
    def unseen_leaves(self) -> list[str]:
        return self.nodes_of_kind(UNSEEN)

    @property
    def internal_nodes(self) -> list[str]:
        return self.nodes_of_kind(INTERNAL)

    # -- derived trees ---------------------------------------------------

    def with_kinds(self, kinds: Mapping[str, str]) -> "Taxonomy":
        """Copy with some leaf kinds reassigned (seen <-> unseen)."""
        nodes = dict(self._nodes)
        for n, k in kinds.items():
            self._check(n)
            if not nodes[n].is_leaf_kind or k not in (SEEN, UNSEEN):
                raise InvalidParentKind(f"cannot set kind of {n!r} to {k!r}")
            nodes[n] = Node(n, nodes[n].label, k)
        return Taxonomy(nodes, self._parent, self._root)

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": node.id, "label": node.label, "kind": node.kind}
                for node in self._nodes.values()
            ],
            "edges": [list(e) for e in self.edges],
        }


def parse_taxonomy(document) -> Taxonomy:
    """Build a validated :class:`Taxonomy` from a JSON string or decoded dict."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"taxonomy is not valid JSON: {exc}") from exc
    if not isinstance(document, dict) or "nodes" not in document:
        raise ParseError("taxonomy document must be an object with 'nodes' and 'edges'")
    try:
        nodes = [
            Node(str(rec["id"]), str(rec.get("label", rec["id"])), str(rec.get("kind", INTERNAL)))
            for rec in document["nodes"]
        ]
        edges = [(str(p), str(c)) for p, c in document.get("edges", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed taxonomy record: {exc}") from exc
    return Taxonomy.from_edges(nodes, edges)


def prune_single_child(t: Taxonomy) -> Taxonomy:
    """Splice out non-root internal nodes that have exactly one child.

    Childless non-root internal nodes carry no classes and are dropped as
    well, so every surviving non-root internal node has at least two
    children. The root always survives.
    """
    nodes = dict(t.nodes)
    parent = {c: t.parent(c) for c in t if c != t.root}
    children = {n: set(t.children(n)) for n in t}
    changed = True
    while changed:
        changed = False
        for n in sorted(nodes):
            if n == t.root or nodes[n].kind != INTERNAL:
                continue
            kids = children[n]
            if len(kids) > 1:
                continue
            p = parent.pop(n)
            children[p].discard(n)
            for c in kids:
                parent[c] = p
                children[p].add(c)
            del nodes[n], children[n]
            changed = True
    return Taxonomy(nodes, parent, t.root)


def attach_unseen(t: Taxonomy, label: str, parent: str, node_id: str | None = None) -> Taxonomy:
    """Return a copy of ``t`` with a new unseen leaf under ``parent``."""
    node_id = label if node_id is None else node_id
    if parent not in t:
        raise UnknownNode(f"unknown parent {parent!r}")
    if t.kind(parent) != INTERNAL:
        raise InvalidParentKind(f"cannot attach under {t.kind(parent)} leaf {parent!r}")
    if node_id in t:
        raise DuplicateNode(f"node {node_id!r} already exists")
    nodes = dict(t.nodes)
    nodes[node_id] = Node(node_id, label, UNSEEN)
    par = {c: t.parent(c) for c in t if c != t.root}
    par[node_id] = parent
    return Taxonomy(nodes, par, t.root)

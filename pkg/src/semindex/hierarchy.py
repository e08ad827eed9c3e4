"""Concept hierarchies: parsing, structure, validation and concept order.

The input format is line based: an optional ``axis <NAME> "<title>"``
header, then one node per line with two spaces of indentation per depth.
A node line is the concept name optionally followed by ``?``-prefixed
annotation tokens that drive the dialog service (question type, skip and
negation permissions). Concept identity is the exact name; the same
concept may appear at many nodes, but never twice under one parent, and
the dependency graph over concepts must stay acyclic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import HierarchyFormatError, UnknownConceptError, UnknownNodeError

_AXIS_HEADER = re.compile(r'^axis\s+(\S+)\s+"([^"]*)"\s*$')

KNOWN_ANNOTATIONS = ("single", "multi", "optional", "negatable")


@dataclass
class HierarchyNode:
    node_id: int
    concept: str
    depth: int
    children: list["HierarchyNode"] = field(default_factory=list)
    question_type: str = "single"  # 'single' | 'multi'
    optional: bool = False
    negatable: bool = False
    default_child: str | None = None
    extra_annotations: tuple[str, ...] = ()

    def annotation_tokens(self) -> tuple[str, ...]:
        """Annotations in canonical order, for serialization."""
        tokens: list[str] = []
        if self.question_type != "single":
            tokens.append(self.question_type)
        if self.optional:
            tokens.append("optional")
        if self.negatable:
            tokens.append("negatable")
        if self.default_child is not None:
            tokens.append(f"default={self.default_child}")
        tokens.extend(self.extra_annotations)
        return tuple(tokens)


class ConceptHierarchy:
    """A parsed hierarchy plus derived lookup tables.

    Treated as immutable after construction; maintenance operations build
    modified copies instead of editing in place.
    """

    def __init__(self, axis: str, title: str, root: HierarchyNode):
        self.axis = axis
        self.title = title
        self.root = root
        nodes: list[HierarchyNode] = []
        parent_ids: dict[int, int | None] = {}

        def walk(node: HierarchyNode, parent: HierarchyNode | None):
            nodes.append(node)
            parent_ids[node.node_id] = None if parent is None else parent.node_id
            for child in node.children:
                walk(child, node)

        walk(root, None)
        self.nodes: tuple[HierarchyNode, ...] = tuple(nodes)
        self._by_id = {n.node_id: n for n in nodes}
        if len(self._by_id) != len(nodes):
            raise ValueError("duplicate node ids")
        self._parent_ids = parent_ids
        self._by_concept: dict[str, list[HierarchyNode]] = {}
        self.first_occurrence: dict[str, int] = {}
        for i, n in enumerate(nodes):
            self._by_concept.setdefault(n.concept, []).append(n)
            self.first_occurrence.setdefault(n.concept, i)

    @property
    def concepts(self) -> tuple[str, ...]:
        """All concepts, ordered by first document-order occurrence."""
        return tuple(sorted(self._by_concept, key=self.first_occurrence.__getitem__))

    def node(self, node_id: int) -> HierarchyNode:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise UnknownNodeError(f"no node with id {node_id}") from None

    def has_node(self, node_id: int) -> bool:
        return node_id in self._by_id

    def parent_of(self, node_id: int) -> HierarchyNode | None:
        pid = self._parent_ids[node_id]
        return None if pid is None else self._by_id[pid]

    def nodes_with_concept(self, concept: str) -> list[HierarchyNode]:
        try:
            return list(self._by_concept[concept])
        except KeyError:
            raise UnknownConceptError(f"unknown concept: {concept!r}") from None

    def has_concept(self, concept: str) -> bool:
        return concept in self._by_concept

    def path_names(self, node_id: int) -> tuple[str, ...]:
        """Concept names from the root down to the node."""
        names: list[str] = []
        node: HierarchyNode | None = self.node(node_id)
        while node is not None:
            names.append(node.concept)
            node = self.parent_of(node.node_id)
        return tuple(reversed(names))

    def ancestor_ids(self, node_id: int) -> set[int]:
        """Ids of the node itself and everything on its path to the root."""
        ids = {node_id}
        node = self.parent_of(node_id)
        while node is not None:
            ids.add(node.node_id)
            node = self.parent_of(node.node_id)
        return ids

    def resolve_path(self, path: tuple[str, ...] | list[str]) -> HierarchyNode | None:
        """Follow concept names from the root; None when the path breaks."""
        if not path or path[0] != self.root.concept:
            return None
        node = self.root
        for name in path[1:]:
            nxt = next((c for c in node.children if c.concept == name), None)
            if nxt is None:
                return None
            node = nxt
        return node


def _parse_node_line(content: str, line_no: int) -> dict:
    chunks = content.split(" ?")
    name = chunks[0].strip()
    if not name:
        raise HierarchyFormatError("empty concept name", line_no)
    props: dict = {
        "concept": name,
        "question_type": "single",
        "optional": False,
        "negatable": False,
        "default_child": None,
        "extra": [],
    }
    for chunk in chunks[1:]:
        token = chunk.strip()
        if not token:
            raise HierarchyFormatError("empty annotation", line_no)
        if token in ("single", "multi"):
            props["question_type"] = token
        elif token == "optional":
            props["optional"] = True
        elif token == "negatable":
            props["negatable"] = True
        elif token.startswith("default="):
            props["default_child"] = token[len("default="):]
        else:
            # unknown annotations ride along untouched
            props["extra"].append(token)
    return props


def parse_hierarchy(text: str) -> ConceptHierarchy:
    """Parse the line-based input format. Structural validation (sibling
    rule, dependency cycles) is a separate step, see validate()."""
    axis: str | None = None
    title: str | None = None
    root: HierarchyNode | None = None
    stack: list[HierarchyNode] = []
    next_id = 0

    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        if "\t" in raw[: len(raw) - len(raw.lstrip())]:
            raise HierarchyFormatError("tabs are not allowed in indentation", line_no)
        header = _AXIS_HEADER.match(raw)
        if header is not None:
            if root is not None:
                raise HierarchyFormatError("axis header must precede all nodes", line_no)
            if axis is not None:
                raise HierarchyFormatError("duplicate axis header", line_no)
            axis, title = header.group(1), header.group(2)
            continue
        indent = len(raw) - len(raw.lstrip(" "))
        if indent % 2 != 0:
            raise HierarchyFormatError(f"odd indentation of {indent} spaces", line_no)
        depth = indent // 2
        props = _parse_node_line(raw.strip(), line_no)
        node = HierarchyNode(
            node_id=next_id,
            concept=props["concept"],
            depth=depth,
            question_type=props["question_type"],
            optional=props["optional"],
            negatable=props["negatable"],
            default_child=props["default_child"],
            extra_annotations=tuple(props["extra"]),
        )
        next_id += 1
        if depth == 0:
            if root is not None:
                raise HierarchyFormatError("more than one root node", line_no)
            root = node
            stack = [node]
            continue
        if root is None:
            raise HierarchyFormatError("first node must not be indented", line_no)
        if depth > stack[-1].depth + 1:
            raise HierarchyFormatError(
                f"indentation jumps from depth {stack[-1].depth} to {depth}", line_no
            )
        while stack[-1].depth >= depth:
            stack.pop()
        stack[-1].children.append(node)
        stack.append(node)

    if root is None:
        raise HierarchyFormatError("empty document", 1)
    return ConceptHierarchy(axis=axis or "A", title=title or root.concept, root=root)


@dataclass(frozen=True)
class SiblingViolation:
    parent_path: tuple[str, ...]
    concept: str

    def __str__(self) -> str:
        where = " > ".join(self.parent_path)
        return f"duplicate child concept {self.concept!r} under {where}"


@dataclass(frozen=True)
class ValidationReport:
    sibling_violations: tuple[SiblingViolation, ...]
    cycles: tuple[tuple[str, ...], ...]

    @property
    def ok(self) -> bool:
        return not self.sibling_violations and not self.cycles

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        parts = [str(v) for v in self.sibling_violations]
        parts += ["cycle: " + " -> ".join(c) for c in self.cycles]
        return "; ".join(parts)


@dataclass
class DependencyGraph:
    """Directed graph over concepts; edge (a, b) when a sits directly
    below b somewhere in the hierarchy (a is the more specific side)."""

    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]
    _succ: dict[str, list[str]] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        succ: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in sorted(self.edges):
            succ[a].append(b)
        self._succ = succ

    def successors(self, concept: str) -> list[str]:
        return self._succ[concept]


def dependency_graph(h: ConceptHierarchy) -> DependencyGraph:
    edges = set()
    for node in h.nodes:
        for child in node.children:
            edges.add((child.concept, node.concept))
    return DependencyGraph(
        nodes=frozenset(n.concept for n in h.nodes), edges=frozenset(edges)
    )


def parents(h: ConceptHierarchy, concept: str) -> list[HierarchyNode]:
    """All nodes that have a child with the given concept, document order."""
    if not h.has_concept(concept):
        raise UnknownConceptError(f"unknown concept: {concept!r}")
    return [
        node for node in h.nodes if any(c.concept == concept for c in node.children)
    ]


def is_more_specific(g: DependencyGraph, a: str, b: str) -> bool:
    """True iff a directed path of length >= 1 leads from a to b."""
    for name in (a, b):
        if name not in g.nodes:
            raise UnknownConceptError(f"unknown concept: {name!r}")
    seen: set[str] = set()
    stack = list(g.successors(a))
    while stack:
        current = stack.pop()
        if current == b:
            return True
        if current in seen:
            continue
        seen.add(current)
        stack.extend(g.successors(current))
    return False


def more_specific_set(g: DependencyGraph, concept: str) -> set[str]:
    """All concepts with a path down to ``concept`` (excluding itself unless
    it sits on a cycle, which valid hierarchies never do)."""
    if concept not in g.nodes:
        raise UnknownConceptError(f"unknown concept: {concept!r}")
    pred: dict[str, list[str]] = {n: [] for n in g.nodes}
    for a, b in g.edges:
        pred[b].append(a)
    found: set[str] = set()
    stack = list(pred[concept])
    while stack:
        current = stack.pop()
        if current in found:
            continue
        found.add(current)
        stack.extend(pred[current])
    return found


def _find_cycles(g: DependencyGraph) -> list[tuple[str, ...]]:
    """One representative cycle per strongly connected component."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    sccs: list[list[str]] = []
    counter = [0]

    def strongconnect(v: str):
        work = [(v, iter(g.successors(v)))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        while work:
            node, successors = work[-1]
            advanced = False
            for w in successors:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(g.successors(w))))
                    advanced = True
                    break
                if w in on_stack:
                    low[node] = min(low[node], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                component = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    component.append(w)
                    if w == node:
                        break
                sccs.append(component)

    for v in sorted(g.nodes):
        if v not in index:
            strongconnect(v)

    cycles: list[tuple[str, ...]] = []
    for component in sccs:
        members = set(component)
        start = min(members)
        if len(component) == 1 and (start, start) not in g.edges:
            continue
        if (start, start) in g.edges:
            cycles.append((start, start))
            continue
        # shortest cycle through start: BFS within the component, then close
        # the loop over any visited predecessor of start
        pred: dict[str, str] = {}
        queue = [start]
        closing: str | None = None
        while queue and closing is None:
            node = queue.pop(0)
            for w in g.successors(node):
                if w == start:
                    closing = node
                    break
                if w in members and w not in pred:
                    pred[w] = node
                    queue.append(w)
        assert closing is not None  # SCC guarantees a way back
        path = [closing]
        while path[-1] != start:
            path.append(pred[path[-1]])
        path.reverse()
        cycles.append(tuple(path) + (start,))
    return sorted(cycles)


def validate(h: ConceptHierarchy) -> ValidationReport:
    """Report sibling-rule breaches and dependency-graph cycles; an empty
    report means the hierarchy is fit for indexing."""
    sibling: list[SiblingViolation] = []
    for node in h.nodes:
        seen: set[str] = set()
        for child in node.children:
            if child.concept in seen:
                sibling.append(
                    SiblingViolation(h.path_names(node.node_id), child.concept)
                )
            seen.add(child.concept)
    cycles = _find_cycles(dependency_graph(h))
    return ValidationReport(tuple(sibling), tuple(cycles))

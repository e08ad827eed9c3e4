"""Semantic indexing of concept hierarchies, plus index maintenance.

The operation loop hands out keys concept by concept: pick a concept all
of whose parent nodes are keyed, derive one candidate per occurrence by
appending the parent's counter, generalize the candidates into the
concept key (appending digits until it shares no instances with any
existing concept key), then expand every candidate towards it to get the
node keys. The loop order is deterministic: among eligible concepts the
one whose first document-order occurrence comes earliest wins, which
reproduces the worked examples and makes golden tests possible.

Maintenance: deleting a subtree never changes surviving keys. Inserting
a node with a brand-new concept keys just that node; inserting one with
an existing concept resumes the loop for that concept and everything
more specific, leaving all other keys untouched.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass

from .errors import (
    EngineError,
    InvalidHierarchyError,
    UnknownConceptError,
    UnknownNodeError,
)
from .hierarchy import (
    ConceptHierarchy,
    HierarchyNode,
    dependency_graph,
    more_specific_set,
    validate,
)
from .keys import (
    Key,
    expand,
    generalize,
    instances_overlap,
    is_instance,
    parse_key,
    partially_unifiable,
)


@dataclass(frozen=True)
class IndexedHierarchy:
    """A hierarchy with one key per node and per concept.

    Treated as immutable: maintenance operations return fresh instances.
    ``indexing_order`` is the audit trail of selection choices.
    """

    hierarchy: ConceptHierarchy
    concept_keys: dict[str, Key]
    node_keys: dict[int, Key]
    indexing_order: tuple[str, ...]

    def concept_key(self, concept: str) -> Key:
        try:
            return self.concept_keys[concept]
        except KeyError:
            raise UnknownConceptError(f"unknown concept: {concept!r}") from None

    def node_key(self, node_id: int) -> Key:
        try:
            return self.node_keys[node_id]
        except KeyError:
            raise UnknownNodeError(f"no key for node {node_id}") from None

    def node_by_key(self, key: Key) -> HierarchyNode | None:
        for node_id, node_key in self.node_keys.items():
            if node_key == key:
                return self.hierarchy.node(node_id)
        return None

    def render(self) -> str:
        return rendered_view(self).render()

    def to_json(self) -> str:
        h = self.hierarchy
        nodes = []
        for node in h.nodes:
            parent = h.parent_of(node.node_id)
            nodes.append(
                {
                    "id": node.node_id,
                    "parent": None if parent is None else parent.node_id,
                    "concept": node.concept,
                    "depth": node.depth,
                    "question_type": node.question_type,
                    "optional": node.optional,
                    "negatable": node.negatable,
                    "default_child": node.default_child,
                    "extra": list(node.extra_annotations),
                    "key": str(self.node_keys[node.node_id]),
                }
            )
        payload = {
            "axis": h.axis,
            "title": h.title,
            "nodes": nodes,
            "concept_keys": {c: str(k) for c, k in self.concept_keys.items()},
            "indexing_order": list(self.indexing_order),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "IndexedHierarchy":
        payload = json.loads(text)
        by_id: dict[int, HierarchyNode] = {}
        root: HierarchyNode | None = None
        node_keys: dict[int, Key] = {}
        for entry in payload["nodes"]:
            node = HierarchyNode(
                node_id=entry["id"],
                concept=entry["concept"],
                depth=entry["depth"],
                question_type=entry["question_type"],
                optional=entry["optional"],
                negatable=entry["negatable"],
                default_child=entry["default_child"],
                extra_annotations=tuple(entry["extra"]),
            )
            by_id[node.node_id] = node
            node_keys[node.node_id] = parse_key(entry["key"])
            if entry["parent"] is None:
                root = node
            else:
                by_id[entry["parent"]].children.append(node)
        if root is None:
            raise ValueError("serialized index has no root")
        return cls(
            hierarchy=ConceptHierarchy(payload["axis"], payload["title"], root),
            concept_keys={c: parse_key(k) for c, k in payload["concept_keys"].items()},
            node_keys=node_keys,
            indexing_order=tuple(payload["indexing_order"]),
        )

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def _avoid_collisions(key: Key, existing) -> Key:
    """Append digits to ``key`` until it shares instances with no existing
    concept key: smallest digit first, extra positions only when every
    candidate digit at the current position stays in conflict."""
    existing = list(existing)

    def clashes(k: Key) -> bool:
        return any(instances_overlap(k, other) for other in existing)

    while clashes(key):
        for digit in range(len(existing) + 1):
            candidate = key.append(digit)
            if not clashes(candidate):
                key = candidate
                break
        else:
            key = key.append(0)
    return key


def _run_indexing(
    h: ConceptHierarchy,
    node_keys: dict[int, Key],
    concept_keys: dict[str, Key],
    counters: dict[int, int],
    pending,
    order: list[str],
) -> None:
    """Run the selection/derivation/generalization/expansion loop until
    every pending concept is keyed. Mutates the passed-in state."""
    remaining = sorted(pending, key=h.first_occurrence.__getitem__)
    open_set = set(remaining)
    while open_set:
        chosen = None
        for concept in remaining:
            if concept not in open_set:
                continue
            occurrences = h.nodes_with_concept(concept)
            if all(
                h.parent_of(n.node_id).node_id in node_keys for n in occurrences
            ):
                chosen = concept
                break
        if chosen is None:
            # unreachable on validated input; a stall means a real bug
            raise EngineError(
                "indexing stalled: no concept has all parent nodes keyed"
            )
        candidates: list[tuple[HierarchyNode, Key]] = []
        for node in h.nodes_with_concept(chosen):
            parent = h.parent_of(node.node_id)
            base = node_keys[parent.node_id]
            candidates.append((node, base.append(counters[parent.node_id])))
            counters[parent.node_id] += 1
        concept_key = _avoid_collisions(
            generalize([key for _, key in candidates]), concept_keys.values()
        )
        concept_keys[chosen] = concept_key
        for node, candidate in candidates:
            node_keys[node.node_id] = expand(candidate, concept_key)
        order.append(chosen)
        open_set.remove(chosen)


def index_hierarchy(h: ConceptHierarchy) -> IndexedHierarchy:
    """Index a validated hierarchy; root node and concept get the key [0]."""
    report = validate(h)
    if not report.ok:
        raise InvalidHierarchyError(report)
    root_key = Key.of(0)
    node_keys = {h.root.node_id: root_key}
    concept_keys = {h.root.concept: root_key}
    counters = {n.node_id: 0 for n in h.nodes}
    order = [h.root.concept]
    _run_indexing(
        h,
        node_keys,
        concept_keys,
        counters,
        [c for c in h.concepts if c != h.root.concept],
        order,
    )
    return IndexedHierarchy(h, concept_keys, node_keys, tuple(order))


# --- correctness checking ----------------------------------------------------

RULE_MISSING_KEY = "missing-key"
RULE_CONCEPT_OVERLAP = "concept-keys-share-instances"
RULE_NODE_NOT_INSTANCE = "node-key-not-instance-of-concept-key"
RULE_PARENT_NOT_PREFIX = "parent-key-not-initial-key-of-child"
RULE_FOREIGN_PREFIX = "initial-key-owned-off-path"
RULE_NODE_OVERLAP = "node-keys-share-instances"
RULE_NODES_NOT_UNIFIABLE = "parent-node-key-not-unifiable-into-child"
RULE_CONCEPTS_NOT_UNIFIABLE = "parent-concept-key-not-unifiable-into-child"


@dataclass(frozen=True)
class CorrectnessViolation:
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"{self.rule}: {self.detail}"


@dataclass(frozen=True)
class CorrectnessReport:
    violations: tuple[CorrectnessViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        return "correct" if self.ok else "; ".join(str(v) for v in self.violations)


def check_correctness(ix: IndexedHierarchy) -> CorrectnessReport:
    """Verify every correctness clause of the index plus the derived
    disjointness/unifiability consequences; empty report means correct."""
    h = ix.hierarchy
    violations: list[CorrectnessViolation] = []

    def flag(rule: str, detail: str):
        violations.append(CorrectnessViolation(rule, detail))

    for node in h.nodes:
        if node.node_id not in ix.node_keys:
            flag(RULE_MISSING_KEY, f"node {node.node_id} ({node.concept}) has no key")
    for concept in h.concepts:
        if concept not in ix.concept_keys:
            flag(RULE_MISSING_KEY, f"concept {concept!r} has no key")
    if violations:
        return CorrectnessReport(tuple(violations))

    # concept keys pairwise share no instances (same length is the only
    # way instance sets can intersect)
    by_length: dict[int, list[tuple[str, Key]]] = {}
    for concept, key in sorted(ix.concept_keys.items()):
        by_length.setdefault(len(key), []).append((concept, key))
    for group in by_length.values():
        for i, (c1, k1) in enumerate(group):
            for c2, k2 in group[i + 1 :]:
                if instances_overlap(k1, k2):
                    flag(RULE_CONCEPT_OVERLAP, f"{c1!r} {k1} vs {c2!r} {k2}")

    owners: dict[tuple, list[int]] = {}
    for node_id, key in ix.node_keys.items():
        owners.setdefault(key.elements, []).append(node_id)

    for node in h.nodes:
        node_key = ix.node_keys[node.node_id]
        concept_key = ix.concept_keys[node.concept]
        if not is_instance(node_key, concept_key):
            flag(
                RULE_NODE_NOT_INSTANCE,
                f"node {node.node_id} key {node_key} vs concept {node.concept!r} {concept_key}",
            )
        parent = h.parent_of(node.node_id)
        if parent is not None:
            parent_key = ix.node_keys[parent.node_id]
            if node_key.elements[: len(parent_key)] != parent_key.elements:
                flag(
                    RULE_PARENT_NOT_PREFIX,
                    f"node {node.node_id} key {node_key} does not extend parent {parent_key}",
                )
            if not partially_unifiable(parent_key, node_key):
                flag(
                    RULE_NODES_NOT_UNIFIABLE,
                    f"parent {parent_key} vs child {node_key}",
                )
        on_path = h.ancestor_ids(node.node_id)
        for j in range(1, len(node_key) + 1):
            for owner in owners.get(node_key.elements[:j], ()):
                if owner not in on_path:
                    flag(
                        RULE_FOREIGN_PREFIX,
                        f"prefix {Key(node_key.elements[:j])} of node {node.node_id} "
                        f"is the key of off-path node {owner}",
                    )

    nodes_by_length: dict[int, list[tuple[int, Key]]] = {}
    for node_id, key in sorted(ix.node_keys.items()):
        nodes_by_length.setdefault(len(key), []).append((node_id, key))
    for group in nodes_by_length.values():
        for i, (n1, k1) in enumerate(group):
            for n2, k2 in group[i + 1 :]:
                if instances_overlap(k1, k2):
                    flag(RULE_NODE_OVERLAP, f"node {n1} {k1} vs node {n2} {k2}")

    concept_pairs = set()
    for node in h.nodes:
        for child in node.children:
            concept_pairs.add((node.concept, child.concept))
    for parent_concept, child_concept in sorted(concept_pairs):
        pk = ix.concept_keys[parent_concept]
        ck = ix.concept_keys[child_concept]
        if not partially_unifiable(pk, ck):
            flag(
                RULE_CONCEPTS_NOT_UNIFIABLE,
                f"{parent_concept!r} {pk} vs {child_concept!r} {ck}",
            )

    return CorrectnessReport(tuple(violations))


# --- maintenance ---------------------------------------------------------------

@dataclass(frozen=True)
class ChangeEntry:
    op: str  # ADD | MOD | DEL
    concept: str
    old_key: Key | None
    new_key: Key | None

    def render(self) -> str:
        name = _escape(self.concept)
        if self.op == "ADD":
            return f'ADD "{name}" {self.new_key}'
        if self.op == "DEL":
            return f'DEL "{name}" {self.old_key}'
        return f'MOD "{name}" {self.old_key} {self.new_key}'


@dataclass(frozen=True)
class ChangeSet:
    """Outcome of one maintenance operation: what changed, the fingerprint
    of the index it was computed against, and the resulting index."""

    base_fingerprint: str
    entries: tuple[ChangeEntry, ...]
    new_index: IndexedHierarchy

    def render(self) -> str:
        return "".join(entry.render() + "\n" for entry in self.entries)


def _copy_node(node: HierarchyNode, skip_id: int | None = None) -> HierarchyNode | None:
    if node.node_id == skip_id:
        return None
    return HierarchyNode(
        node_id=node.node_id,
        concept=node.concept,
        depth=node.depth,
        children=[
            copied
            for child in node.children
            if (copied := _copy_node(child, skip_id)) is not None
        ],
        question_type=node.question_type,
        optional=node.optional,
        negatable=node.negatable,
        default_child=node.default_child,
        extra_annotations=node.extra_annotations,
    )


def _derive_counters(h: ConceptHierarchy, node_keys: dict[int, Key]) -> dict[int, int]:
    """Counters consistent with the surviving keys: the next digit a node
    hands out is one past the largest digit any keyed child received."""
    counters: dict[int, int] = {}
    for node in h.nodes:
        own = node_keys.get(node.node_id)
        if own is None:
            counters[node.node_id] = 0
            continue
        digits = [
            child_key.elements[len(own)]
            for child in node.children
            if (child_key := node_keys.get(child.node_id)) is not None
            and isinstance(child_key.elements[len(own)], int)
        ]
        counters[node.node_id] = max(digits) + 1 if digits else 0
    return counters


def insert_node(
    ix: IndexedHierarchy, parent_node_id: int, concept: str
) -> tuple[IndexedHierarchy, ChangeSet]:
    """Insert a leaf with the given concept under a node.

    A brand-new concept receives a key without touching anything else; an
    existing concept is reindexed together with every more specific
    concept by resuming the operation loop, all other keys preserved
    verbatim.
    """
    h = ix.hierarchy
    if not h.has_node(parent_node_id):
        raise UnknownNodeError(f"no node with id {parent_node_id}")
    new_root = _copy_node(h.root)
    new_h_probe = ConceptHierarchy(h.axis, h.title, new_root)
    parent = new_h_probe.node(parent_node_id)
    new_id = max(n.node_id for n in h.nodes) + 1
    parent.children.append(
        HierarchyNode(node_id=new_id, concept=concept, depth=parent.depth + 1)
    )
    new_h = ConceptHierarchy(h.axis, h.title, new_root)
    report = validate(new_h)
    if not report.ok:
        raise InvalidHierarchyError(report)

    if concept not in ix.concept_keys:
        node_keys = dict(ix.node_keys)
        concept_keys = dict(ix.concept_keys)
        counters = _derive_counters(new_h, node_keys)
        order = list(ix.indexing_order)
        _run_indexing(new_h, node_keys, concept_keys, counters, [concept], order)
        entries = (ChangeEntry("ADD", concept, None, concept_keys[concept]),)
    else:
        graph = dependency_graph(new_h)
        reindex = {concept} | more_specific_set(graph, concept)
        node_keys = {
            nid: key
            for nid, key in ix.node_keys.items()
            if new_h.node(nid).concept not in reindex
        }
        concept_keys = {
            c: key for c, key in ix.concept_keys.items() if c not in reindex
        }
        counters = _derive_counters(new_h, node_keys)
        order = [c for c in ix.indexing_order if c not in reindex]
        first_new = len(order)
        _run_indexing(
            new_h,
            node_keys,
            concept_keys,
            counters,
            sorted(reindex, key=new_h.first_occurrence.__getitem__),
            order,
        )
        entries = tuple(
            ChangeEntry("MOD", c, ix.concept_keys[c], concept_keys[c])
            for c in order[first_new:]
        )
    new_ix = IndexedHierarchy(new_h, concept_keys, node_keys, tuple(order))
    return new_ix, ChangeSet(ix.fingerprint(), entries, new_ix)


def delete_node(
    ix: IndexedHierarchy, node_id: int
) -> tuple[IndexedHierarchy, ChangeSet]:
    """Remove a node and its whole subtree; no surviving key changes.

    Concepts whose last occurrence goes away are dropped from the concept
    key map (reported as DEL entries).
    """
    h = ix.hierarchy
    node = h.node(node_id)
    if node is h.root:
        raise EngineError("cannot delete the root node")
    new_root = _copy_node(h.root, skip_id=node_id)
    new_h = ConceptHierarchy(h.axis, h.title, new_root)
    surviving_concepts = {n.concept for n in new_h.nodes}
    node_keys = {
        nid: key for nid, key in ix.node_keys.items() if new_h.has_node(nid)
    }
    concept_keys = {
        c: key for c, key in ix.concept_keys.items() if c in surviving_concepts
    }
    order = tuple(c for c in ix.indexing_order if c in surviving_concepts)
    entries = tuple(
        ChangeEntry("DEL", c, ix.concept_keys[c], None)
        for c in ix.indexing_order
        if c not in surviving_concepts
    )
    new_ix = IndexedHierarchy(new_h, concept_keys, node_keys, order)
    return new_ix, ChangeSet(ix.fingerprint(), entries, new_ix)


# --- rendered (listing) view ----------------------------------------------------

def _escape(name: str) -> str:
    return name.replace("\\", "\\\\").replace('"', '\\"')


def _unescape(name: str) -> str:
    return re.sub(r"\\(.)", r"\1", name)


@dataclass(frozen=True)
class RenderedEntry:
    key: Key
    name: str
    children: tuple[Key, ...]

    def render(self) -> str:
        if self.children:
            refs = " ".join(str(k) for k in self.children)
            return f'({self.key} "{_escape(self.name)}" ({refs}))'
        return f'({self.key} "{_escape(self.name)}")'


@dataclass(frozen=True)
class RenderedIndex:
    entries: tuple[RenderedEntry, ...]

    def render(self) -> str:
        return "".join(entry.render() + "\n" for entry in self.entries)


_RENDERED_LINE = re.compile(
    r'^\((\[[^\]]*\])\s+"((?:[^"\\]|\\.)*)"(?:\s+\(([^()]*)\))?\)$'
)


def rendered_view(ix: IndexedHierarchy) -> RenderedIndex:
    """One entry per concept in indexing order; child references are the
    concept keys of child concepts in first-appearance order."""
    h = ix.hierarchy
    entries = []
    for concept in ix.indexing_order:
        child_keys: list[Key] = []
        for node in h.nodes_with_concept(concept):
            for child in node.children:
                key = ix.concept_keys[child.concept]
                if key not in child_keys:
                    child_keys.append(key)
        entries.append(
            RenderedEntry(ix.concept_keys[concept], concept, tuple(child_keys))
        )
    return RenderedIndex(tuple(entries))


def render_indexed(ix: IndexedHierarchy) -> str:
    return rendered_view(ix).render()


def parse_rendered(text: str) -> RenderedIndex:
    entries = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        match = _RENDERED_LINE.match(line)
        if match is None:
            raise EngineError(f"line {line_no}: malformed rendered index line")
        key_text, name, children_text = match.groups()
        children = tuple(
            parse_key(part) for part in (children_text or "").split() if part
        )
        entries.append(RenderedEntry(parse_key(key_text), _unescape(name), children))
    return RenderedIndex(tuple(entries))

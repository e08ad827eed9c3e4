"""Deduced concepts: described, inherited, indexed and inferred.

A d-concept hierarchy is an ordinary concept hierarchy (every name
unique, one block per concept) indexed with the same algorithm, so every
d-concept owns a concept key. Each concept carries a description:
conditions that must match a situation (requires) and conditions that
must not (excludes). Descriptions inherit downward by union, so a child
can only narrow its parent; validity of a child therefore always implies
validity of the parent, which is what makes root-down inference sound.

A condition is either a multiaxial descriptor or a reference to another
d-concept by name. References may point forward in the file but must not
form cycles, including cycles by way of inherited conditions.

DSL, one block per concept:

    dconcept "headache" parent "pain condition":
      requires [(L[0,1])]
      excludes [(Q[0,3])]
      requires dconcept "seen clinician"
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

from .errors import DConceptError
from .hierarchy import ConceptHierarchy, HierarchyNode
from .indexer import IndexedHierarchy, index_hierarchy
from .keys import Key
from .multiaxial import (
    MissingAxisHook,
    MultiaxialDescriptor,
    Situation,
    descriptor_matches,
    parse_multiaxial,
)

_BLOCK_HEADER = re.compile(
    r'^dconcept\s+"(?P<name>[^"]+)"(?:\s+parent\s+"(?P<parent>[^"]+)")?\s*:\s*$'
)
_REF_BODY = re.compile(r'^dconcept\s+"(?P<name>[^"]+)"\s*$')


@dataclass(frozen=True)
class DConceptRef:
    name: str

    def __str__(self) -> str:
        return f'dconcept "{self.name}"'


Condition = Union[MultiaxialDescriptor, DConceptRef]


@dataclass(frozen=True)
class DConcept:
    name: str
    parent: str | None
    requires: tuple[Condition, ...]
    excludes: tuple[Condition, ...]


class DConceptHierarchy:
    """Parsed d-concept set plus its index and inheritance tables."""

    def __init__(self, concepts: Sequence[DConcept], axis: str = "D", title: str = ""):
        if not concepts:
            raise DConceptError("no d-concepts defined")
        self.axis = axis
        self.concepts: dict[str, DConcept] = {}
        for concept in concepts:
            if concept.name in self.concepts:
                raise DConceptError(f"duplicate d-concept name: {concept.name!r}")
            self.concepts[concept.name] = concept
        roots = [c.name for c in concepts if c.parent is None]
        if len(roots) != 1:
            raise DConceptError(
                f"exactly one root d-concept required, found {len(roots)}"
            )
        self.root = roots[0]
        self.children: dict[str, list[str]] = {c.name: [] for c in concepts}
        for concept in concepts:
            if concept.parent is None:
                continue
            if concept.parent not in self.concepts:
                raise DConceptError(
                    f"{concept.name!r} names unknown parent {concept.parent!r}"
                )
            self.children[concept.parent].append(concept.name)
        self._check_reference_cycles()
        self.index = index_hierarchy(self._as_tree(title or self.root))

    def _as_tree(self, title: str) -> ConceptHierarchy:
        nodes: dict[str, HierarchyNode] = {}
        for i, name in enumerate(self.concepts):
            nodes[name] = HierarchyNode(node_id=i, concept=name, depth=0)
        for name, concept in self.concepts.items():
            if concept.parent is not None:
                nodes[concept.parent].children.append(nodes[name])

        def fix_depth(node: HierarchyNode, depth: int):
            node.depth = depth
            for child in node.children:
                fix_depth(child, depth + 1)

        fix_depth(nodes[self.root], 0)
        return ConceptHierarchy(self.axis, title, nodes[self.root])

    def _own_refs(self, name: str) -> list[str]:
        concept = self.concepts[name]
        return [
            cond.name
            for cond in concept.requires + concept.excludes
            if isinstance(cond, DConceptRef)
        ]

    def _check_reference_cycles(self):
        for name in self.concepts:
            for ref in self._own_refs(name):
                if ref not in self.concepts:
                    raise DConceptError(f"{name!r} references unknown d-concept {ref!r}")
        edges: dict[str, set[str]] = {name: set() for name in self.concepts}
        for name in self.concepts:
            for ancestor in self.ancestors_or_self(name):
                edges[name].update(self._own_refs(ancestor))
        state: dict[str, int] = {}

        def visit(node: str, trail: list[str]):
            state[node] = 1
            trail.append(node)
            for nxt in sorted(edges[node]):
                if state.get(nxt) == 1:
                    cycle = trail[trail.index(nxt):] + [nxt]
                    raise DConceptError(
                        "cyclic d-concept definition: " + " -> ".join(cycle)
                    )
                if state.get(nxt) != 2:
                    visit(nxt, trail)
            trail.pop()
            state[node] = 2

        for name in self.concepts:
            if state.get(name) != 2:
                visit(name, [])

    def ancestors_or_self(self, name: str) -> list[str]:
        """Root-first chain of ancestors ending with the concept itself."""
        chain: list[str] = []
        current: str | None = name
        while current is not None:
            chain.append(current)
            current = self.concepts[current].parent
        chain.reverse()
        return chain

    def concept_key(self, name: str) -> Key:
        return self.index.concept_key(name)

    def effective_requires(self, name: str) -> tuple[Condition, ...]:
        return tuple(
            cond
            for ancestor in self.ancestors_or_self(name)
            for cond in self.concepts[ancestor].requires
        )

    def effective_excludes(self, name: str) -> tuple[Condition, ...]:
        return tuple(
            cond
            for ancestor in self.ancestors_or_self(name)
            for cond in self.concepts[ancestor].excludes
        )

    def names_in_document_order(self) -> tuple[str, ...]:
        return tuple(self.concepts)


def parse_dconcepts(
    text: str,
    axes: Mapping[str, object] | None = None,
    axis_name: str = "D",
    title: str = "",
) -> DConceptHierarchy:
    """Parse the block DSL; parents must be declared before children,
    references may point anywhere but must stay acyclic."""
    concepts: list[DConcept] = []
    declared: set[str] = set()
    current: dict | None = None

    def close_current():
        if current is not None:
            concepts.append(
                DConcept(
                    name=current["name"],
                    parent=current["parent"],
                    requires=tuple(current["requires"]),
                    excludes=tuple(current["excludes"]),
                )
            )

    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        if not raw.startswith(" "):
            header = _BLOCK_HEADER.match(raw.strip())
            if header is None:
                raise DConceptError(f"line {line_no}: expected a dconcept block header")
            close_current()
            name = header.group("name")
            parent = header.group("parent")
            if parent is not None and parent not in declared:
                raise DConceptError(
                    f"line {line_no}: parent {parent!r} must be declared before {name!r}"
                )
            declared.add(name)
            current = {"name": name, "parent": parent, "requires": [], "excludes": []}
            continue
        if current is None:
            raise DConceptError(f"line {line_no}: condition outside a dconcept block")
        body = raw.strip()
        if body.startswith("requires "):
            bucket, rest = current["requires"], body[len("requires "):]
        elif body.startswith("excludes "):
            bucket, rest = current["excludes"], body[len("excludes "):]
        else:
            raise DConceptError(f"line {line_no}: expected 'requires' or 'excludes'")
        ref = _REF_BODY.match(rest.strip())
        if ref is not None:
            bucket.append(DConceptRef(ref.group("name")))
        else:
            expr = parse_multiaxial(rest.strip(), axes=axes)
            bucket.extend(expr.descriptors)
    close_current()
    return DConceptHierarchy(concepts, axis=axis_name, title=title)


ValidityFn = Callable[[str], bool]


def is_valid(
    h: DConceptHierarchy,
    name: str,
    situation: Situation,
    ask: MissingAxisHook | None = None,
) -> bool:
    """True iff every effective required condition matches the situation
    and no effective excluded condition does. Referenced d-concepts are
    evaluated recursively; the optional ask hook decides bindings whose
    axis the situation does not mention (batch default: no)."""
    if name not in h.concepts:
        raise DConceptError(f"unknown d-concept: {name!r}")

    def holds(condition: Condition) -> bool:
        if isinstance(condition, DConceptRef):
            return is_valid(h, condition.name, situation, ask)
        return descriptor_matches(condition, situation, on_missing=ask)

    return all(holds(c) for c in h.effective_requires(name)) and not any(
        holds(c) for c in h.effective_excludes(name)
    )


def more_general_than(
    h: DConceptHierarchy,
    general: str,
    specific: str,
    base: Iterable[Situation],
    ask: MissingAxisHook | None = None,
) -> bool:
    """Extension inclusion over an explicit finite base of situations."""
    return all(
        is_valid(h, general, s, ask)
        for s in base
        if is_valid(h, specific, s, ask)
    )


def infer_most_specific(
    h: DConceptHierarchy,
    situation: Situation,
    ask: MissingAxisHook | None = None,
    validity: ValidityFn | None = None,
) -> list[str]:
    """Root-down inference: children are explored only under valid
    concepts; returns the valid concepts without valid children, in
    document order. Empty when the root is invalid."""
    if validity is None:
        validity = lambda name: is_valid(h, name, situation, ask)
    if not validity(h.root):
        return []
    most_specific: list[str] = []
    queue = [h.root]
    while queue:
        name = queue.pop(0)
        any_valid_child = False
        for child in h.children[name]:
            if validity(child):
                any_valid_child = True
                queue.append(child)
        if not any_valid_child:
            most_specific.append(name)
    order = {name: i for i, name in enumerate(h.names_in_document_order())}
    most_specific.sort(key=order.__getitem__)
    return most_specific


def check_maximally_general(
    h: DConceptHierarchy,
    name: str,
    positives: Iterable[Situation],
    negatives: Iterable[Situation],
    peers: Iterable[str],
    ask: MissingAxisHook | None = None,
) -> bool:
    """True iff the concept covers no negative situation and is at least
    as general as every peer that also covers none."""
    positives = list(positives)
    negatives = list(negatives)
    if any(is_valid(h, name, s, ask) for s in negatives):
        return False
    base = positives + negatives
    for peer in peers:
        if any(is_valid(h, peer, s, ask) for s in negatives):
            continue
        if not more_general_than(h, name, peer, base, ask):
            return False
    return True

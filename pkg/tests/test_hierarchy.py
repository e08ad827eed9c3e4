"""Hierarchy parsing, validation and concept-order queries."""

import random

import pytest

from semindex.errors import HierarchyFormatError, UnknownConceptError
from semindex.hierarchy import (
    dependency_graph,
    is_more_specific,
    more_specific_set,
    parents,
    parse_hierarchy,
    validate,
)
from trees import ANAMNESIS_TEXT, PAIN_TEXT, inject_cycle, random_hierarchy


def test_parse_anamnesis_tree():
    h = parse_hierarchy(ANAMNESIS_TEXT)
    assert h.axis == "A"
    assert h.title == "anamnesis"
    assert h.root.concept == "anamnesis"
    assert len(h.nodes) == 11
    assert [c.concept for c in h.root.children] == ["pain pattern", "feeling"]
    localization = h.nodes_with_concept("localization")[0]
    assert [c.concept for c in localization.children] == [
        "spine",
        "head",
        "shoulder/arm/hand",
    ]
    assert localization.question_type == "single"


def test_parse_single_line_document():
    h = parse_hierarchy("root\n")
    assert len(h.nodes) == 1
    assert h.axis == "A"
    assert h.title == "root"


def test_parse_preserves_document_order():
    h = parse_hierarchy(PAIN_TEXT)
    assert list(h.concepts)[:4] == [
        "pain pattern",
        "cardinal symptom",
        "localization",
        "spine",
    ]


def test_parse_rejects_indentation_jump():
    with pytest.raises(HierarchyFormatError):
        parse_hierarchy("root\n    too deep\n")


def test_parse_rejects_odd_indent():
    with pytest.raises(HierarchyFormatError):
        parse_hierarchy("root\n a\n")


def test_parse_rejects_second_root():
    with pytest.raises(HierarchyFormatError):
        parse_hierarchy("root\nanother\n")


def test_parse_rejects_duplicate_axis_header():
    with pytest.raises(HierarchyFormatError):
        parse_hierarchy('axis A "x"\naxis B "y"\nroot\n')


def test_parse_rejects_empty_document():
    with pytest.raises(HierarchyFormatError):
        parse_hierarchy("\n\n")


def test_parse_annotations():
    h = parse_hierarchy(
        "root ?multi ?optional\n  a ?negatable ?default=b\n  b ?hint=try me\n"
    )
    root = h.root
    assert root.question_type == "multi"
    assert root.optional
    a, b = root.children
    assert a.negatable and a.default_child == "b"
    assert b.extra_annotations == ("hint=try me",)


def test_validate_clean_hierarchy():
    # the two-concepts-under-root shape of the introductory example
    h = parse_hierarchy("concept 1\n  concept 2\n  concept 3\n    concept 2\n")
    report = validate(h)
    assert report.ok


def test_validate_reports_sibling_duplicate():
    h = parse_hierarchy("root\n  K\n  K\n")
    report = validate(h)
    assert not report.ok
    assert report.sibling_violations[0].concept == "K"
    assert report.sibling_violations[0].parent_path == ("root",)


def test_validate_reports_cycle_path():
    # P has child Q in one place, Q has child P elsewhere
    h = parse_hierarchy("root\n  P\n    Q\n  other\n    Q\n      P\n")
    report = validate(h)
    assert not report.ok
    assert len(report.cycles) == 1
    cycle = report.cycles[0]
    assert cycle[0] == cycle[-1]
    assert set(cycle) == {"P", "Q"}


def test_validate_reports_self_loop():
    h = parse_hierarchy("root\n  a\n    a\n")
    report = validate(h)
    assert report.cycles == (("a", "a"),)


def test_dependency_graph_edges():
    h = parse_hierarchy("concept 1\n  concept 2\n  concept 3\n")
    g = dependency_graph(h)
    assert g.nodes == {"concept 1", "concept 2", "concept 3"}
    assert g.edges == {
        ("concept 2", "concept 1"),
        ("concept 3", "concept 1"),
    }


def test_dependency_graph_single_node():
    g = dependency_graph(parse_hierarchy("only\n"))
    assert g.nodes == {"only"}
    assert g.edges == frozenset()


def test_dependency_graph_collapses_repeated_subordination():
    h = parse_hierarchy("root\n  B\n    D\n  C\n    D\n")
    g = dependency_graph(h)
    assert ("D", "B") in g.edges and ("D", "C") in g.edges
    assert len([e for e in g.edges if e[0] == "D"]) == 2


def test_parents_of_multi_occurrence_concept():
    h = parse_hierarchy(PAIN_TEXT)
    found = parents(h, "localization")
    assert {n.concept for n in found} == {"cardinal symptom", "radiating pain"}


def test_parents_of_root_is_empty():
    h = parse_hierarchy(PAIN_TEXT)
    assert parents(h, "pain pattern") == []


def test_parents_single_occurrence():
    h = parse_hierarchy(ANAMNESIS_TEXT)
    found = parents(h, "strong")
    assert [n.concept for n in found] == ["intensity"]


def test_parents_unknown_concept():
    with pytest.raises(UnknownConceptError):
        parents(parse_hierarchy("root\n"), "nope")


def test_is_more_specific():
    g = dependency_graph(parse_hierarchy(PAIN_TEXT))
    assert is_more_specific(g, "head", "pain pattern")
    assert not is_more_specific(g, "head", "head")
    assert not is_more_specific(g, "intensity", "localization")
    with pytest.raises(UnknownConceptError):
        is_more_specific(g, "head", "nope")


def test_is_more_specific_on_anamnesis_siblings():
    g = dependency_graph(parse_hierarchy(ANAMNESIS_TEXT))
    assert not is_more_specific(g, "feeling", "pain pattern")
    assert is_more_specific(g, "very strong", "anamnesis")


def test_more_specific_set():
    g = dependency_graph(parse_hierarchy(PAIN_TEXT))
    assert more_specific_set(g, "intensity") == {"high", "medium"}
    assert "localization" in more_specific_set(g, "pain pattern")


def test_strict_partial_order_on_random_hierarchies():
    rng = random.Random(7)
    for _ in range(30):
        h = random_hierarchy(rng)
        g = dependency_graph(h)
        concepts = sorted(g.nodes)
        for a in concepts:
            assert not is_more_specific(g, a, a)
            for b in concepts:
                if is_more_specific(g, a, b):
                    assert not is_more_specific(g, b, a)
                for c in concepts:
                    if is_more_specific(g, a, b) and is_more_specific(g, b, c):
                        assert is_more_specific(g, a, c)


def test_random_valid_hierarchies_pass_validation():
    rng = random.Random(11)
    for _ in range(50):
        assert validate(random_hierarchy(rng)).ok


def test_injected_cycles_are_rejected():
    rng = random.Random(13)
    for _ in range(50):
        h = random_hierarchy(rng)
        broken = inject_cycle(rng, h)
        assert not validate(broken).ok


def test_dependency_graph_deterministic():
    h1 = parse_hierarchy(PAIN_TEXT)
    h2 = parse_hierarchy(PAIN_TEXT)
    g1, g2 = dependency_graph(h1), dependency_graph(h2)
    assert g1.nodes == g2.nodes and g1.edges == g2.edges


def test_path_names_and_resolve_path():
    h = parse_hierarchy(ANAMNESIS_TEXT)
    head = next(n for n in h.nodes if n.concept == "head")
    path = h.path_names(head.node_id)
    assert path == ("anamnesis", "pain pattern", "localization", "head")
    assert h.resolve_path(path) is head
    assert h.resolve_path(("anamnesis", "nope")) is None

"""Deduced concepts: DSL, validity, inheritance and root-down inference."""

import random

import pytest

from semindex.dconcepts import (
    DConceptError,
    DConceptRef,
    check_maximally_general,
    infer_most_specific,
    is_valid,
    more_general_than,
    parse_dconcepts,
)
from semindex.hierarchy import parse_hierarchy
from semindex.indexer import index_hierarchy
from semindex.keys import Key
from semindex.multiaxial import AxisBinding, Situation
from trees import random_axes, random_dconcept_text, random_situation

k = Key.of


def b(axis, *elements):
    return AxisBinding(axis, k(*elements))


PAIN_DCONCEPTS = """\
dconcept "pain condition":
  requires [(A[0,0])]

dconcept "headache" parent "pain condition":
  requires [(L[0,1])]

dconcept "tension headache" parent "headache":
  requires [(Q[0,0])]

dconcept "back pain" parent "pain condition":
  requires [(L[0,2])]
"""


@pytest.fixture
def pain_plan():
    return parse_dconcepts(PAIN_DCONCEPTS)


def test_parse_indexes_the_name_tree(pain_plan):
    assert str(pain_plan.concept_key("pain condition")) == "[0]"
    assert str(pain_plan.concept_key("headache")) == "[0,0]"
    assert str(pain_plan.concept_key("tension headache")) == "[0,0,0]"
    assert str(pain_plan.concept_key("back pain")) == "[0,1]"


def test_parse_rejects_duplicate_names():
    with pytest.raises(DConceptError):
        parse_dconcepts('dconcept "a":\ndconcept "a" parent "a":\n')


def test_parse_rejects_forward_parent():
    with pytest.raises(DConceptError):
        parse_dconcepts('dconcept "a" parent "b":\ndconcept "b":\n')


def test_parse_rejects_two_roots():
    with pytest.raises(DConceptError):
        parse_dconcepts('dconcept "a":\ndconcept "b":\n')


def test_parse_rejects_unknown_axis_with_registry():
    axes = {"A": index_hierarchy(parse_hierarchy("root\n  x1\n"))}
    from semindex.errors import UnknownAxisError

    with pytest.raises(UnknownAxisError):
        parse_dconcepts('dconcept "a":\n  requires [(B[0,0])]\n', axes=axes)


def test_parse_rejects_reference_cycle_via_other_concept():
    text = (
        'dconcept "root":\n'
        'dconcept "c1" parent "root":\n'
        '  requires dconcept "c2"\n'
        'dconcept "c2" parent "root":\n'
        '  requires dconcept "c1"\n'
    )
    with pytest.raises(DConceptError, match="cyclic"):
        parse_dconcepts(text)


def test_parse_rejects_inherited_reference_cycle():
    # the child inherits the parent's reference to the child itself
    text = (
        'dconcept "root":\n'
        'dconcept "p" parent "root":\n'
        '  requires dconcept "c"\n'
        'dconcept "c" parent "p":\n'
    )
    with pytest.raises(DConceptError, match="cyclic"):
        parse_dconcepts(text)


def test_parse_allows_acyclic_references(pain_plan):
    text = PAIN_DCONCEPTS + (
        'dconcept "treated tension" parent "tension headache":\n'
        '  requires dconcept "back pain"\n'
    )
    plan = parse_dconcepts(text)
    assert isinstance(plan.concepts["treated tension"].requires[0], DConceptRef)


def test_root_with_empty_conditions_always_valid():
    plan = parse_dconcepts('dconcept "anything":\n')
    assert is_valid(plan, "anything", Situation(()))
    assert is_valid(plan, "anything", Situation((b("Z", 0, 5),)))


def test_is_valid_conjunction(pain_plan):
    situation = Situation((b("A", 0, 0, 1), b("L", 0, 1, 0), b("Q", 0, 0)))
    assert is_valid(pain_plan, "tension headache", situation)
    assert is_valid(pain_plan, "headache", situation)
    # missing Q axis: the tension headache condition cannot be confirmed
    assert not is_valid(
        pain_plan, "tension headache", Situation((b("A", 0, 0, 1), b("L", 0, 1, 0)))
    )


def test_is_valid_exclusion_veto():
    text = (
        'dconcept "root":\n'
        'dconcept "calm" parent "root":\n'
        '  excludes [(A[0,0,3,1])]\n'
    )
    plan = parse_dconcepts(text)
    assert not is_valid(plan, "calm", Situation((b("A", 0, 0, 3, 1),)))
    assert is_valid(plan, "calm", Situation((b("A", 0, 0, 3, 0),)))


def test_is_valid_reference_condition(pain_plan):
    text = PAIN_DCONCEPTS + (
        'dconcept "combined" parent "pain condition":\n'
        '  requires dconcept "back pain"\n'
    )
    plan = parse_dconcepts(text)
    situation = Situation((b("A", 0, 0), b("L", 0, 2, 1)))
    assert is_valid(plan, "combined", situation)
    assert not is_valid(plan, "combined", Situation((b("A", 0, 0), b("L", 0, 1))))


def test_ask_hook_decides_missing_axes(pain_plan):
    situation = Situation((b("A", 0, 0, 1), b("L", 0, 1, 0)))
    assert not is_valid(pain_plan, "tension headache", situation)
    asked = []

    def ask(binding):
        asked.append(binding.axis)
        return True

    assert is_valid(pain_plan, "tension headache", situation, ask=ask)
    assert asked == ["Q"]


def test_hereditary_validity_random():
    rng = random.Random(41)
    for _ in range(40):
        axes = random_axes(rng)
        plan = parse_dconcepts(random_dconcept_text(rng, axes), axes=axes)
        for _ in range(5):
            situation = random_situation(rng, axes)
            for name, concept in plan.concepts.items():
                if concept.parent is not None and is_valid(plan, name, situation):
                    assert is_valid(plan, concept.parent, situation)


def test_more_general_than_parent_child(pain_plan):
    rng = random.Random(43)
    axes = {}
    base = [
        Situation(
            tuple(
                b(axis, *[rng.choice([0, 1]) for _ in range(rng.randint(1, 3))])
                for axis in ["A", "L", "Q"]
            )
        )
        for _ in range(40)
    ]
    assert more_general_than(pain_plan, "pain condition", "headache", base)
    assert more_general_than(pain_plan, "headache", "tension headache", base)
    assert more_general_than(pain_plan, "headache", "headache", base)


def test_more_general_than_antisymmetric_on_separating_base(pain_plan):
    # a base that separates every pair of distinct concepts makes the
    # pseudo-order antisymmetric
    base = [
        Situation((b("A", 0, 0), b("L", 0, 1), b("Q", 0, 0))),  # tension headache
        Situation((b("A", 0, 0), b("L", 0, 1))),  # headache only
        Situation((b("A", 0, 0), b("L", 0, 2))),  # back pain only
        Situation((b("A", 0, 0),)),  # pain condition only
    ]
    names = list(pain_plan.concepts)
    for a in names:
        assert more_general_than(pain_plan, a, a, base)
        for c in names:
            if a != c:
                assert not (
                    more_general_than(pain_plan, a, c, base)
                    and more_general_than(pain_plan, c, a, base)
                )


def test_more_general_than_counterexample(pain_plan):
    witness = Situation((b("A", 0, 0), b("L", 0, 2)))  # back pain, not headache
    assert is_valid(pain_plan, "back pain", witness)
    assert not more_general_than(pain_plan, "headache", "back pain", [witness])


def test_infer_most_specific_single_leaf(pain_plan):
    situation = Situation((b("A", 0, 0), b("L", 0, 1, 0), b("Q", 0, 0)))
    assert infer_most_specific(pain_plan, situation) == ["tension headache"]


def test_infer_most_specific_empty_when_root_invalid(pain_plan):
    assert infer_most_specific(pain_plan, Situation(())) == []


def test_infer_most_specific_multiple_leaves(pain_plan):
    situation = Situation((b("A", 0, 0), b("L", 0, 1), b("L", 0, 2)))
    # headache and back pain both valid, tension headache not (no Q)
    assert infer_most_specific(pain_plan, situation) == ["headache", "back pain"]


def test_infer_skips_children_of_invalid_concepts(pain_plan):
    situation = Situation((b("A", 0, 0), b("L", 0, 2)))
    evaluated = []

    def validity(name):
        evaluated.append(name)
        return is_valid(pain_plan, name, situation)

    result = infer_most_specific(pain_plan, situation, validity=validity)
    assert result == ["back pain"]
    # headache is invalid, so tension headache must never be evaluated
    assert "tension headache" not in evaluated


def test_infer_equals_brute_force_filter():
    rng = random.Random(47)
    for _ in range(60):
        axes = random_axes(rng)
        plan = parse_dconcepts(random_dconcept_text(rng, axes), axes=axes)
        situation = random_situation(rng, axes)
        traversal = infer_most_specific(plan, situation)
        valid = {n for n in plan.concepts if is_valid(plan, n, situation)}
        brute = [
            n
            for n in plan.names_in_document_order()
            if n in valid and not any(c in valid for c in plan.children[n])
        ]
        assert traversal == brute


def test_check_maximally_general_vacuous():
    plan = parse_dconcepts('dconcept "top":\n')
    assert check_maximally_general(plan, "top", [], [], [])


def test_check_maximally_general_negative_coverage(pain_plan):
    negative = Situation((b("A", 0, 0), b("L", 0, 1)))
    assert not check_maximally_general(
        pain_plan, "headache", [], [negative], ["back pain"]
    )


def test_check_maximally_general_incomparable_peers(pain_plan):
    headache_only = Situation((b("A", 0, 0), b("L", 0, 1)))
    back_only = Situation((b("A", 0, 0), b("L", 0, 2)))
    positives = [headache_only, back_only]
    # each peer misses the other's positive, so neither dominates
    assert not check_maximally_general(
        pain_plan, "headache", positives, [], ["back pain"]
    )
    assert not check_maximally_general(
        pain_plan, "back pain", positives, [], ["headache"]
    )
    # the shared parent dominates both
    assert check_maximally_general(
        pain_plan, "pain condition", positives, [], ["headache", "back pain"]
    )

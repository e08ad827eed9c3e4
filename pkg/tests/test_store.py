"""Relational store: durability, unification queries, remapping."""

import random

import pytest

from semindex.errors import (
    ChangeSetVersionError,
    DuplicateEpisodeError,
    SchemaVersionError,
    StoreError,
    UnknownAxisError,
    UnknownKeyError,
)
from semindex.hierarchy import parse_hierarchy
from semindex.indexer import delete_node, index_hierarchy, insert_node
from semindex.keys import Key, X, parse_key, partially_unifiable
from semindex.multiaxial import parse_multiaxial
from semindex.store import (
    Case,
    Episode,
    InstanceRecord,
    Store,
    canonical_ts,
    episode_situation,
    open_store,
)
from trees import ANAMNESIS_TEXT, PAIN_TEXT, random_hierarchy

k = Key.of

TS = "2026-01-05T09:30:00+00:00"


@pytest.fixture
def store():
    with open_store(":memory:") as s:
        yield s


@pytest.fixture
def anamnesis_store(store):
    store.catalog_axis(index_hierarchy(parse_hierarchy(ANAMNESIS_TEXT)))
    return store


def _episode(eid, ts, *records, subject=None):
    return Episode(id=eid, ts=ts, instances=tuple(records), subject=subject)


def head_record():
    # anamnesis > pain pattern > localization > head
    return InstanceRecord(axis="A", node_key=k(0, 0, 0, 1))


def test_fresh_store_is_empty(tmp_path):
    with open_store(tmp_path / "kb") as s:
        assert s.list_axes() == []
        assert s.episode_refs() == []
        assert s.list_cases() == []


def test_reopen_preserves_catalog(tmp_path):
    location = tmp_path / "kb"
    with open_store(location) as s:
        s.catalog_axis(index_hierarchy(parse_hierarchy(ANAMNESIS_TEXT)))
        rendered = s.get_axis("A").render()
        fingerprint = s.axis_fingerprint("A")
    with open_store(location) as s:
        assert s.list_axes() == [("A", 1, "anamnesis")]
        assert s.get_axis("A").render() == rendered
        assert s.axis_fingerprint("A") == fingerprint


def test_corrupt_schema_version_is_rejected(tmp_path):
    location = tmp_path / "kb"
    with open_store(location) as s:
        s._conn.execute("UPDATE meta SET value='999' WHERE key='schema_version'")
        s._conn.commit()
    with pytest.raises(SchemaVersionError):
        open_store(location)


def test_catalog_axis_twice_is_rejected(anamnesis_store):
    with pytest.raises(StoreError):
        anamnesis_store.catalog_axis(index_hierarchy(parse_hierarchy(ANAMNESIS_TEXT)))


def test_put_get_episode_round_trip(anamnesis_store):
    episode = Episode(
        id="e1",
        ts=TS,
        instances=(
            InstanceRecord(axis="A", node_key=k(0, 0, 0, 1), value=7),
            InstanceRecord(axis="A", node_key=k(0, 0, 2, 0), polarity="negated"),
        ),
        subject="patient-1",
        time_label="first visit",
        content_label="anamnesis",
        location_label="clinic",
    )
    anamnesis_store.put_episode(episode)
    loaded = anamnesis_store.get_episode("e1", TS)
    assert loaded.subject == "patient-1"
    assert (loaded.time_label, loaded.content_label, loaded.location_label) == (
        "first visit",
        "anamnesis",
        "clinic",
    )
    assert loaded.instances[0].node_key == k(0, 0, 0, 1)
    assert loaded.instances[0].value == 7
    # the store fills in the concept-name path by default
    assert loaded.instances[0].path == (
        "anamnesis",
        "pain pattern",
        "localization",
        "head",
    )
    assert loaded.instances[1].polarity == "negated"


def test_empty_episode_is_rejected(anamnesis_store):
    with pytest.raises(StoreError):
        anamnesis_store.put_episode(Episode(id="e1", ts=TS, instances=()))


def test_composite_identity_allows_same_id(anamnesis_store):
    later = "2026-01-06T09:30:00+00:00"
    anamnesis_store.put_episode(_episode("e1", TS, head_record()))
    anamnesis_store.put_episode(_episode("e1", later, head_record()))
    assert anamnesis_store.episode_refs() == [("e1", TS), ("e1", later)]


def test_duplicate_identity_is_rejected(anamnesis_store):
    anamnesis_store.put_episode(_episode("e1", TS, head_record()))
    with pytest.raises(DuplicateEpisodeError):
        anamnesis_store.put_episode(_episode("e1", TS, head_record()))


def test_unknown_axis_and_key_are_rejected(anamnesis_store):
    with pytest.raises(UnknownAxisError):
        anamnesis_store.put_episode(
            _episode("e1", TS, InstanceRecord(axis="Z", node_key=k(0)))
        )
    with pytest.raises(UnknownKeyError):
        anamnesis_store.put_episode(
            _episode("e1", TS, InstanceRecord(axis="A", node_key=k(0, 9, 9)))
        )


def test_mismatched_path_is_rejected(anamnesis_store):
    bad = InstanceRecord(
        axis="A", node_key=k(0, 0, 0, 1), path=("anamnesis", "feeling")
    )
    with pytest.raises(StoreError):
        anamnesis_store.put_episode(_episode("e1", TS, bad))


def test_timestamps_are_canonicalized(anamnesis_store):
    anamnesis_store.put_episode(_episode("e1", "2026-01-05T10:30:00+01:00", head_record()))
    assert anamnesis_store.episode_refs() == [("e1", TS)]
    assert canonical_ts("2026-01-05T09:30:00Z") == TS


# --- unification queries -----------------------------------------------------

def test_query_by_key_finds_descendant_records(anamnesis_store):
    anamnesis_store.put_episode(_episode("e1", TS, head_record()))
    hits = anamnesis_store.query_by_key("A", parse_key("[0,0,0]"))
    assert [(h.episode_id, str(h.record.node_key)) for h in hits] == [
        ("e1", "[0,0,0,1]")
    ]


def test_query_by_root_key_matches_everything(anamnesis_store):
    anamnesis_store.put_episode(_episode("e1", TS, head_record()))
    anamnesis_store.put_episode(
        _episode("e2", TS, InstanceRecord(axis="A", node_key=k(0, 1)))
    )
    hits = anamnesis_store.query_by_key("A", k(0))
    assert {h.episode_id for h in hits} == {"e1", "e2"}


def test_query_by_key_respects_unification(anamnesis_store):
    anamnesis_store.put_episode(_episode("e1", TS, head_record()))
    assert anamnesis_store.query_by_key("A", parse_key("[0,1]")) == []


VARKEY_TEXT = "R\n  A\n    C\n      E\n    E\n  E\n"


def test_stored_keys_with_variables_match_by_unification(store):
    # the E node directly under the root receives node key [0,1,x,0]
    ix = index_hierarchy(parse_hierarchy(VARKEY_TEXT))
    ix.hierarchy.axis = "V"
    store.catalog_axis(ix)
    varkey = next(key for key in ix.node_keys.values() if X in key.elements)
    assert str(varkey) == "[0,1,x,0]"
    store.put_episode(_episode("e1", TS, InstanceRecord(axis="V", node_key=varkey)))
    # a constant in the query may land on the stored variable
    assert len(store.query_by_key("V", parse_key("[0,1,5,0]"))) == 1
    assert len(store.query_by_key("V", parse_key("[0,1]"))) == 1
    assert store.query_by_key("V", parse_key("[0,0,5,0]")) == []


def test_query_by_key_equals_linear_scan(store):
    rng = random.Random(61)
    for trial in range(10):
        axis = f"T{trial}"
        h = random_hierarchy(rng, max_nodes=25, max_concepts=10)
        h.axis = axis
        ix = index_hierarchy(h)
        store.catalog_axis(ix)
        node_keys = sorted(ix.node_keys.values(), key=str)
        written = []
        for i in range(rng.randint(5, 40)):
            eid = f"{axis}-e{i}"
            records = tuple(
                InstanceRecord(axis=axis, node_key=rng.choice(node_keys))
                for _ in range(rng.randint(1, 3))
            )
            store.put_episode(_episode(eid, TS, *records))
            written.extend((eid, record.node_key) for record in records)
        queries = [k(0)] + rng.sample(node_keys, min(5, len(node_keys)))
        queries += [Key(key.elements[: rng.randint(1, len(key))]) for key in queries]
        for query in queries:
            got = [
                (h.episode_id, h.record.node_key)
                for h in store.query_by_key(axis, query)
            ]
            expected = [
                (eid, key) for eid, key in written if partially_unifiable(query, key)
            ]
            assert sorted(got, key=str) == sorted(expected, key=str)


def test_ancestor_check_examples(anamnesis_store):
    localization = parse_key("[0,0,0]")
    assert anamnesis_store.ancestor_check("A", k(0, 0, 0, 1), localization)
    assert anamnesis_store.ancestor_check("A", k(0, 0, 0, 1), k(0))
    feeling = k(0, 1)
    pain_pattern = k(0, 0)
    assert not anamnesis_store.ancestor_check("A", feeling, pain_pattern)
    with pytest.raises(UnknownKeyError):
        anamnesis_store.ancestor_check("A", k(0, 9), k(0))
    with pytest.raises(UnknownKeyError):
        anamnesis_store.ancestor_check("A", k(0, 1), k(0, 9, 9))


def test_ancestor_check_equals_concept_on_path(store):
    rng = random.Random(67)
    for trial in range(8):
        axis = f"P{trial}"
        h = random_hierarchy(rng, max_nodes=20, max_concepts=8)
        h.axis = axis
        ix = index_hierarchy(h)
        store.catalog_axis(ix)
        for node in ix.hierarchy.nodes:
            path = set(ix.hierarchy.path_names(node.node_id))
            for concept, concept_key in ix.concept_keys.items():
                got = store.ancestor_check(axis, ix.node_keys[node.node_id], concept_key)
                assert got == (concept in path)


def test_ancestor_check_agrees_with_unification_on_goldens(anamnesis_store):
    ix = anamnesis_store.get_axis("A")
    for node_id, node_key in ix.node_keys.items():
        for concept_key in ix.concept_keys.values():
            assert anamnesis_store.ancestor_check("A", node_key, concept_key) == (
                partially_unifiable(concept_key, node_key)
            )


def test_unification_overapproximates_ancestry_under_repair_chains(store):
    # five sibling concepts exhaust digits 0..4 under C's key, so K's
    # generalization gets repaired to [0,x,0,5]; its node [0,2,0,5] then
    # unifies with C's concept key without C on its path. The parent walk
    # stays exact.
    text = (
        "R\n  A1\n    C\n      s1\n      s2\n      s3\n      s4\n      s5\n"
        "  A2\n    C\n  A3\n    K\n  A4\n    K\n"
    )
    ix = index_hierarchy(parse_hierarchy(text))
    ix.hierarchy.axis = "W"
    assert str(ix.concept_keys["C"]) == "[0,x,0]"
    assert str(ix.concept_keys["K"]) == "[0,x,0,5]"
    store.catalog_axis(ix)
    k_node = next(
        n for n in ix.hierarchy.nodes
        if n.concept == "K" and str(ix.node_keys[n.node_id]) == "[0,2,0,5]"
    )
    key = ix.node_keys[k_node.node_id]
    assert partially_unifiable(ix.concept_keys["C"], key)
    assert not store.ancestor_check("W", key, ix.concept_keys["C"])


def test_query_multiaxial_examples(store):
    quality = parse_hierarchy("quality\n  piercing\n  throbbing\n")
    quality.axis = "Q"
    localization = parse_hierarchy("localization\n  head\n    temples\n  arm\n")
    localization.axis = "L"
    store.catalog_axis(index_hierarchy(quality))
    store.catalog_axis(index_hierarchy(localization))
    store.put_episode(
        _episode(
            "e1",
            TS,
            InstanceRecord(axis="Q", node_key=k(0, 0)),
            InstanceRecord(axis="L", node_key=k(0, 0, 0)),
        )
    )
    # descriptor keys may be more general than the stored bindings
    assert store.query_multiaxial(parse_multiaxial("[(Q[0,0]),(L[0,0])]")) == {
        ("e1", TS)
    }
    # repeating the exact bindings matches
    assert store.query_multiaxial(parse_multiaxial("[(Q[0,0]),(L[0,0,0])]")) == {
        ("e1", TS)
    }
    # an axis the episode lacks fails the conjunction
    store.put_episode(
        _episode("e2", TS, InstanceRecord(axis="Q", node_key=k(0, 0)))
    )
    assert store.query_multiaxial(parse_multiaxial("[(Q[0,0]),(L[0,0])]")) == {
        ("e1", TS)
    }
    # descriptors are alternatives
    assert store.query_multiaxial(
        parse_multiaxial("[(Q[0,0]),(L[0,0])],[(Q[0])]")
    ) == {("e1", TS), ("e2", TS)}
    with pytest.raises(UnknownAxisError):
        store.query_multiaxial(parse_multiaxial("[(Nope[0])]"))


def test_negated_records_do_not_match_multiaxial_queries(anamnesis_store):
    anamnesis_store.put_episode(
        _episode(
            "e1",
            TS,
            InstanceRecord(axis="A", node_key=k(0, 0, 0, 1), polarity="negated"),
            InstanceRecord(axis="A", node_key=k(0, 1)),
        )
    )
    assert anamnesis_store.query_multiaxial(parse_multiaxial("[(A[0,0])]")) == set()
    assert anamnesis_store.query_multiaxial(parse_multiaxial("[(A[0,1])]")) == {
        ("e1", TS)
    }


# --- remapping ---------------------------------------------------------------

def test_delete_only_remap_rewrites_nothing(anamnesis_store):
    anamnesis_store.put_episode(_episode("e1", TS, head_record()))
    ix = anamnesis_store.get_axis("A")
    quality = next(n for n in ix.hierarchy.nodes if n.concept == "quality")
    new_ix, change = delete_node(ix, quality.node_id)
    report = anamnesis_store.remap_instances("A", change)
    assert report.rewritten == 0
    assert report.unchanged == 1
    assert report.orphaned == 0
    assert anamnesis_store.axis_version("A") == 2


def test_remap_requires_matching_base_version(anamnesis_store):
    ix = anamnesis_store.get_axis("A")
    quality = next(n for n in ix.hierarchy.nodes if n.concept == "quality")
    new_ix, change = delete_node(ix, quality.node_id)
    anamnesis_store.remap_instances("A", change)
    with pytest.raises(ChangeSetVersionError):
        anamnesis_store.remap_instances("A", change)


def test_remap_rewrites_shifted_subtree_and_preserves_queries(anamnesis_store):
    anamnesis_store.put_episode(_episode("e1", TS, head_record()))
    anamnesis_store.put_episode(
        _episode("e2", TS, InstanceRecord(axis="A", node_key=k(0, 1)))
    )
    fixed_queries = [k(0), k(0, 1)]
    before = {
        str(q): {h.episode_id for h in anamnesis_store.query_by_key("A", q)}
        for q in fixed_queries
    }
    ix = anamnesis_store.get_axis("A")
    feeling = next(n for n in ix.hierarchy.nodes if n.concept == "feeling")
    new_ix, change = insert_node(ix, feeling.node_id, "localization")
    report = anamnesis_store.remap_instances("A", change)
    assert report.rewritten == 1  # the head record moved to the new keys
    after = {
        str(q): {h.episode_id for h in anamnesis_store.query_by_key("A", q)}
        for q in fixed_queries
    }
    assert before == after
    # the rewritten record carries the new key of its unchanged path
    new_key = anamnesis_store.get_episode("e1", TS).instances[0].node_key
    node = new_ix.hierarchy.resolve_path(
        ("anamnesis", "pain pattern", "localization", "head")
    )
    assert new_key == new_ix.node_keys[node.node_id]


def test_remap_flags_orphans_and_keeps_them_retrievable(anamnesis_store):
    anamnesis_store.put_episode(_episode("e1", TS, head_record()))
    ix = anamnesis_store.get_axis("A")
    localization = next(n for n in ix.hierarchy.nodes if n.concept == "localization")
    new_ix, change = delete_node(ix, localization.node_id)
    report = anamnesis_store.remap_instances("A", change)
    assert report.orphaned == 1
    assert anamnesis_store.query_by_key("A", k(0)) == []
    flagged = anamnesis_store.list_flagged("A")
    assert flagged == [("e1", TS, "[0,0,0,1]", "orphaned")]
    # original bytes survive untouched
    assert anamnesis_store.get_episode("e1", TS).instances[0].node_key == k(0, 0, 0, 1)


def test_remap_without_paths_flags_no_path(tmp_path):
    with open_store(tmp_path / "kb", store_paths=False) as s:
        s.catalog_axis(index_hierarchy(parse_hierarchy(ANAMNESIS_TEXT)))
        s.put_episode(_episode("e1", TS, head_record()))
        ix = s.get_axis("A")
        quality = next(n for n in ix.hierarchy.nodes if n.concept == "quality")
        _, change = delete_node(ix, quality.node_id)
        report = s.remap_instances("A", change)
        assert report.no_path == 1
        assert s.list_flagged("A") == [("e1", TS, "[0,0,0,1]", "no-path")]


def test_orphan_recovers_when_concept_returns(anamnesis_store):
    anamnesis_store.put_episode(
        _episode("e1", TS, InstanceRecord(axis="A", node_key=k(0, 1)))
    )
    ix = anamnesis_store.get_axis("A")
    feeling = next(n for n in ix.hierarchy.nodes if n.concept == "feeling")
    _, change = delete_node(ix, feeling.node_id)
    assert anamnesis_store.remap_instances("A", change).orphaned == 1
    ix2 = anamnesis_store.get_axis("A")
    _, change2 = insert_node(ix2, ix2.hierarchy.root.node_id, "feeling")
    report = anamnesis_store.remap_instances("A", change2)
    assert report.orphaned == 0
    assert {h.episode_id for h in anamnesis_store.query_by_key("A", k(0))} == {"e1"}


# --- cases ---------------------------------------------------------------------

def test_case_round_trip(anamnesis_store):
    anamnesis_store.put_episode(_episode("e1", TS, head_record()))
    case = Case(
        id="c1",
        problem=(("e1", TS),),
        solution=(InstanceRecord(axis="A", node_key=k(0, 0, 2, 0)),),
        assessment="responded to treatment",
        outcome_score=0.8,
    )
    anamnesis_store.add_case(case)
    loaded = anamnesis_store.get_case("c1")
    assert loaded == case
    assert anamnesis_store.list_cases() == [case]


def test_case_with_dangling_episode_is_rejected(anamnesis_store):
    case = Case(id="c1", problem=(("missing", TS),), solution=())
    with pytest.raises(StoreError):
        anamnesis_store.add_case(case)


def test_episode_situation_uses_affirmed_only(anamnesis_store):
    episode = _episode(
        "e1",
        TS,
        InstanceRecord(axis="A", node_key=k(0, 0, 0, 1)),
        InstanceRecord(axis="A", node_key=k(0, 1), polarity="negated"),
    )
    situation = episode_situation(episode)
    assert [str(b.key) for b in situation.bindings] == ["[0,0,0,1]"]

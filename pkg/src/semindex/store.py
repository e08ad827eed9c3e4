"""Relational persistence: axes, episodes, instances and cases in SQLite.

Instances store the most specific node key per observation, as canonical
key text plus (by default) the concept-name path from the root, which is
what makes reindexing maintenance uniquely resolvable. Every axis is
versioned; instance rows pin the version they were written under and
queries only consider rows at the current version that are not flagged,
so stale keys can never be misread under a newer index. remap_instances
re-pins every resolvable row after maintenance and flags the rest
('orphaned': path no longer resolves, 'no-path': row was stored without
a path and cannot be remapped).

Concurrency: one writer at a time (a process-wide lock per store), any
number of readers; SQLite serializes the rest.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .dconcepts import DConceptHierarchy, parse_dconcepts
from .errors import (
    ChangeSetVersionError,
    DuplicateEpisodeError,
    SchemaVersionError,
    StoreError,
    UnknownAxisError,
    UnknownKeyError,
)
from .indexer import ChangeSet, IndexedHierarchy, render_indexed
from .keys import Key, is_instance, parse_key, partially_unifiable
from .multiaxial import AxisBinding, MultiaxialExpression, Situation, expression_matches

SCHEMA_VERSION = "1"

_SCHEMA = [
    "CREATE TABLE meta (key TEXT PRIMARY KEY, value TEXT NOT NULL)",
    """CREATE TABLE axes (
        axis TEXT NOT NULL,
        version INTEGER NOT NULL,
        title TEXT NOT NULL,
        rendered_index TEXT NOT NULL,
        index_json TEXT NOT NULL,
        fingerprint TEXT NOT NULL,
        PRIMARY KEY (axis, version)
    )""",
    """CREATE TABLE nodes (
        axis TEXT NOT NULL,
        version INTEGER NOT NULL,
        node_id INTEGER NOT NULL,
        node_key TEXT NOT NULL,
        concept TEXT NOT NULL,
        parent_key TEXT,
        depth INTEGER NOT NULL,
        PRIMARY KEY (axis, version, node_id)
    )""",
    "CREATE INDEX nodes_by_key ON nodes (axis, version, node_key)",
    """CREATE TABLE episodes (
        id TEXT NOT NULL,
        ts TEXT NOT NULL,
        subject TEXT,
        t_label TEXT,
        c_label TEXT,
        l_label TEXT,
        PRIMARY KEY (id, ts)
    )""",
    """CREATE TABLE instances (
        episode_id TEXT NOT NULL,
        ts TEXT NOT NULL,
        axis TEXT NOT NULL,
        axis_version INTEGER NOT NULL,
        node_key TEXT NOT NULL,
        key_len INTEGER NOT NULL,
        polarity TEXT NOT NULL CHECK (polarity IN ('affirmed', 'negated')),
        value_json TEXT,
        path_json TEXT,
        flag TEXT
    )""",
    "CREATE INDEX instances_by_axis ON instances (axis, axis_version, key_len)",
    "CREATE INDEX instances_by_episode ON instances (episode_id, ts)",
    """CREATE TABLE dconcept_sets (
        name TEXT PRIMARY KEY,
        source_text TEXT NOT NULL
    )""",
    """CREATE TABLE cases (
        id TEXT PRIMARY KEY,
        problem_episode_ids_json TEXT NOT NULL,
        solution_json TEXT NOT NULL,
        assessment_text TEXT,
        outcome_score REAL
    )""",
]


@dataclass(frozen=True)
class InstanceRecord:
    axis: str
    node_key: Key
    polarity: str = "affirmed"
    value: object | None = None
    path: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.polarity not in ("affirmed", "negated"):
            raise ValueError(f"invalid polarity: {self.polarity!r}")

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "key": str(self.node_key),
            "polarity": self.polarity,
            "value": self.value,
            "path": list(self.path) if self.path is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InstanceRecord":
        return cls(
            axis=data["axis"],
            node_key=parse_key(data["key"]),
            polarity=data.get("polarity", "affirmed"),
            value=data.get("value"),
            path=tuple(data["path"]) if data.get("path") else None,
        )


@dataclass(frozen=True)
class Episode:
    id: str
    ts: str
    instances: tuple[InstanceRecord, ...]
    subject: str | None = None
    time_label: str | None = None
    content_label: str | None = None
    location_label: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "ts": self.ts,
            "subject": self.subject,
            "labels": {
                "time": self.time_label,
                "content": self.content_label,
                "location": self.location_label,
            },
            "instances": [r.to_dict() for r in self.instances],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Episode":
        labels = data.get("labels") or {}
        return cls(
            id=data["id"],
            ts=canonical_ts(data["ts"]),
            instances=tuple(InstanceRecord.from_dict(r) for r in data["instances"]),
            subject=data.get("subject"),
            time_label=labels.get("time"),
            content_label=labels.get("content"),
            location_label=labels.get("location"),
        )


@dataclass(frozen=True)
class Case:
    id: str
    problem: tuple[tuple[str, str], ...]  # (episode id, ts) references, in order
    solution: tuple[InstanceRecord, ...]
    assessment: str | None = None
    outcome_score: float | None = None


@dataclass(frozen=True)
class QueryHit:
    episode_id: str
    ts: str
    record: InstanceRecord


@dataclass(frozen=True)
class RemapReport:
    axis: str
    new_version: int
    rewritten: int
    unchanged: int
    orphaned: int
    no_path: int


def canonical_ts(ts: str | datetime) -> str:
    """UTC ISO-8601; naive inputs are taken as UTC."""
    if isinstance(ts, datetime):
        moment = ts
    else:
        try:
            moment = datetime.fromisoformat(str(ts).replace("Z", "+00:00"))
        except ValueError as exc:
            raise StoreError(f"bad timestamp {ts!r}: {exc}") from None
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment.astimezone(timezone.utc).isoformat()


def episode_situation(episode: Episode) -> Situation:
    """The affirmed bindings of an episode, as a situation."""
    return Situation(
        tuple(
            AxisBinding(r.axis, r.node_key)
            for r in episode.instances
            if r.polarity == "affirmed"
        )
    )


def open_store(location: str | Path, store_paths: bool = True) -> "Store":
    return Store.open(location, store_paths=store_paths)


class Store:
    def __init__(self, conn: sqlite3.Connection, store_paths: bool = True):
        self._conn = conn
        self._write_lock = threading.Lock()
        self._axis_cache: dict[tuple[str, int], IndexedHierarchy] = {}
        self.store_paths = store_paths

    @classmethod
    def open(cls, location: str | Path, store_paths: bool = True) -> "Store":
        if str(location) == ":memory:":
            db_path = ":memory:"
        else:
            path = Path(location)
            if path.suffix in (".db", ".sqlite", ".sqlite3"):
                path.parent.mkdir(parents=True, exist_ok=True)
                db_path = str(path)
            else:
                path.mkdir(parents=True, exist_ok=True)
                db_path = str(path / "semindex.db")
        conn = sqlite3.connect(db_path, check_same_thread=False)
        conn.execute("PRAGMA foreign_keys = ON")
        store = cls(conn, store_paths=store_paths)
        store._init_schema()
        return store

    def close(self):
        self._conn.close()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc):
        self.close()

    def _init_schema(self):
        has_meta = self._conn.execute(
            "SELECT name FROM sqlite_master WHERE type='table' AND name='meta'"
        ).fetchone()
        if not has_meta:
            with self._conn:
                for statement in _SCHEMA:
                    self._conn.execute(statement)
                self._conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('schema_version', ?)",
                    (SCHEMA_VERSION,),
                )
            return
        row = self._conn.execute(
            "SELECT value FROM meta WHERE key='schema_version'"
        ).fetchone()
        if row is None or row[0] != SCHEMA_VERSION:
            found = None if row is None else row[0]
            raise SchemaVersionError(
                f"store schema version {found!r} is incompatible with {SCHEMA_VERSION!r}"
            )

    # --- axis catalog -----------------------------------------------------

    def _register_axis_version(self, ix: IndexedHierarchy, version: int):
        h = ix.hierarchy
        self._conn.execute(
            "INSERT INTO axes (axis, version, title, rendered_index, index_json, fingerprint)"
            " VALUES (?, ?, ?, ?, ?, ?)",
            (h.axis, version, h.title, render_indexed(ix), ix.to_json(), ix.fingerprint()),
        )
        for node in h.nodes:
            parent = h.parent_of(node.node_id)
            self._conn.execute(
                "INSERT INTO nodes (axis, version, node_id, node_key, concept, parent_key, depth)"
                " VALUES (?, ?, ?, ?, ?, ?, ?)",
                (
                    h.axis,
                    version,
                    node.node_id,
                    str(ix.node_keys[node.node_id]),
                    node.concept,
                    None if parent is None else str(ix.node_keys[parent.node_id]),
                    node.depth,
                ),
            )
        self._axis_cache[(h.axis, version)] = ix

    def catalog_axis(self, ix: IndexedHierarchy) -> int:
        with self._write_lock, self._conn:
            if self._current_version(ix.hierarchy.axis) is not None:
                raise StoreError(
                    f"axis {ix.hierarchy.axis!r} is already cataloged; maintain it "
                    "through insert/delete + remap"
                )
            self._register_axis_version(ix, 1)
        return 1

    def _current_version(self, axis: str) -> int | None:
        row = self._conn.execute(
            "SELECT MAX(version) FROM axes WHERE axis=?", (axis,)
        ).fetchone()
        return row[0]

    def axis_version(self, axis: str) -> int:
        version = self._current_version(axis)
        if version is None:
            raise UnknownAxisError(f"axis {axis!r} is not cataloged")
        return version

    def get_axis(self, axis: str, version: int | None = None) -> IndexedHierarchy:
        if version is None:
            version = self.axis_version(axis)
        cached = self._axis_cache.get((axis, version))
        if cached is not None:
            return cached
        row = self._conn.execute(
            "SELECT index_json FROM axes WHERE axis=? AND version=?", (axis, version)
        ).fetchone()
        if row is None:
            raise UnknownAxisError(f"axis {axis!r} version {version} is not cataloged")
        ix = IndexedHierarchy.from_json(row[0])
        self._axis_cache[(axis, version)] = ix
        return ix

    def axis_fingerprint(self, axis: str) -> str:
        row = self._conn.execute(
            "SELECT fingerprint FROM axes WHERE axis=? AND version=?",
            (axis, self.axis_version(axis)),
        ).fetchone()
        return row[0]

    def list_axes(self) -> list[tuple[str, int, str]]:
        rows = self._conn.execute(
            "SELECT axis, MAX(version), title FROM axes GROUP BY axis ORDER BY axis"
        ).fetchall()
        return [(axis, version, title) for axis, version, title in rows]

    def axes_registry(self) -> dict[str, IndexedHierarchy]:
        return {axis: self.get_axis(axis) for axis, _, _ in self.list_axes()}

    # --- d-concept sets -----------------------------------------------------

    def catalog_dconcepts(self, name: str, source_text: str) -> DConceptHierarchy:
        plan = parse_dconcepts(source_text, axes=self.axes_registry(), axis_name=name)
        with self._write_lock, self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO dconcept_sets (name, source_text) VALUES (?, ?)",
                (name, source_text),
            )
        return plan

    def get_dconcepts(self, name: str) -> DConceptHierarchy:
        row = self._conn.execute(
            "SELECT source_text FROM dconcept_sets WHERE name=?", (name,)
        ).fetchone()
        if row is None:
            raise StoreError(f"d-concept set {name!r} is not cataloged")
        return parse_dconcepts(row[0], axes=self.axes_registry(), axis_name=name)

    def list_dconcept_sets(self) -> list[str]:
        rows = self._conn.execute(
            "SELECT name FROM dconcept_sets ORDER BY name"
        ).fetchall()
        return [name for (name,) in rows]

    # --- episodes -----------------------------------------------------------

    def _node_row_for_key(self, axis: str, version: int, key: Key):
        return self._conn.execute(
            "SELECT node_id, concept FROM nodes WHERE axis=? AND version=? AND node_key=?",
            (axis, version, str(key)),
        ).fetchone()

    def put_episode(self, episode: Episode) -> tuple[str, str]:
        if not episode.instances:
            raise StoreError("an episode needs at least one instance record")
        ts = canonical_ts(episode.ts)
        rows = []
        for record in episode.instances:
            version = self._current_version(record.axis)
            if version is None:
                raise UnknownAxisError(f"axis {record.axis!r} is not cataloged")
            node = self._node_row_for_key(record.axis, version, record.node_key)
            if node is None:
                raise UnknownKeyError(
                    f"{record.node_key} is not a node key of axis {record.axis!r}"
                )
            node_id, _ = node
            path = record.path
            ix = self.get_axis(record.axis, version)
            if path is not None:
                resolved = ix.hierarchy.resolve_path(path)
                if resolved is None or resolved.node_id != node_id:
                    raise StoreError(
                        f"path {'>'.join(path)} does not lead to key {record.node_key}"
                    )
            elif self.store_paths:
                path = ix.hierarchy.path_names(node_id)
            rows.append(
                (
                    episode.id,
                    ts,
                    record.axis,
                    version,
                    str(record.node_key),
                    len(record.node_key),
                    record.polarity,
                    json.dumps(record.value) if record.value is not None else None,
                    json.dumps(list(path)) if path is not None else None,
                )
            )
        with self._write_lock:
            try:
                with self._conn:
                    self._conn.execute(
                        "INSERT INTO episodes (id, ts, subject, t_label, c_label, l_label)"
                        " VALUES (?, ?, ?, ?, ?, ?)",
                        (
                            episode.id,
                            ts,
                            episode.subject,
                            episode.time_label,
                            episode.content_label,
                            episode.location_label,
                        ),
                    )
                    self._conn.executemany(
                        "INSERT INTO instances (episode_id, ts, axis, axis_version,"
                        " node_key, key_len, polarity, value_json, path_json, flag)"
                        " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, NULL)",
                        rows,
                    )
            except sqlite3.IntegrityError:
                raise DuplicateEpisodeError(
                    f"episode ({episode.id!r}, {ts!r}) already stored"
                ) from None
        return episode.id, ts

    def get_episode(self, episode_id: str, ts: str | datetime) -> Episode:
        ts = canonical_ts(ts)
        head = self._conn.execute(
            "SELECT subject, t_label, c_label, l_label FROM episodes WHERE id=? AND ts=?",
            (episode_id, ts),
        ).fetchone()
        if head is None:
            raise StoreError(f"no episode ({episode_id!r}, {ts!r})")
        rows = self._conn.execute(
            "SELECT axis, node_key, polarity, value_json, path_json FROM instances"
            " WHERE episode_id=? AND ts=? ORDER BY rowid",
            (episode_id, ts),
        ).fetchall()
        records = tuple(
            InstanceRecord(
                axis=axis,
                node_key=parse_key(key_text),
                polarity=polarity,
                value=json.loads(value_json) if value_json is not None else None,
                path=tuple(json.loads(path_json)) if path_json is not None else None,
            )
            for axis, key_text, polarity, value_json, path_json in rows
        )
        subject, t_label, c_label, l_label = head
        return Episode(
            id=episode_id,
            ts=ts,
            instances=records,
            subject=subject,
            time_label=t_label,
            content_label=c_label,
            location_label=l_label,
        )

    def episode_refs(self) -> list[tuple[str, str]]:
        rows = self._conn.execute("SELECT id, ts FROM episodes ORDER BY ts, id").fetchall()
        return [(episode_id, ts) for episode_id, ts in rows]

    # --- unification queries -------------------------------------------------

    def query_by_key(self, axis: str, key: Key) -> list[QueryHit]:
        """All current, unflagged records whose node key the query key
        unifies into; the SQL side only pre-filters on key length."""
        version = self.axis_version(axis)
        rows = self._conn.execute(
            "SELECT episode_id, ts, node_key, polarity, value_json, path_json"
            " FROM instances"
            " WHERE axis=? AND axis_version=? AND flag IS NULL AND key_len>=?"
            " ORDER BY episode_id, ts, rowid",
            (axis, version, len(key)),
        ).fetchall()
        hits = []
        for episode_id, ts, key_text, polarity, value_json, path_json in rows:
            node_key = parse_key(key_text)
            if not partially_unifiable(key, node_key):
                continue
            hits.append(
                QueryHit(
                    episode_id,
                    ts,
                    InstanceRecord(
                        axis=axis,
                        node_key=node_key,
                        polarity=polarity,
                        value=json.loads(value_json) if value_json is not None else None,
                        path=tuple(json.loads(path_json)) if path_json else None,
                    ),
                )
            )
        return hits

    def ancestor_check(self, axis: str, node_key: Key, concept_key: Key) -> bool:
        """Walk the stored parent pointers from the node upward and test
        each station against the concept key."""
        version = self.axis_version(axis)
        ix = self.get_axis(axis, version)
        if concept_key not in ix.concept_keys.values():
            raise UnknownKeyError(f"{concept_key} is not a concept key of {axis!r}")
        row = self._conn.execute(
            "SELECT node_key, parent_key FROM nodes WHERE axis=? AND version=? AND node_key=?",
            (axis, version, str(node_key)),
        ).fetchone()
        if row is None:
            raise UnknownKeyError(f"{node_key} is not a node key of axis {axis!r}")
        while row is not None:
            key_text, parent_text = row
            if is_instance(parse_key(key_text), concept_key):
                return True
            if parent_text is None:
                return False
            row = self._conn.execute(
                "SELECT node_key, parent_key FROM nodes WHERE axis=? AND version=? AND node_key=?",
                (axis, version, parent_text),
            ).fetchone()
        return False

    def query_multiaxial(self, expr: MultiaxialExpression) -> set[tuple[str, str]]:
        """Episodes whose affirmed bindings match at least one descriptor."""
        for descriptor in expr.descriptors:
            for binding in descriptor.bindings:
                self.axis_version(binding.axis)  # raises for unknown axes
        current = {axis: self.axis_version(axis) for axis, _, _ in self.list_axes()}
        rows = self._conn.execute(
            "SELECT episode_id, ts, axis, axis_version, node_key FROM instances"
            " WHERE polarity='affirmed' AND flag IS NULL"
        ).fetchall()
        bindings: dict[tuple[str, str], list[AxisBinding]] = {}
        for episode_id, ts, axis, version, key_text in rows:
            if current.get(axis) != version:
                continue
            bindings.setdefault((episode_id, ts), []).append(
                AxisBinding(axis, parse_key(key_text))
            )
        return {
            ref
            for ref, bound in bindings.items()
            if expression_matches(expr, Situation(tuple(bound)))
        }

    def list_flagged(self, axis: str) -> list[tuple[str, str, str, str]]:
        """(episode id, ts, node key text, flag) of every flagged record."""
        rows = self._conn.execute(
            "SELECT episode_id, ts, node_key, flag FROM instances"
            " WHERE axis=? AND flag IS NOT NULL ORDER BY episode_id, ts",
            (axis,),
        ).fetchall()
        return [tuple(row) for row in rows]

    # --- maintenance -----------------------------------------------------------

    def remap_instances(self, axis: str, change_set: ChangeSet) -> RemapReport:
        """Register the change set's new index as the next version of the
        axis and re-pin every instance record by resolving its stored
        path; unresolvable or pathless records are flagged, never guessed
        or dropped."""
        current_version = self.axis_version(axis)
        if change_set.new_index.hierarchy.axis != axis:
            raise StoreError(
                f"change set belongs to axis {change_set.new_index.hierarchy.axis!r}"
            )
        current_fp = self.axis_fingerprint(axis)
        if change_set.base_fingerprint != current_fp:
            raise ChangeSetVersionError(
                "change set was computed against a different axis version"
            )
        new_ix = change_set.new_index
        new_version = current_version + 1
        rewritten = unchanged = orphaned = no_path = 0
        with self._write_lock, self._conn:
            self._register_axis_version(new_ix, new_version)
            rows = self._conn.execute(
                "SELECT rowid, node_key, path_json FROM instances WHERE axis=?",
                (axis,),
            ).fetchall()
            for rowid, key_text, path_json in rows:
                if path_json is None:
                    no_path += 1
                    self._conn.execute(
                        "UPDATE instances SET flag='no-path' WHERE rowid=?", (rowid,)
                    )
                    continue
                node = new_ix.hierarchy.resolve_path(tuple(json.loads(path_json)))
                if node is None:
                    orphaned += 1
                    self._conn.execute(
                        "UPDATE instances SET flag='orphaned' WHERE rowid=?", (rowid,)
                    )
                    continue
                new_key = new_ix.node_keys[node.node_id]
                if str(new_key) != key_text:
                    rewritten += 1
                else:
                    unchanged += 1
                self._conn.execute(
                    "UPDATE instances SET node_key=?, key_len=?, axis_version=?, flag=NULL"
                    " WHERE rowid=?",
                    (str(new_key), len(new_key), new_version, rowid),
                )
        return RemapReport(
            axis=axis,
            new_version=new_version,
            rewritten=rewritten,
            unchanged=unchanged,
            orphaned=orphaned,
            no_path=no_path,
        )

    # --- cases -------------------------------------------------------------------

    def add_case(self, case: Case) -> str:
        if not case.problem:
            raise StoreError("a case needs at least one problem episode")
        for episode_id, ts in case.problem:
            ts = canonical_ts(ts)
            row = self._conn.execute(
                "SELECT 1 FROM episodes WHERE id=? AND ts=?", (episode_id, ts)
            ).fetchone()
            if row is None:
                raise StoreError(f"case references missing episode ({episode_id!r}, {ts!r})")
        with self._write_lock:
            try:
                with self._conn:
                    self._conn.execute(
                        "INSERT INTO cases (id, problem_episode_ids_json, solution_json,"
                        " assessment_text, outcome_score) VALUES (?, ?, ?, ?, ?)",
                        (
                            case.id,
                            json.dumps(
                                [[eid, canonical_ts(ts)] for eid, ts in case.problem]
                            ),
                            json.dumps([r.to_dict() for r in case.solution]),
                            case.assessment,
                            case.outcome_score,
                        ),
                    )
            except sqlite3.IntegrityError:
                raise StoreError(f"case {case.id!r} already stored") from None
        return case.id

    def get_case(self, case_id: str) -> Case:
        row = self._conn.execute(
            "SELECT problem_episode_ids_json, solution_json, assessment_text, outcome_score"
            " FROM cases WHERE id=?",
            (case_id,),
        ).fetchone()
        if row is None:
            raise StoreError(f"no case {case_id!r}")
        problem_json, solution_json, assessment, outcome = row
        return Case(
            id=case_id,
            problem=tuple((eid, ts) for eid, ts in json.loads(problem_json)),
            solution=tuple(
                InstanceRecord.from_dict(r) for r in json.loads(solution_json)
            ),
            assessment=assessment,
            outcome_score=outcome,
        )

    def list_cases(self) -> list[Case]:
        rows = self._conn.execute("SELECT id FROM cases ORDER BY id").fetchall()
        return [self.get_case(case_id) for (case_id,) in rows]

"""Dialog sessions and the HTTP facade.

A session walks one indexed axis depth-first: the current question is
always the top of a pending-node stack and asks which children of that
node apply. Affirmed children with children of their own are pushed for
descent in document order; negated children prune their whole subtree;
back() undoes the latest answer including everything that depended on
it (state is rebuilt by replaying the remaining answers, so replays are
deterministic by construction). When the stack runs dry the session is
complete and the episode of most specific affirmed node keys plus the
explicit negations can be committed to the store.

The FastAPI app is a thin veneer: every transition lives in
DialogSession, every piece of persistent state in Store.
"""

import uuid
from dataclasses import dataclass, field
from typing import Callable

from .dconcepts import infer_most_specific
from .errors import (
    ConsistencyError,
    EngineError,
    HierarchyFormatError,
    InvalidHierarchyError,
    KeySyntaxError,
    MultiaxialSyntaxError,
    SelectionError,
    SessionError,
    StoreError,
    UnknownAxisError,
    UnknownKeyError,
    UnknownNodeError,
    WrongQuestionError,
)
from .hierarchy import parse_hierarchy, validate
from .indexer import IndexedHierarchy, index_hierarchy, render_indexed
from .keys import parse_key
from .multiaxial import AxisBinding, Situation, parse_multiaxial
from .store import Episode, InstanceRecord, Store, canonical_ts, episode_situation


@dataclass(frozen=True)
class AnswerEvent:
    node_id: int
    affirmed: tuple[int, ...] = ()
    negated: tuple[int, ...] = ()
    skipped: bool = False


@dataclass(frozen=True)
class QuestionOption:
    node_id: int
    concept: str
    has_children: bool


@dataclass(frozen=True)
class Question:
    node_id: int
    concept: str
    question_type: str
    optional: bool
    negatable: bool
    default_child: str | None
    trail: tuple[str, ...]
    options: tuple[QuestionOption, ...]
    # unrecognized ?annotations ride through untouched (hint texts,
    # notifications); the engine attaches no behavior to them
    extra_annotations: tuple[str, ...] = ()


class DialogSession:
    def __init__(self, session_id: str, index: IndexedHierarchy):
        self.id = session_id
        self.index = index
        self.axis = index.hierarchy.axis
        self.events: list[AnswerEvent] = []
        self.committed: tuple[str, str] | None = None
        self._rebuild()

    # --- state -----------------------------------------------------------

    def _rebuild(self):
        root = self.index.hierarchy.root
        self._stack: list[int] = [root.node_id] if root.children else []
        self._affirmed: set[int] = set()
        self._negated: set[int] = set()
        for event in self.events:
            self._apply(event)

    @property
    def status(self) -> str:
        return "active" if self._stack else "complete"

    @property
    def affirmed_ids(self) -> frozenset[int]:
        return frozenset(self._affirmed)

    @property
    def negated_ids(self) -> frozenset[int]:
        return frozenset(self._negated)

    @property
    def pending_ids(self) -> tuple[int, ...]:
        return tuple(self._stack)

    def current_question(self) -> Question | None:
        if not self._stack:
            return None
        h = self.index.hierarchy
        node = h.node(self._stack[-1])
        return Question(
            node_id=node.node_id,
            concept=node.concept,
            question_type=node.question_type,
            optional=node.optional,
            negatable=node.negatable,
            default_child=node.default_child,
            trail=h.path_names(node.node_id),
            options=tuple(
                QuestionOption(c.node_id, c.concept, bool(c.children))
                for c in node.children
            ),
            extra_annotations=node.extra_annotations,
        )

    # --- transitions -------------------------------------------------------

    def _under_negation(self, node_id: int) -> bool:
        return bool(self.index.hierarchy.ancestor_ids(node_id) & self._negated)

    def answer(self, node_id: int, affirmed=(), negated=(), skip: bool = False):
        if self.committed is not None:
            raise SessionError("session is committed and frozen")
        if self.index.hierarchy.has_node(node_id) and self._under_negation(node_id):
            raise ConsistencyError(
                f"node {node_id} sits below a negated node; answers there "
                "would break monotony"
            )
        if not self._stack:
            raise SessionError("session is already complete")
        if node_id != self._stack[-1]:
            raise WrongQuestionError(
                f"current question is node {self._stack[-1]}, not {node_id}"
            )
        event = AnswerEvent(
            node_id=node_id,
            affirmed=tuple(affirmed),
            negated=tuple(negated),
            skipped=skip,
        )
        self._apply(event)
        self.events.append(event)

    def _apply(self, event: AnswerEvent):
        h = self.index.hierarchy
        node = h.node(event.node_id)
        child_ids = {c.node_id: c for c in node.children}
        affirmed = list(event.affirmed)
        if event.skipped:
            if not (node.optional or node.question_type == "multi"):
                raise SelectionError(f"question at {node.concept!r} cannot be skipped")
            if affirmed or event.negated:
                raise SelectionError("a skip carries no selections")
            if node.default_child is not None:
                default = next(
                    (c for c in node.children if c.concept == node.default_child), None
                )
                if default is None:
                    raise SelectionError(
                        f"default child {node.default_child!r} does not exist"
                    )
                affirmed = [default.node_id]
        for nid in list(event.negated) + affirmed:
            if nid not in child_ids:
                raise SelectionError(f"node {nid} is not an option of this question")
        if set(affirmed) & set(event.negated):
            raise SelectionError("a child cannot be affirmed and negated at once")
        if len(set(affirmed)) != len(affirmed) or len(set(event.negated)) != len(
            event.negated
        ):
            raise SelectionError("duplicate selection")
        if event.negated and not node.negatable:
            raise SelectionError(f"question at {node.concept!r} allows no negation")
        if not event.skipped and node.question_type == "single" and len(affirmed) != 1:
            raise SelectionError(
                f"question at {node.concept!r} needs exactly one selection"
            )
        assert self._stack and self._stack[-1] == event.node_id
        self._stack.pop()
        self._negated.update(event.negated)
        ordered = [c for c in node.children if c.node_id in set(affirmed)]
        self._affirmed.update(c.node_id for c in ordered)
        for child in reversed(ordered):
            if child.children:
                self._stack.append(child.node_id)

    def back(self):
        if self.committed is not None:
            raise SessionError("session is committed and frozen")
        if not self.events:
            raise SessionError("nothing to take back")
        self.events.pop()
        self._rebuild()

    # --- completion -----------------------------------------------------------

    def episode_records(self) -> tuple[InstanceRecord, ...]:
        """Most specific affirmed node keys plus explicit negations, in
        document order."""
        if self._stack:
            raise SessionError("session is not complete")
        h = self.index.hierarchy
        affirmed = self._affirmed | {h.root.node_id}
        position = {node.node_id: i for i, node in enumerate(h.nodes)}
        records = []
        chosen = sorted(
            (
                nid
                for nid in affirmed
                if not any(c.node_id in affirmed for c in h.node(nid).children)
            ),
            key=position.__getitem__,
        )
        for nid in chosen:
            records.append(
                InstanceRecord(
                    axis=self.axis,
                    node_key=self.index.node_keys[nid],
                    path=h.path_names(nid),
                )
            )
        for nid in sorted(self._negated, key=position.__getitem__):
            records.append(
                InstanceRecord(
                    axis=self.axis,
                    node_key=self.index.node_keys[nid],
                    polarity="negated",
                    path=h.path_names(nid),
                )
            )
        return tuple(records)

    def build_episode(
        self,
        episode_id: str | None = None,
        ts: str | None = None,
        subject: str | None = None,
    ) -> Episode:
        from datetime import datetime, timezone

        return Episode(
            id=episode_id or uuid.uuid4().hex,
            ts=canonical_ts(ts if ts is not None else datetime.now(timezone.utc)),
            instances=self.episode_records(),
            subject=subject,
        )


def create_session(
    store: Store, axis: str, session_id: str | None = None
) -> DialogSession:
    index = store.get_axis(axis)
    return DialogSession(session_id or uuid.uuid4().hex, index)


def commit_episode(
    store: Store,
    session: DialogSession,
    episode_id: str | None = None,
    ts: str | None = None,
    subject: str | None = None,
    infer: bool = False,
) -> tuple[Episode, list[dict]]:
    """Persist the completed session's episode; optionally run most-specific
    inference over every cataloged d-concept set."""
    if session.committed is not None:
        raise SessionError("session already committed")
    episode = session.build_episode(episode_id, ts, subject)
    store.put_episode(episode)
    session.committed = (episode.id, episode.ts)
    inferred: list[dict] = []
    if infer:
        situation = episode_situation(episode)
        for name in store.list_dconcept_sets():
            plan = store.get_dconcepts(name)
            names = infer_most_specific(plan, situation)
            inferred.append(
                {
                    "set": name,
                    "most_specific": [
                        {"name": n, "key": str(plan.concept_key(n))} for n in names
                    ],
                }
            )
    return episode, inferred


# --- HTTP facade -------------------------------------------------------------


def _question_payload(question: Question | None) -> dict | None:
    if question is None:
        return None
    return {
        "node_id": question.node_id,
        "concept": question.concept,
        "question_type": question.question_type,
        "optional": question.optional,
        "negatable": question.negatable,
        "default_child": question.default_child,
        "trail": list(question.trail),
        "extra_annotations": list(question.extra_annotations),
        "options": [
            {
                "node_id": o.node_id,
                "concept": o.concept,
                "has_children": o.has_children,
            }
            for o in question.options
        ],
    }


def _session_view(session: DialogSession) -> dict:
    view = {
        "session_id": session.id,
        "axis": session.axis,
        "status": session.status,
        "answered": len(session.events),
        "question": _question_payload(session.current_question()),
    }
    if session.status == "complete":
        view["episode_preview"] = [r.to_dict() for r in session.episode_records()]
    return view


def _http_status(exc: EngineError) -> int:
    if isinstance(
        exc, (UnknownAxisError, UnknownNodeError, UnknownKeyError)
    ):
        return 404
    if isinstance(
        exc,
        (ConsistencyError, WrongQuestionError, SelectionError, SessionError),
    ):
        return 409
    if isinstance(
        exc,
        (
            HierarchyFormatError,
            InvalidHierarchyError,
            KeySyntaxError,
            MultiaxialSyntaxError,
        ),
    ):
        return 400
    if isinstance(exc, StoreError):
        return 409
    return 400


def create_app(store: Store, session_ids: Callable[[], str] | None = None):
    from fastapi import FastAPI, Request
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    app = FastAPI(title="semindex service")
    # the web client is typically served from another port
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, DialogSession] = {}
    new_session_id = session_ids or (lambda: uuid.uuid4().hex)

    class AxisUpload(BaseModel):
        text: str

    class DConceptUpload(BaseModel):
        name: str
        text: str

    class SessionCreate(BaseModel):
        axis: str

    class AnswerBody(BaseModel):
        node_id: int
        affirmed: list[int] = []
        negated: list[int] = []
        skip: bool = False

    class CommitBody(BaseModel):
        episode_id: str | None = None
        ts: str | None = None
        subject: str | None = None

    class InferBody(BaseModel):
        situation: str
        set: str | None = None

    class RetrieveBody(BaseModel):
        situation: str
        k: int = 5
        sequence_mode: str = "latest"

    @app.exception_handler(EngineError)
    async def engine_error_handler(request: Request, exc: EngineError):
        return JSONResponse(
            status_code=_http_status(exc),
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    def get_session(session_id: str) -> DialogSession:
        session = sessions.get(session_id)
        if session is None:
            raise UnknownNodeError(f"no session {session_id!r}")
        return session

    @app.post("/axes")
    def upload_axis(body: AxisUpload):
        h = parse_hierarchy(body.text)
        report = validate(h)
        if not report.ok:
            raise InvalidHierarchyError(report)
        ix = index_hierarchy(h)
        version = store.catalog_axis(ix)
        return {
            "axis": h.axis,
            "version": version,
            "fingerprint": ix.fingerprint(),
            "rendered": render_indexed(ix),
        }

    @app.get("/axes")
    def list_axes():
        return {
            "axes": [
                {"axis": axis, "version": version, "title": title}
                for axis, version, title in store.list_axes()
            ]
        }

    @app.get("/axes/{axis}/index")
    def get_axis_index(axis: str):
        ix = store.get_axis(axis)
        return {
            "axis": axis,
            "version": store.axis_version(axis),
            "rendered": render_indexed(ix),
        }

    @app.post("/dconcepts")
    def upload_dconcepts(body: DConceptUpload):
        plan = store.catalog_dconcepts(body.name, body.text)
        return {
            "name": body.name,
            "concepts": [
                {"name": n, "key": str(plan.concept_key(n))}
                for n in plan.names_in_document_order()
            ],
        }

    @app.post("/sessions")
    def start_session(body: SessionCreate):
        session = create_session(store, body.axis, new_session_id())
        sessions[session.id] = session
        return _session_view(session)

    @app.get("/sessions/{session_id}/question")
    def get_question(session_id: str):
        return _session_view(get_session(session_id))

    @app.post("/sessions/{session_id}/answer")
    def post_answer(session_id: str, body: AnswerBody):
        session = get_session(session_id)
        session.answer(
            body.node_id,
            affirmed=body.affirmed,
            negated=body.negated,
            skip=body.skip,
        )
        return _session_view(session)

    @app.post("/sessions/{session_id}/back")
    def post_back(session_id: str):
        session = get_session(session_id)
        session.back()
        return _session_view(session)

    @app.post("/sessions/{session_id}/commit")
    def post_commit(session_id: str, body: CommitBody | None = None, infer: bool = False):
        session = get_session(session_id)
        body = body or CommitBody()
        episode, inferred = commit_episode(
            store,
            session,
            episode_id=body.episode_id,
            ts=body.ts,
            subject=body.subject,
            infer=infer,
        )
        result = {
            "episode_id": episode.id,
            "ts": episode.ts,
            "episode": episode.to_dict(),
        }
        if infer:
            result["inferred"] = inferred
        return result

    @app.get("/query")
    def query(axis: str, key: str):
        hits = store.query_by_key(axis, parse_key(key))
        return {
            "hits": [
                {
                    "episode_id": h.episode_id,
                    "ts": h.ts,
                    "key": str(h.record.node_key),
                    "polarity": h.record.polarity,
                    "value": h.record.value,
                }
                for h in hits
            ]
        }

    @app.post("/infer")
    def infer_endpoint(body: InferBody):
        situation = Situation.from_text(body.situation, axes=store.axes_registry())
        names = [body.set] if body.set else store.list_dconcept_sets()
        results = []
        for name in names:
            plan = store.get_dconcepts(name)
            found = infer_most_specific(plan, situation)
            results.append(
                {
                    "set": name,
                    "most_specific": [
                        {"name": n, "key": str(plan.concept_key(n))} for n in found
                    ],
                }
            )
        return {"results": results}

    @app.post("/cbr/retrieve")
    def cbr_retrieve(body: RetrieveBody):
        from .cbr import retrieve

        situation = Situation.from_text(body.situation, axes=store.axes_registry())
        ranked = retrieve(
            store, situation, k=body.k, sequence_mode=body.sequence_mode
        )
        return {
            "results": [
                {
                    "case_id": case.id,
                    "score": score,
                    "solution": [r.to_dict() for r in case.solution],
                    "assessment": case.assessment,
                }
                for case, score in ranked
            ]
        }

    return app

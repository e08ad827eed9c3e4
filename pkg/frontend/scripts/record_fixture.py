"""Record golden HTTP exchanges against the real dialog service.

Drives the scripted sessions through fastapi's test client and dumps
every request/response pair to the fixtures directory. The TypeScript
tests replay these exchanges verbatim, so the UI is tested against the
service's actual wire behavior without a live server.

Run from the repository root:  python3 frontend/scripts/record_fixture.py
"""

import itertools
import json
from pathlib import Path

from fastapi.testclient import TestClient

from semindex.service import create_app
from semindex.store import open_store

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

ANAMNESIS_TEXT = """\
axis A "anamnesis"
anamnesis
  pain pattern
    localization ?single
      spine
      head
      shoulder/arm/hand
    quality
    intensity ?single
      strong
      very strong
  feeling
"""

DSET_TEXT = """\
dconcept "complaint":
  requires [(A[0])]

dconcept "head pain" parent "complaint":
  requires [(A[0,0,0,1])]
"""

NEGATION_TEXT = """\
axis N "negation demo"
root ?multi ?negatable
  blocked
    deep
  kept ?single
    tail
"""


class Recorder:
    def __init__(self, client: TestClient):
        self.client = client
        self.exchanges = []

    def call(self, method: str, path: str, body=None):
        if body is None:
            response = self.client.request(method, path)
        else:
            response = self.client.request(method, path, json=body)
        self.exchanges.append(
            {
                "request": {"method": method, "path": path, "body": body},
                "response": {"status": response.status_code, "body": response.json()},
            }
        )
        return response.json()

    def dump(self, name: str):
        FIXTURES.mkdir(exist_ok=True)
        path = FIXTURES / name
        path.write_text(
            json.dumps({"exchanges": self.exchanges}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        print(f"wrote {path} ({len(self.exchanges)} exchanges)")


def option(view, concept):
    return next(
        o["node_id"] for o in view["question"]["options"] if o["concept"] == concept
    )


def record_golden():
    store = open_store(":memory:")
    counter = itertools.count()
    app = create_app(store, session_ids=lambda: f"golden-{next(counter)}")
    recorder = Recorder(TestClient(app))

    recorder.call("POST", "/axes", {"text": ANAMNESIS_TEXT})
    recorder.call("POST", "/dconcepts", {"name": "diagnoses", "text": DSET_TEXT})
    view = recorder.call("POST", "/sessions", {"axis": "A"})
    sid = view["session_id"]

    def answer(current, concept):
        return recorder.call(
            "POST",
            f"/sessions/{sid}/answer",
            {
                "node_id": current["question"]["node_id"],
                "affirmed": [option(current, concept)],
                "negated": [],
                "skip": False,
            },
        )

    view = answer(view, "pain pattern")
    view = recorder.call("POST", f"/sessions/{sid}/back", None)
    view = answer(view, "pain pattern")
    view = answer(view, "localization")
    view = answer(view, "head")
    assert view["status"] == "complete", view
    recorder.call(
        "POST",
        f"/sessions/{sid}/commit?infer=true",
        {"episode_id": "golden-episode", "ts": "2026-03-01T10:00:00+00:00"},
    )
    recorder.dump("golden_session.json")
    store.close()


def record_warnings():
    store = open_store(":memory:")
    counter = itertools.count()
    app = create_app(store, session_ids=lambda: f"warn-{next(counter)}")
    recorder = Recorder(TestClient(app))

    recorder.call("POST", "/axes", {"text": NEGATION_TEXT})
    view = recorder.call("POST", "/sessions", {"axis": "N"})
    sid = view["session_id"]
    root_q = view["question"]
    kept = option(view, "kept")
    blocked = option(view, "blocked")

    # selecting nothing on entry violates nothing (multi), but negating
    # without affirming and then answering below the negated branch does
    recorder.call(
        "POST",
        f"/sessions/{sid}/answer",
        {"node_id": root_q["node_id"], "affirmed": [kept], "negated": [blocked], "skip": False},
    )
    # the 'kept' question is single: an empty selection is refused (409)
    kept_view_request = {
        "node_id": kept,
        "affirmed": [],
        "negated": [],
        "skip": False,
    }
    recorder.call("POST", f"/sessions/{sid}/answer", kept_view_request)
    # a direct answer below the negated subtree is a consistency breach
    blocked_child = blocked + 1  # preorder: 'deep' follows 'blocked'
    recorder.call(
        "POST",
        f"/sessions/{sid}/answer",
        {"node_id": blocked_child, "affirmed": [], "negated": [], "skip": False},
    )
    recorder.dump("warning_session.json")
    store.close()


if __name__ == "__main__":
    record_golden()
    record_warnings()

"""Command line driver.

Exit codes: 0 on success, 1 on domain errors (one-line reason on
stderr), 2 on usage errors (argparse). Output is line oriented and
byte-deterministic; --format lines switches the column separator to
tabs for scripting, the default keeps two-space columns for humans.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from .cbr import retrieve
from .dconcepts import infer_most_specific
from .errors import EngineError, UnknownNodeError
from .hierarchy import parse_hierarchy, validate
from .indexer import check_correctness, delete_node, index_hierarchy, insert_node, render_indexed
from .keys import parse_key
from .multiaxial import Situation
from .store import Case, Episode, InstanceRecord, Store, open_store

ENV_STORE = "SEMINDEX_STORE"
DEFAULT_STORE = "semindex-store"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semindex",
        description="Semantic key indexing, episode storage and inference",
    )
    parser.add_argument(
        "--store",
        default=None,
        help=f"store location (default: ${ENV_STORE} or ./{DEFAULT_STORE})",
    )
    parser.add_argument(
        "--format",
        choices=("human", "lines"),
        default="human",
        help="output style: aligned columns or tab-separated lines",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="index a hierarchy file and print it")
    p.add_argument("file")

    p = sub.add_parser("check", help="validate and verify a hierarchy file")
    p.add_argument("file")

    p = sub.add_parser("axis", help="manage cataloged axes")
    axis_sub = p.add_subparsers(dest="axis_command", required=True)
    p_add = axis_sub.add_parser("add", help="index a file and catalog the axis")
    p_add.add_argument("file")
    axis_sub.add_parser("list", help="list cataloged axes")

    p = sub.add_parser("query", help="find instances by key unification")
    p.add_argument("--axis", required=True)
    p.add_argument("--key", required=True)

    p = sub.add_parser("insert-node", help="insert a leaf node into an axis")
    p.add_argument("--axis", required=True)
    p.add_argument("--parent", required=True, help="concept path, '>'-separated")
    p.add_argument("--concept", required=True)
    p.add_argument("--remap", action="store_true", help="apply to the store")

    p = sub.add_parser("delete-node", help="delete a node (and subtree) from an axis")
    p.add_argument("--axis", required=True)
    p.add_argument("--node", required=True, help="concept path, '>'-separated")
    p.add_argument("--remap", action="store_true", help="apply to the store")

    p = sub.add_parser("episode", help="store or fetch episodes")
    ep_sub = p.add_subparsers(dest="episode_command", required=True)
    p_add = ep_sub.add_parser("add", help="store an episode from a JSON file")
    p_add.add_argument("file")
    p_get = ep_sub.add_parser("get", help="print one episode as JSON")
    p_get.add_argument("--id", required=True)
    p_get.add_argument("--ts", required=True)

    p = sub.add_parser("dconcepts", help="manage d-concept sets")
    dc_sub = p.add_subparsers(dest="dconcepts_command", required=True)
    p_add = dc_sub.add_parser("add", help="catalog a d-concept set")
    p_add.add_argument("name")
    p_add.add_argument("file")

    p = sub.add_parser("infer", help="most specific d-concepts for a situation")
    p.add_argument("--situation", required=True)
    p.add_argument("--set", default=None, help="restrict to one d-concept set")

    p = sub.add_parser("cbr", help="case base operations")
    cbr_sub = p.add_subparsers(dest="cbr_command", required=True)
    p_add = cbr_sub.add_parser("add", help="store a case from a JSON file")
    p_add.add_argument("file")
    p_ret = cbr_sub.add_parser("retrieve", help="rank cases against a situation")
    p_ret.add_argument("--situation", required=True)
    p_ret.add_argument("--k", type=int, default=5)
    p_ret.add_argument("--sequence-mode", choices=("latest", "mean"), default="latest")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _store_location(args) -> str:
    return args.store or os.environ.get(ENV_STORE) or DEFAULT_STORE


def _emit(args, *fields):
    sep = "\t" if args.format == "lines" else "  "
    print(sep.join(str(f) for f in fields))


def _resolve_node(ix, path_text: str):
    path = tuple(part.strip() for part in path_text.split(">"))
    node = ix.hierarchy.resolve_path(path)
    if node is None:
        raise UnknownNodeError(f"no node at path {path_text!r}")
    return node


def _load_indexed_file(path: str):
    text = Path(path).read_text(encoding="utf-8")
    h = parse_hierarchy(text)
    report = validate(h)
    return h, report


def run(argv) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "index":
        h, report = _load_indexed_file(args.file)
        if not report.ok:
            raise EngineError(str(report))
        sys.stdout.write(render_indexed(index_hierarchy(h)))
        return 0

    if args.command == "check":
        h, report = _load_indexed_file(args.file)
        findings = [str(v) for v in report.sibling_violations]
        findings += ["cycle: " + " -> ".join(c) for c in report.cycles]
        if report.ok:
            correctness = check_correctness(index_hierarchy(h))
            findings += [str(v) for v in correctness.violations]
        for finding in findings:
            print(finding)
        if findings:
            return 1
        print("ok")
        return 0

    if args.command == "serve":
        from .service import create_app

        import uvicorn

        store = open_store(_store_location(args))
        uvicorn.run(create_app(store), host=args.host, port=args.port)
        return 0

    with open_store(_store_location(args)) as store:
        return _run_with_store(args, store)


def _run_with_store(args, store: Store) -> int:
    if args.command == "axis" and args.axis_command == "add":
        h, report = _load_indexed_file(args.file)
        if not report.ok:
            raise EngineError(str(report))
        ix = index_hierarchy(h)
        version = store.catalog_axis(ix)
        _emit(args, h.axis, version, h.title)
        return 0

    if args.command == "axis" and args.axis_command == "list":
        for axis, version, title in store.list_axes():
            _emit(args, axis, version, title)
        return 0

    if args.command == "query":
        hits = store.query_by_key(args.axis, parse_key(args.key))
        for hit in hits:
            _emit(
                args,
                hit.episode_id,
                hit.ts,
                str(hit.record.node_key),
                hit.record.polarity,
            )
        return 0

    if args.command in ("insert-node", "delete-node"):
        ix = store.get_axis(args.axis)
        if args.command == "insert-node":
            node = _resolve_node(ix, args.parent)
            _, change = insert_node(ix, node.node_id, args.concept)
        else:
            node = _resolve_node(ix, args.node)
            _, change = delete_node(ix, node.node_id)
        sys.stdout.write(change.render())
        if args.remap:
            report = store.remap_instances(args.axis, change)
            _emit(
                args,
                "remap",
                f"version={report.new_version}",
                f"rewritten={report.rewritten}",
                f"unchanged={report.unchanged}",
                f"orphaned={report.orphaned}",
                f"no-path={report.no_path}",
            )
        return 0

    if args.command == "episode" and args.episode_command == "add":
        payload = json.loads(Path(args.file).read_text(encoding="utf-8"))
        episode = Episode.from_dict(payload)
        episode_id, ts = store.put_episode(episode)
        _emit(args, episode_id, ts)
        return 0

    if args.command == "episode" and args.episode_command == "get":
        episode = store.get_episode(args.id, args.ts)
        print(json.dumps(episode.to_dict(), sort_keys=True, indent=2))
        return 0

    if args.command == "dconcepts" and args.dconcepts_command == "add":
        text = Path(args.file).read_text(encoding="utf-8")
        plan = store.catalog_dconcepts(args.name, text)
        for name in plan.names_in_document_order():
            _emit(args, name, str(plan.concept_key(name)))
        return 0

    if args.command == "infer":
        situation = Situation.from_text(args.situation, axes=store.axes_registry())
        names = [args.set] if args.set else store.list_dconcept_sets()
        for name in names:
            plan = store.get_dconcepts(name)
            for found in infer_most_specific(plan, situation):
                _emit(args, name, found, str(plan.concept_key(found)))
        return 0

    if args.command == "cbr" and args.cbr_command == "add":
        payload = json.loads(Path(args.file).read_text(encoding="utf-8"))
        case = Case(
            id=payload["id"],
            problem=tuple((eid, ts) for eid, ts in payload["problem"]),
            solution=tuple(
                InstanceRecord.from_dict(r) for r in payload.get("solution", [])
            ),
            assessment=payload.get("assessment"),
            outcome_score=payload.get("outcome_score"),
        )
        store.add_case(case)
        _emit(args, case.id)
        return 0

    if args.command == "cbr" and args.cbr_command == "retrieve":
        situation = Situation.from_text(args.situation, axes=store.axes_registry())
        ranked = retrieve(
            store, situation, k=args.k, sequence_mode=args.sequence_mode
        )
        for case, score in ranked:
            _emit(args, case.id, f"{score:.6f}")
        return 0

    raise AssertionError(f"unhandled command {args.command!r}")


def main(argv=None) -> int:
    try:
        return run(sys.argv[1:] if argv is None else argv)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

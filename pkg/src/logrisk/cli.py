"""Command-line front end.

Every subcommand is a thin client of the HTTP service: by default the
app runs in-process (no socket), with --server the same requests go to
a remote instance. File paths are interpreted on the service side, so
remote use expects paths valid on the server.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys

import httpx

from ._version import VERSION
from .errors import EXIT_CODES


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logrisk",
        description="Re-identification risk assessment for process event logs.",
    )
    parser.add_argument("--version", action="version", version=f"logrisk {VERSION}")
    parser.add_argument(
        "--server",
        help="URL of a running logrisk service; default runs in-process",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_input(p):
        p.add_argument("path", help="event log (.xes, .xes.gz or .csv)")
        p.add_argument("--format", choices=["xes", "csv"])
        p.add_argument("--mapping", help="CSV column mapping JSON")

    p = sub.add_parser("inspect", help="summarize and validate a log")
    add_input(p)

    p = sub.add_parser("case-uniqueness",
                       help="uniqueness of case-attribute combinations")
    add_input(p)
    p.add_argument("--combos", required=True,
                   help="JSON file with attribute combinations")
    p.add_argument("--estimate", action="store_true",
                   help="also estimate population uniqueness")
    p.add_argument("--model", choices=["independence", "copula"],
                   default="independence")
    p.add_argument("--population-size", type=int)
    p.add_argument("--sampling-fraction", type=float)
    p.add_argument("--smoothing", type=float, default=0.5)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--list-unique-cases", action="store_true")
    p.add_argument("--out", help="write the result JSON here")

    p = sub.add_parser("trace-uniqueness",
                       help="uniqueness of traces under sampled knowledge")
    add_input(p)
    p.add_argument("--projections", default="A,B,C,D,E",
                   help="comma-separated presets, e.g. A,B,C,D,E")
    p.add_argument("--knowledge", default="m=4",
                   help="comma-separated levels, e.g. m=4 or q=0.1,0.5,0.9")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--timestamp-resolution", default="second",
                   choices=["second", "minute", "hour", "day", "month", "year"])
    p.add_argument("--containment", choices=["multiset", "set"],
                   default="multiset")
    p.add_argument("--no-nested", action="store_true",
                   help="independent samples per knowledge level")
    p.add_argument("--out", help="directory for result JSON and heatmap CSV")

    p = sub.add_parser("transform", help="materialize a minimized log")
    add_input(p)
    p.add_argument("--spec", required=True,
                   help="JSON file with projection (and binning) specs")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("report", help="run a full configured assessment")
    p.add_argument("--config", required=True, help="run configuration JSON")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _call(server, path, payload):
    """POST to the service; in-process unless a server URL is given."""
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            response = client.post(path, json=payload)
            return response.status_code, response.json()

    from .service import app

    async def go():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://logrisk.internal",
            timeout=None,
        ) as client:
            response = await client.post(path, json=payload)
            return response.status_code, response.json()

    return asyncio.run(go())


def _fail(body) -> int:
    if isinstance(body, dict) and "message" in body:
        print(f"logrisk: error: {body['message']}", file=sys.stderr)
        return int(body.get("exit_code", 1))
    print(f"logrisk: error: {body}", file=sys.stderr)
    return 1


def _dispatch(status, body):
    """Exit code for a service response; None means success."""
    if status == 200:
        return None
    if status == 422:
        detail = body.get("detail", body) if isinstance(body, dict) else body
        print(f"logrisk: invalid request: {detail}", file=sys.stderr)
        return EXIT_CODES["config"]
    return _fail(body)


def _input_payload(args) -> dict:
    return {"path": args.path, "format": args.format, "mapping": args.mapping}


def _read_json(path, what):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        print(f"logrisk: error: no such file: {path}", file=sys.stderr)
        return None
    except json.JSONDecodeError as exc:
        print(f"logrisk: error: {what} is not valid JSON: {exc}", file=sys.stderr)
        return None


def _write_text(path, text) -> bool:
    try:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return True
    except OSError as exc:
        print(f"logrisk: error: cannot write {path}: {exc}", file=sys.stderr)
        return False


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    if args.command == "inspect":
        status, body = _call(args.server, "/inspect", _input_payload(args))
        code = _dispatch(status, body)
        if code is not None:
            return code
        summary = body["summary"]
        print(f"#cases {summary['cases']}, "
              f"#activities {summary['distinct_activities']}")
        print(json.dumps(body, indent=2, sort_keys=True))
        return 0

    if args.command == "case-uniqueness":
        combos_doc = _read_json(args.combos, "combos file")
        if combos_doc is None:
            return EXIT_CODES["data"]
        if isinstance(combos_doc, list):
            combos_doc = {"combos": combos_doc}
        payload = {
            "input": _input_payload(args),
            "combos": combos_doc.get("combos", []),
            "denylist": combos_doc.get("denylist", []),
            "seed": args.seed,
            "list_unique_cases": args.list_unique_cases,
        }
        if args.estimate:
            payload["estimate"] = {
                "model": args.model,
                "population_size": args.population_size,
                "sampling_fraction": args.sampling_fraction,
                "smoothing": args.smoothing,
                "runs": args.runs,
            }
        status, body = _call(args.server, "/case-uniqueness", payload)
        code = _dispatch(status, body)
        if code is not None:
            return code
        text = json.dumps(body, indent=2, sort_keys=True) + "\n"
        if args.out and not _write_text(args.out, text):
            return EXIT_CODES["output"]
        print(text, end="")
        return 0

    if args.command == "trace-uniqueness":
        payload = {
            "input": _input_payload(args),
            "projections": [s for s in args.projections.split(",") if s],
            "knowledge": [s for s in args.knowledge.split(",") if s],
            "runs": args.runs,
            "seed": args.seed,
            "timestamp_resolution": args.timestamp_resolution,
            "nested": not args.no_nested,
            "containment": args.containment,
        }
        status, body = _call(args.server, "/trace-uniqueness", payload)
        code = _dispatch(status, body)
        if code is not None:
            return code
        section = json.dumps(body["section"], indent=2, sort_keys=True) + "\n"
        if args.out:
            ok = _write_text(
                os.path.join(args.out, "trace_uniqueness.json"), section
            ) and _write_text(
                os.path.join(args.out, "heatmap.csv"), body["heatmap_csv"]
            )
            if not ok:
                return EXIT_CODES["output"]
        print(section, end="")
        return 0

    if args.command == "transform":
        spec_doc = _read_json(args.spec, "transform spec")
        if spec_doc is None:
            return EXIT_CODES["data"]
        payload = {
            "input": _input_payload(args),
            "spec": spec_doc.get("projection", spec_doc),
            "bins": spec_doc.get("bins", []),
            "out": args.out,
        }
        status, body = _call(args.server, "/transform", payload)
        code = _dispatch(status, body)
        if code is not None:
            return code
        print(json.dumps(body, indent=2, sort_keys=True))
        return 0

    if args.command == "report":
        status, body = _call(
            args.server, "/report",
            {"config_path": os.path.abspath(args.config)},
        )
        code = _dispatch(status, body)
        if code is not None:
            return code
        for path in body["paths"]:
            print(f"wrote {path}")
        return int(body["exit_code"])

    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())

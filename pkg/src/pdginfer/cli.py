"""Command-line client for the inference service.

Every subcommand is a thin wrapper over the service handlers and prints a
machine-readable JSON report on stdout.  By default the handlers run
in-process (deterministic, no server needed); pass ``--server URL`` to
route the request to a running service instead.

Exit codes: 0 success, 2 input error, 3 solver failure (including
conditioning on an improbable event), 4 unsupported regime.
"""

from __future__ import annotations

import argparse
import json
import sys

from .service import handlers
from .service.schemas import (
    CompileRequest,
    GenerateKtreeRequest,
    GenerateRandomRequest,
    InferRequest,
    OracleRequest,
)

EXIT_CODES = {
    "input-error": 2,
    "solver-failure": 3,
    "improbable-event": 3,
    "unsupported-regime": 4,
}

ENDPOINTS = {
    "infer": "/infer",
    "gen-random": "/generate/random",
    "gen-ktree": "/generate/ktree",
    "compile": "/compile",
    "oracle": "/oracle",
}


def _fail(code: str, message: str, details=None) -> int:
    payload = {"error": {"code": code, "message": message}}
    if details:
        payload["error"]["details"] = details
    print(json.dumps(payload, indent=2), file=sys.stderr)
    return EXIT_CODES.get(code, 3)


def _emit(payload: dict) -> int:
    print(json.dumps(payload, indent=2, sort_keys=False))
    return 0


def _read_document(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise handlers.ServiceError("input-error", f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise handlers.ServiceError("input-error", f"bad JSON in {path}: {exc}")


def _dispatch(command: str, request, server: str = None) -> dict:
    """Run in-process, or POST to a running service when --server is given."""
    if server:
        import httpx

        url = server.rstrip("/") + ENDPOINTS[command]
        resp = httpx.post(url, json=request.model_dump(), timeout=600.0)
        if resp.status_code != 200:
            detail = resp.json().get("detail", {})
            raise handlers.ServiceError(
                detail.get("code", "solver-failure"),
                detail.get("message", resp.text),
                detail.get("details"),
            )
        return resp.json()
    handler = {
        "infer": handlers.handle_infer,
        "gen-random": handlers.handle_generate_random,
        "gen-ktree": handlers.handle_generate_ktree,
        "compile": handlers.handle_compile,
        "oracle": handlers.handle_oracle,
    }[command]
    return handler(request)


def cmd_infer(args) -> int:
    doc = _read_document(args.file)
    req = InferRequest(
        pdg=doc,
        gamma=args.gamma,
        query=args.query,
        eps=args.eps,
        include_beliefs=args.dump_beliefs is not None,
        tol=args.tol,
        allow_cccp=args.allow_cccp,
    )
    out = _dispatch("infer", req, args.server)
    beliefs = out.pop("beliefs", None)
    if args.dump_beliefs is not None and beliefs is not None:
        with open(args.dump_beliefs, "w") as fh:
            json.dump(beliefs, fh, indent=2)
    return _emit(out)


def cmd_gen_random(args) -> int:
    req = GenerateRandomRequest(seed=args.seed, n=args.n, arcs=args.arcs, vals=args.vals)
    out = _dispatch("gen-random", req, args.server)
    text = json.dumps(out["pdg"], indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        return _emit({"written": args.out})
    sys.stdout.write(text)
    return 0


def cmd_gen_ktree(args) -> int:
    req = GenerateKtreeRequest(
        seed=args.seed, n=args.n, treewidth=args.treewidth, arcs=args.arcs, vals=args.vals
    )
    out = _dispatch("gen-ktree", req, args.server)
    text = json.dumps(out["pdg"], indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        return _emit({"written": args.out})
    sys.stdout.write(text)
    return 0


def cmd_compile(args) -> int:
    doc = _read_document(args.file)
    req = CompileRequest(pdg=doc, gamma=args.gamma, variant=args.variant)
    out = _dispatch("compile", req, args.server)
    dump = out.pop("dump")
    if args.dump_conic:
        with open(args.dump_conic, "w") as fh:
            fh.write(dump)
        out["dump_path"] = args.dump_conic
    else:
        out["dump"] = dump
    return _emit(out)


def cmd_oracle(args) -> int:
    if args.cnf:
        with open(args.cnf) as fh:
            req = OracleRequest(
                cnf=fh.read(), gamma=args.gamma, restarts=args.restarts, iters=args.iters
            )
    else:
        if not args.file:
            raise handlers.ServiceError("input-error", "need a PDG file or --cnf")
        req = OracleRequest(
            pdg=_read_document(args.file),
            gamma=args.gamma,
            restarts=args.restarts,
            iters=args.iters,
        )
    return _emit(_dispatch("oracle", req, args.server))


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("pdginfer.service.app:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdginfer",
        description="Inference for probabilistic dependency graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_server(p):
        p.add_argument("--server", help="route the request to a running service URL")

    p = sub.add_parser("infer", help="run inference on a PDG file")
    p.add_argument("file")
    p.add_argument("--gamma", default="1", help='"0", "0+", or a positive float')
    p.add_argument("--query", help='e.g. "Y=1" or "Y=1|X=0"')
    p.add_argument("--eps", type=float, default=1e-4, help="query precision")
    p.add_argument("--tol", type=float, default=1e-8, help="solver tolerance")
    p.add_argument("--dump-beliefs", metavar="PATH", help="write beliefs JSON here")
    p.add_argument("--allow-cccp", action="store_true")
    add_server(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("gen-random", help="sample a random PDG")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, help="variable count (default: sampled from 5..9)")
    p.add_argument("--arcs", type=int, help="arc count (default: sampled from 7..14)")
    p.add_argument("--vals", type=int, help="values per variable (default: 2 or 3)")
    p.add_argument("--out", help="write the document here instead of stdout")
    add_server(p)
    p.set_defaults(func=cmd_gen_random)

    p = sub.add_parser("gen-ktree", help="sample a PDG on a random k-tree")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--treewidth", type=int, default=2)
    p.add_argument("--arcs", type=int, default=10)
    p.add_argument("--vals", type=int, default=2)
    p.add_argument("--out")
    add_server(p)
    p.set_defaults(func=cmd_gen_ktree)

    p = sub.add_parser("compile", help="compile to a standard-form conic program")
    p.add_argument("file")
    p.add_argument("--gamma", default="1")
    p.add_argument("--variant", default="linear-p", choices=["linear-p", "cone-p"])
    p.add_argument("--dump-conic", metavar="PATH")
    add_server(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("oracle", help="brute-force ground truth / CNF tools")
    p.add_argument("file", nargs="?")
    p.add_argument("--cnf", metavar="PATH", help="DIMACS CNF input")
    p.add_argument("--gamma", default="1")
    p.add_argument("--restarts", type=int, default=2)
    p.add_argument("--iters", type=int, default=2000)
    add_server(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("serve", help="run the FastAPI service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except handlers.ServiceError as exc:
        return _fail(exc.code, exc.message, exc.details)


if __name__ == "__main__":
    sys.exit(main())

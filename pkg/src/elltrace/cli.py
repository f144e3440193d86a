"""Command line client.

Runs the service handlers in-process, or against a running server with
``--server URL``.  Exit codes: 0 pass, 1 tolerance failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

from pydantic import ValidationError

from . import service
from .service import (EisensteinRequest, PropagatorRequest, QTableRequest, RunConfig,
                      SelftestRequest, Table, TraceRequest, UsageError)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _pair(kind):
    def conv(text):
        try:
            a, b = text.split(",")
            return kind(a), kind(b)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected two comma-separated values, got {text!r}")
    return conv


def _common(p):
    p.add_argument("--tau", type=_pair(float), help="RE,IM (default 0.3,1.7)")
    p.add_argument("--convention", choices=["rescaled", "bd"])
    p.add_argument("--hbar-window", type=_pair(int), metavar="M,N")
    p.add_argument("--max-deriv", type=int, metavar="K")
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=["json", "csv"])
    p.add_argument("--server", help="base URL of a running elltrace service")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="elltrace", description="Elliptic trace maps for free chiral algebras.")
    sub = ap.add_subparsers(dest="cmd", parser_class=_Parser)

    p = sub.add_parser("propagator", help="evaluate d_z^a d_w^b P(z, w)")
    _common(p)
    p.add_argument("--z", type=_pair(float), required=True)
    p.add_argument("--w", type=_pair(float), default=(0.0, 0.0))
    p.add_argument("--deriv", type=_pair(int), default=(0, 0), metavar="A,B")

    p = sub.add_parser("qtable", help="diagonal Taylor data Q(k,l)")
    _common(p)
    p.add_argument("--kmax", type=int, default=8)

    p = sub.add_parser("eisenstein", help="Eisenstein series E_k; 'hat2' for the completion")
    _common(p)
    p.add_argument("weights", nargs="+")

    p = sub.add_parser("trace", help="trace of a chain file or preset")
    _common(p)
    p.add_argument("chain_file", nargs="?")
    p.add_argument("--preset", choices=["unit", "dbeta-gamma"])

    p = sub.add_parser("selftest", help="run a verification suite")
    _common(p)
    p.add_argument("suite")
    p.add_argument("--N", type=int, default=2)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return ap


def _config(ns) -> RunConfig:
    kw = {}
    for key in ("tau", "convention", "hbar_window", "max_deriv", "tol", "seed", "format"):
        v = getattr(ns, key, None)
        if v is not None:
            kw[key] = v
    return RunConfig(**kw)


def _request(ns, cfg):
    if ns.cmd == "propagator":
        return "propagator", PropagatorRequest(config=cfg, z=ns.z, w=ns.w, a=ns.deriv[0],
                                               b=ns.deriv[1])
    if ns.cmd == "qtable":
        return "qtable", QTableRequest(config=cfg, kmax=ns.kmax)
    if ns.cmd == "eisenstein":
        return "eisenstein", EisensteinRequest(config=cfg, weights=ns.weights)
    if ns.cmd == "trace":
        if (ns.preset is None) == (ns.chain_file is None):
            raise UsageError("give either a chain file or --preset")
        if ns.preset:
            return "trace", TraceRequest(config=cfg, preset=ns.preset)
        try:
            with open(ns.chain_file) as fh:
                desc = json.load(fh)
        except OSError as e:
            raise UsageError(f"cannot read {ns.chain_file}: {e.strerror}")
        except json.JSONDecodeError as e:
            raise UsageError(f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}")
        if not isinstance(desc, dict):
            raise UsageError("schema error at /: chain description must be an object")
        return "trace", TraceRequest(config=cfg, chain=desc)
    if ns.cmd == "selftest":
        return "selftest", SelftestRequest(config=cfg, suite=ns.suite, N=ns.N)
    raise UsageError("no command given")


HANDLERS = {
    "propagator": service.cmd_propagator,
    "qtable": service.cmd_qtable,
    "eisenstein": service.cmd_eisenstein,
    "trace": service.cmd_trace,
    "selftest": service.cmd_selftest,
}


def _remote(url, endpoint, req) -> Table:
    import httpx
    r = httpx.post(f"{url.rstrip('/')}/{endpoint}", json=req.model_dump(mode="json"), timeout=600)
    if r.status_code == 422:
        raise UsageError(str(r.json().get("detail")))
    r.raise_for_status()
    return Table(**r.json())


def _serve(ns):
    import uvicorn
    uvicorn.run("elltrace.api:app", host=ns.host, port=ns.port)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    if ns.cmd == "serve":
        return _serve(ns)
    try:
        cfg = _config(ns)
        endpoint, req = _request(ns, cfg)
        if ns.server:
            table = _remote(ns.server, endpoint, req)
        else:
            table = HANDLERS[endpoint](req)
    except ValidationError as e:
        err = e.errors()[0]
        loc = "/".join(str(x) for x in err["loc"])
        print(f"elltrace: error: {loc}: {err['msg']}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as e:
        print(f"elltrace: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(table.render(cfg.format))
    for n in table.notes:
        print(n, file=sys.stderr)
    return EXIT_FAIL if table.status == "fail" else EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())

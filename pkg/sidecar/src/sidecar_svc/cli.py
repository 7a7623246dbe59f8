"""Entry point: serve over stdio (default) or TCP, or record a replay fixture."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .backend import HashedLinearModel
from .errors import ModelConfigError, RecordingError
from .record import load_requests, record_replay, write_fixture
from .server import SidecarTCPServer, serve_stream

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _Usage(message)


class _Usage(Exception):
    pass


def build_parser() -> _Parser:
    parser = _Parser(prog="docboost-sidecar",
                     description="Serve section logits, context probabilities, "
                                 "and embeddings over newline-delimited JSON.")
    parser.add_argument("--models", help="JSON model config "
                                         "(dim, seed, optional gains and name)")
    sub = parser.add_subparsers(dest="command")

    serve = sub.add_parser("serve", help="answer requests (the default command)")
    _serve_flags(serve)
    _serve_flags(parser)  # bare `docboost-sidecar --stdio` works too

    record = sub.add_parser("record", help="capture a replay fixture")
    record.add_argument("--requests", required=True,
                        help="JSON array of {op, payload} requests")
    record.add_argument("--out", required=True, help="fixture path to write")
    return parser


def _serve_flags(parser: argparse.ArgumentParser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--stdio", action="store_true",
                       help="serve standard input/output (default)")
    group.add_argument("--port", type=int,
                       help="serve TCP connections on 127.0.0.1:PORT instead")


def _load_model(path: str | None) -> HashedLinearModel:
    return HashedLinearModel.from_file(path) if path else HashedLinearModel()


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        model = _load_model(args.models)
        if args.command == "record":
            fixture = record_replay(load_requests(args.requests), model)
            write_fixture(args.out, fixture)
            print(args.out)
            return EXIT_OK
        if args.port is not None:
            with SidecarTCPServer(args.port, model) as server:
                print(f"listening on 127.0.0.1:{server.port}", file=sys.stderr)
                try:
                    server.serve_forever()
                except KeyboardInterrupt:
                    pass
            return EXIT_OK
        serve_stream(sys.stdin, sys.stdout, model)
        return EXIT_OK
    except _Usage as exc:
        print(f"docboost-sidecar: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelConfigError, RecordingError) as exc:
        print(f"docboost-sidecar: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT


if __name__ == "__main__":
    sys.exit(main())

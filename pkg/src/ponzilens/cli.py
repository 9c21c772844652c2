"""Command-line interface: analyze bytecode, disassemble, or run the service."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bytecode import Source, SourceKind, disassemble, instruction_records, parse_hex
from .cfg import PathLimits
from .pipeline import analyze, analyze_bytes, dump_trace, emit_cfg_dot
from .rpc import default_endpoint, fetch_bytecode


def _load_input(args) -> tuple[bytes, str | None]:
    if args.address:
        endpoint = args.rpc or default_endpoint()
        if not endpoint:
            raise SystemExit("--address requires --rpc URL or PONZILENS_RPC_URL")
        code = fetch_bytecode(args.address, endpoint)
        return code.data, args.address.lower()
    if args.input is None:
        raise SystemExit("give a hex file, inline 0xHEX, or --address")
    text = args.input
    if text.startswith("0x") or text.startswith("0X"):
        return parse_hex(text).data, None
    path = Path(text)
    if not path.exists():
        raise SystemExit(f"input file {text!r} does not exist (inline hex needs a 0x prefix)")
    return parse_hex(path.read_text(), Source(SourceKind.FILE, path=str(path))).data, None


def _cmd_analyze(args) -> int:
    code, address = _load_input(args)
    limits = PathLimits(max_paths=args.max_paths, max_blocks_per_path=args.max_blocks)

    if args.emit_cfg_dot:
        Path(args.emit_cfg_dot).write_text(emit_cfg_dot(code))
        print(f"wrote CFG dot to {args.emit_cfg_dot}", file=sys.stderr)

    if args.dump_trace is not None or args.no_cache:
        result = analyze_bytes(code, limits, address=address)
    else:
        result = analyze(code, limits, address=address)

    if args.dump_trace is not None:
        trace = dump_trace(result, args.dump_trace)
        print(json.dumps(trace, indent=2, sort_keys=True))
        return 0

    if args.out:
        Path(args.out).write_text(result.serialized)
        print(f"wrote report to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(result.serialized)
    return 0


def _cmd_disasm(args) -> int:
    code, _ = _load_input(args)
    for rec in instruction_records(disassemble(code)):
        print(json.dumps(rec, sort_keys=True))
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(args.bind)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ponzilens",
        description="Turn contract bytecode into Ponzi-feature-annotated execution-path reports.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log pipeline progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_input_args(p):
        p.add_argument("input", nargs="?", help="hex file path or inline 0xHEX")
        p.add_argument("--address", help="contract address to fetch over RPC")
        p.add_argument("--rpc", help="JSON-RPC endpoint (default: $PONZILENS_RPC_URL)")

    p_analyze = sub.add_parser("analyze", help="run the full pipeline and emit the report")
    add_input_args(p_analyze)
    p_analyze.add_argument("--max-paths", type=int, default=4096)
    p_analyze.add_argument("--max-blocks", type=int, default=512)
    p_analyze.add_argument("--out", help="write the report here instead of stdout")
    p_analyze.add_argument("--emit-cfg-dot", metavar="FILE", help="also write the CFG in DOT form")
    p_analyze.add_argument("--dump-trace", metavar="PATH_ID",
                           help="print one path's raw event trace instead of the report")
    p_analyze.add_argument("--no-cache", action="store_true", help="bypass the report cache")
    p_analyze.set_defaults(fn=_cmd_analyze)

    p_disasm = sub.add_parser("disasm", help="emit the instruction listing as JSON lines")
    add_input_args(p_disasm)
    p_disasm.set_defaults(fn=_cmd_disasm)

    p_serve = sub.add_parser("serve", help="run the HTTP report service")
    p_serve.add_argument("--bind", default="127.0.0.1:8571", help="HOST:PORT to listen on")
    p_serve.set_defaults(fn=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

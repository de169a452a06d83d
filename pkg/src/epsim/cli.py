"""Command-line front end.

Four subcommands: `run` executes a scenario script and writes its
artifacts (trace, roots, management snapshot, conformance report) into
an output directory; `era-resolve` answers bootstrap queries against a
registry fixture; `pin-verify` replays a pin chain out of a ledger
snapshot; `report` emits the requirement-conformance tables.

Exit codes: 0 success (including a NOT FOUND resolution), 1 a scenario
assertion or verification failed, 2 bad input (parse errors, malformed
arguments, unreadable snapshots).  Hex arguments are lowercase without
a 0x prefix.  All randomness comes from --seed; omitting it means 0.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__, conformance
from .errors import (
    AssertionFailure,
    ChainBrokenError,
    DomainNotFoundError,
    InvalidDomainError,
    ScriptError,
    SimError,
    SnapshotFormatError,
)
from .ledger import load_snapshot, write_snapshot
from .pinning import pin_chain_verify
from .script import ScenarioRunner, parse_script

_U64_MAX = 2**64 - 1


def _read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed <= _U64_MAX:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return seed


def _hex_arg(value: str, width: int | None, what: str) -> bytes:
    if value != value.lower() or value.startswith("0x"):
        raise argparse.ArgumentTypeError(f"{what} must be lowercase hex without 0x")
    try:
        raw = bytes.fromhex(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what} is not valid hex") from None
    if width is not None and len(raw) != width:
        raise argparse.ArgumentTypeError(f"{what} must be {width} bytes")
    return raw


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"epsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario script")
    run.add_argument("--script", required=True, help="scenario file")
    run.add_argument("--seed", type=_seed, default=0, help="64-bit run seed (default 0)")
    run.add_argument("--out", required=True, help="directory for run artifacts")

    resolve = sub.add_parser("era-resolve", help="resolve bootstrap attributes from a fixture")
    resolve.add_argument("--fixture", required=True, help="registry fixture (scenario grammar)")
    resolve.add_argument("domain")
    resolve.add_argument("names", nargs="+", metavar="name")

    verify = sub.add_parser("pin-verify", help="replay a pin chain from a ledger snapshot")
    verify.add_argument("--snapshot", required=True, help="management-chain state file")
    verify.add_argument(
        "--sidechain", required=True, type=lambda v: _hex_arg(v, 32, "sidechain id")
    )
    verify.add_argument("--secret", required=True, type=lambda v: _hex_arg(v, None, "secret"))
    verify.add_argument("--count", required=True, type=int, help="expected pin count")

    report = sub.add_parser("report", help="write the requirement-conformance report")
    report.add_argument("--out", required=True, help="text report path; .json written alongside")

    return parser


def _cmd_run(args) -> int:
    try:
        text = _read_text(args.script)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    try:
        statements = parse_script(text)
    except ScriptError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    runner = ScenarioRunner(seed=args.seed, out_dir=args.out)
    os.makedirs(args.out, exist_ok=True)
    try:
        runner.run(statements)
    except (AssertionFailure, SimError) as err:
        # keep whatever trace exists: a failed run should still be inspectable
        _write_lines(os.path.join(args.out, "trace.log"), runner.net.trace)
        print(f"failed: {err}", file=sys.stderr)
        return 1

    _write_lines(os.path.join(args.out, "trace.log"), runner.net.trace)
    _write_lines(os.path.join(args.out, "roots.txt"), runner.roots_lines())
    write_snapshot(runner.net.mgmt, os.path.join(args.out, "mgmt.epsl"))
    conformance.write_report(
        os.path.join(args.out, "conformance.txt"),
        os.path.join(args.out, "conformance.json"),
    )
    print(
        f"ok: {len(statements)} statements, {runner.net.step_count} delivery steps, "
        f"{len(runner.net.trace)} messages"
    )
    return 0


def _write_lines(path: str, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def _render_value(value: bytes) -> str:
    try:
        text = value.decode("utf-8")
    except UnicodeDecodeError:
        return "0x" + value.hex()
    if text and all(ch.isprintable() for ch in text):
        return text
    return "0x" + value.hex()


def _cmd_era_resolve(args) -> int:
    try:
        text = _read_text(args.fixture)
        statements = parse_script(text)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ScriptError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    runner = ScenarioRunner(seed=0)
    runner.run(statements)

    contract_names = {cid: name for name, cid in runner.registries.items()}

    def label(cid: bytes) -> str:
        return contract_names.get(cid, cid.hex()[:8])

    from . import era

    try:
        got = era.resolve(runner.net.mgmt, runner.net.trusted_roots, args.domain, args.names)
    except InvalidDomainError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DomainNotFoundError:
        print("NOT FOUND")
        return 0

    for name in args.names:
        hits = [h for h in got.hits if h.name == name]
        if not hits:
            print(f"{name} NOT FOUND")
            continue
        for hit in hits:
            trail = ">".join(label(c) for c in hit.path)
            print(f"{name}={_render_value(hit.value)} root={label(hit.root)} via={trail}")
    return 0


def _cmd_pin_verify(args) -> int:
    if args.count < 0:
        print("error: count must be non-negative", file=sys.stderr)
        return 2
    try:
        contracts = load_snapshot(args.snapshot)
    except (OSError, SnapshotFormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    pinning_cids = sorted(cid for cid, c in contracts.items() if c.kind == "mgmt-pinning")
    if not pinning_cids:
        print("error: snapshot holds no pinning contract", file=sys.stderr)
        return 2
    cells = contracts[pinning_cids[0]].cells
    try:
        found = pin_chain_verify(cells, args.sidechain, args.secret, args.count)
    except ChainBrokenError as err:
        print(f"broken: first missing pin at index {err.index}", file=sys.stderr)
        return 1
    for index, (map_key, entry) in enumerate(found):
        print(f"{index} {map_key.hex()} {entry.pin.hex()}")
    return 0


def _cmd_report(args) -> int:
    json_path = os.path.splitext(args.out)[0] + ".json"
    out_dir = os.path.dirname(args.out)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    conformance.write_report(args.out, json_path)
    print(f"wrote {args.out} and {json_path}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "era-resolve": _cmd_era_resolve,
    "pin-verify": _cmd_pin_verify,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

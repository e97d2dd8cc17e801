"""Command line entry point.

Exit codes: 0 expected outcome (an expected vulnerability counts), 1 an
unexpected protocol outcome, 2 usage or configuration error.

``FOGGATE_CONFIG`` may name a JSON file whose keys match the long flag names
(``key``, ``ledger``, ``listen``, ``connect``, ``server_key``, ``scenario``,
``seed``, ``payload``, ``out``, ``timeout``) plus an optional ``thresholds``
object of scenario settings.  Flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import threading
import time
from pathlib import Path

from . import crypto, harness
from . import ledger as ledger_mod
from .audit import write_audit_log
from .client import ClientNode, Phase
from .errors import ConfigurationError, FogGateError, IntegrityError, LedgerError
from .identity import DeviceIdentity, load_identity, load_public_identity, save_identity
from .ledger import LedgerEntry, Status
from .server import ServerNode
from .simnet import tcp_connect, tcp_listen

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2

CONFIG_ENV = "FOGGATE_CONFIG"
CONFIG_FIELDS = ("key", "ledger", "listen", "connect", "server_key", "scenario",
                 "seed", "payload", "out", "timeout")

log = logging.getLogger("foggate")


class UsageError(Exception):
    """Missing or invalid configuration; reported with exit code 2."""


def _say(*parts) -> None:
    print(*parts, flush=True)


def _err(message: str) -> None:
    print(f"foggate: {message}", file=sys.stderr, flush=True)


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    unknown = set(data) - set(CONFIG_FIELDS) - {"thresholds"}
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def _merge(args: argparse.Namespace, config: dict) -> argparse.Namespace:
    for name in CONFIG_FIELDS:
        if getattr(args, name, None) is None and name in config:
            setattr(args, name, config[name])
    args.thresholds = config.get("thresholds", {})
    return args


def _require(args, *names) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if not getattr(args, n, None)]
    if missing:
        raise UsageError(f"{args.command} needs {', '.join(missing)}")


# keygen


def cmd_keygen(args) -> int:
    _require(args, "out")
    try:
        identity = DeviceIdentity.generate(args.serial, bits=args.bits)
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from None
    try:
        pub = save_identity(identity, args.out, force=args.force)
    except FileExistsError:
        raise UsageError(f"{args.out} exists; pass --force to overwrite") from None
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc}") from None
    _say(f"serial {identity.serial_id}")
    _say(f"wrote {args.out} and {pub}")
    return EXIT_OK


# ledger administration


def _load_ledger(path) -> ledger_mod.Ledger:
    try:
        return ledger_mod.load(path)
    except LedgerError as exc:
        raise UsageError(str(exc)) from None


def _registration(pub_path, status: Status, timestamp: int) -> LedgerEntry:
    try:
        ident = load_public_identity(pub_path)
    except (OSError, ValueError, FogGateError) as exc:
        raise UsageError(f"cannot read key file {pub_path}: {exc}") from None
    return LedgerEntry.identity(ident.serial_id, crypto.public_key_to_bytes(ident.public_key),
                                status, timestamp)


def cmd_ledger(args) -> int:
    _require(args, "ledger")
    path = Path(args.ledger)
    action = args.action

    if action == "init":
        if path.exists() and not args.force:
            raise UsageError(f"{path} exists; pass --force to overwrite")
        ledger_mod.save(ledger_mod.genesis(int(time.time())), path)
        _say(f"initialized {path}")
        return EXIT_OK

    if action == "verify":
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc}") from None
        try:
            chain = ledger_mod.decode_ledger(data)
        except LedgerError as exc:
            _say(f"invalid: unreadable ledger ({exc})")
            return EXIT_UNEXPECTED
        report = ledger_mod.verify_chain(chain)
        if report.valid:
            _say(f"valid ({len(chain)} blocks)")
            return EXIT_OK
        _say(f"invalid: first_bad_index={report.first_bad_index}")
        return EXIT_UNEXPECTED

    chain = _load_ledger(path)
    if action == "show":
        for digest, entry in chain.identities().items():
            fingerprint = crypto.one_way_hash(entry.public_key).hex()[:16]
            _say(f"{digest.hex()}  {entry.status.label:<8} key={fingerprint} since={entry.timestamp}")
        _say(f"{len(chain)} blocks, {len(chain.identities())} identities, "
             f"{len(chain.transactions())} transactions")
        return EXIT_OK

    _require(args, "key")
    status = Status.BLOCKED if args.status == "blocked" else Status.ALLOWED
    now = int(time.time())
    keys = [args.key] if isinstance(args.key, str) else args.key
    entries = [_registration(p, status, now) for p in keys]
    if action == "add":
        for entry in entries:
            chain = chain.append_block([entry], now)
    else:  # block: all registrations in one block
        chain = chain.append_block(entries, now)
    ledger_mod.save(chain, path)
    _say(f"registered {len(entries)} device(s) as {status.label}; ledger has {len(chain)} blocks")
    return EXIT_OK


# network roles


def cmd_serve(args) -> int:
    _require(args, "key", "ledger", "listen")
    try:
        identity = load_identity(args.key)
    except (OSError, ValueError, FogGateError) as exc:
        raise UsageError(f"cannot read key file {args.key}: {exc}") from None
    chain = _load_ledger(args.ledger)
    try:
        server = ServerNode(identity, chain)
    except IntegrityError as exc:
        raise UsageError(str(exc)) from None
    listener = tcp_listen(args.listen)
    host = listener.sock.getsockname()[0]
    _say(f"listening on {host}:{listener.port} as {identity.serial_id}")

    save_lock = threading.Lock()

    def persist():
        with save_lock:
            ledger_mod.save(server.ledger, args.ledger)
            if args.audit_out:
                with open(args.audit_out, "w") as fh:
                    write_audit_log(list(server.audit_log), fh)

    def session(transport):
        with transport:
            try:
                handled = server.serve(transport)
                log.info("%s closed after %d packets", transport.peer, handled)
            except FogGateError as exc:
                log.warning("session %s ended: %s", transport.peer, exc)
        persist()

    workers = []
    accepted = 0
    try:
        with listener:
            while args.max_connections is None or accepted < args.max_connections:
                transport = listener.accept(timeout=1.0)
                if transport is None:
                    continue
                accepted += 1
                worker = threading.Thread(target=session, args=(transport,), daemon=True)
                worker.start()
                workers.append(worker)
            for worker in workers:
                worker.join()
    except KeyboardInterrupt:
        _say("interrupted")
    persist()
    _say(f"served {accepted} connection(s), {len(server.audit_log)} packets audited")
    return EXIT_OK


def _parse_payload(text: str | None) -> bytes | None:
    if text is None:
        return None
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise UsageError("--payload must be hex") from None


def cmd_connect(args) -> int:
    _require(args, "key", "server_key", "connect")
    payload = _parse_payload(args.payload)
    try:
        identity = load_identity(args.key)
        server = load_public_identity(args.server_key)
    except (OSError, ValueError, FogGateError) as exc:
        raise UsageError(f"cannot read key files: {exc}") from None
    timeout = float(args.timeout if args.timeout is not None else 5.0)
    client = ClientNode(identity, server.public_key, server_serial_id=server.serial_id,
                        timeout=timeout)
    transport = tcp_connect(args.connect, timeout=timeout)
    with transport:
        phase = client.handshake(transport, timeout=timeout)
        if phase is Phase.GRANTED:
            _say("granted")
            if payload is not None:
                transport.send(client.send_data(payload))
                notes = len(client.notes)
                frame = transport.recv(timeout=timeout)
                if frame is not None:
                    client.on_frame(frame)
                if len(client.notes) > notes and client.notes[-1].reason.value == "none":
                    _say(f"data accepted ({len(payload)} bytes)")
                else:
                    _say("data not acknowledged")
                    return EXIT_UNEXPECTED
            return EXIT_OK
    if phase is Phase.DENIED:
        _say("denied")
    else:
        rejected = [n for n in client.notes if n.reason.value != "none"]
        detail = f"last rejected frame: {rejected[-1].reason.value}" if rejected else "no response"
        _say(f"denied ({detail})")
    return EXIT_UNEXPECTED


# simulation


def _scenario_config(args) -> harness.ScenarioConfig:
    settings = dict(args.thresholds or {})
    if args.seed is not None:
        settings["seed"] = int(args.seed)
    try:
        return harness.ScenarioConfig(**settings)
    except TypeError as exc:
        raise UsageError(f"bad thresholds: {exc}") from None
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args) -> int:
    name = args.scenario_pos or args.scenario or "all"
    config = _scenario_config(args)
    try:
        scenarios = harness.scenarios_named(name, config)
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from None
    reports = harness.run_all(scenarios=scenarios)
    for report in reports:
        aspect, category = report.cell
        mark = "as expected" if report.matches_expected else f"UNEXPECTED (expected {report.expected})"
        _say(f"{aspect:<6} {category} {report.scenario.name:<16} {report.verdict:<10} "
             f"{report.attacks_blocked}/{report.attacks_attempted} blocked, {mark}")
    _say(harness.stride_matrix(reports).render())
    if args.out:
        harness.write_reports(reports, args.out)
        _say(f"wrote {args.out}")
    return EXIT_OK if all(r.matches_expected for r in reports) else EXIT_UNEXPECTED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foggate", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log protocol events")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate a device or server key file")
    p.add_argument("--out")
    p.add_argument("--bits", type=int, default=crypto.DEFAULT_KEY_BITS)
    p.add_argument("--serial", help="serial ID to use instead of a random one")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("ledger", help="administer the device ledger")
    p.add_argument("action", choices=("init", "add", "block", "verify", "show"))
    p.add_argument("--ledger")
    p.add_argument("--key", action="append", help="device .pub file (repeatable)")
    p.add_argument("--status", choices=("allowed", "blocked"), default="allowed")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_ledger)

    p = sub.add_parser("serve", help="run the server over TCP")
    p.add_argument("--key")
    p.add_argument("--ledger")
    p.add_argument("--listen", help="HOST:PORT (port 0 picks a free one)")
    p.add_argument("--max-connections", type=int, help="exit after this many sessions")
    p.add_argument("--audit-out", help="write the audit log here as JSON lines")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("connect", help="run the client handshake against a server")
    p.add_argument("--key")
    p.add_argument("--server-key", dest="server_key")
    p.add_argument("--connect", help="HOST:PORT")
    p.add_argument("--payload", help="hex DATA payload to send once granted")
    p.add_argument("--timeout", type=float)
    p.set_defaults(func=cmd_connect)

    p = sub.add_parser("simulate", help="run STRIDE attack scenarios")
    p.add_argument("scenario_pos", nargs="?", metavar="SCENARIO",
                   help=f"all, or one of: {', '.join(harness.SCENARIO_NAMES)}")
    p.add_argument("--scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the JSON-lines report here")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _merge(args, load_config(os.environ.get(CONFIG_ENV)))
        return args.func(args)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except FogGateError as exc:
        _err(str(exc))
        return EXIT_UNEXPECTED
    except OSError as exc:
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

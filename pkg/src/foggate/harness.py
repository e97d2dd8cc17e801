"""STRIDE attack scenarios run against a simulated server, clients and network.

Each scenario fills one cell of the 2x6 (client/server x S,T,R,I,D,E) matrix.
A cell is *defended* when every attempted attack was blocked, otherwise
*vulnerable*.  Reports carry only seed-determined data (counts, verdicts,
positions, reasons) and never ciphertext bytes, so two runs with the same
seed produce byte-identical report files even though key material and
nonces are freshly random.

Report file format: one JSON object per line, keys sorted::

    {"aspect": "server", "category": "S", "scenario": "spoofing",
     "seed": 42, "attacks_attempted": 100, "attacks_blocked": 100,
     "verdict": "defended", "expected": "defended", "evidence": [...]}
"""

from __future__ import annotations

import json
import math
import random
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import crypto
from . import ledger as ledger_mod
from .audit import Reason, Verdict, transaction_digest
from .client import ClientNode, Phase
from .errors import ConfigurationError, LedgerError, PacketError
from .identity import DeviceIdentity
from .ledger import Status
from .packet import (
    InnerMessage,
    MessageType,
    create_packet,
    decode_wire,
    decrypt_inner,
    encode_hello,
    open_packet,
    verify_packet_signature,
    wire_layout,
)
from .server import PacketOutcome, ServerNode
from .simnet import (
    EAVESDROP,
    FLOOD,
    INJECT,
    PASSTHROUGH,
    TAMPER,
    AdversaryHook,
    SimNet,
    random_junk,
)

DEFENDED = "defended"
VULNERABLE = "vulnerable"
UNTESTED = "untested"

ASPECTS = ("client", "server")
CATEGORIES = ("S", "T", "R", "I", "D", "E")
SCENARIO_NAMES = ("spoofing", "tampering", "repudiation", "info-disclosure",
                  "dos-client", "dos-server", "privilege")
CATEGORY_OF = {
    "spoofing": "S", "tampering": "T", "repudiation": "R", "info-disclosure": "I",
    "dos-client": "D", "dos-server": "D", "privilege": "E",
}
LEGAL_TARGETS = {name: ASPECTS for name in SCENARIO_NAMES}
LEGAL_TARGETS["dos-client"] = ("client",)
LEGAL_TARGETS["dos-server"] = ("server",)
LEGAL_HOOKS = {
    "spoofing": {PASSTHROUGH, EAVESDROP, INJECT},
    "tampering": {PASSTHROUGH, TAMPER},
    "repudiation": {PASSTHROUGH, EAVESDROP},
    "info-disclosure": {PASSTHROUGH, EAVESDROP},
    "dos-client": {PASSTHROUGH, FLOOD},
    "dos-server": {PASSTHROUGH, FLOOD},
    "privilege": {PASSTHROUGH},
}

# The published evaluation: X = defended, - = vulnerable.
EXPECTED_MATRIX = {
    ("client", "S"): DEFENDED, ("client", "T"): DEFENDED, ("client", "R"): DEFENDED,
    ("client", "I"): DEFENDED, ("client", "D"): VULNERABLE, ("client", "E"): DEFENDED,
    ("server", "S"): DEFENDED, ("server", "T"): DEFENDED, ("server", "R"): DEFENDED,
    ("server", "I"): DEFENDED, ("server", "D"): DEFENDED, ("server", "E"): VULNERABLE,
}

DEFAULT_SEED = 42
ADMIN_RESOURCE = b"GET /admin/device-registry"


@dataclass(frozen=True)
class ScenarioConfig:
    """Scenario knobs.  Capacities are frames processed per simulation step."""

    seed: int = DEFAULT_SEED
    key_bits: int = crypto.DEFAULT_KEY_BITS
    honest_clients: int = 2
    attempts: int = 100
    messages: int = 50
    chain_mutations: int = 24
    flood_rate: float = 20.0
    flood_duration: int = 40
    client_capacity: int = 1
    client_inbox_limit: int = 16
    server_capacity: int = 64
    server_inbox_limit: int = 4096
    dos_budget_factor: float = 2.0
    step_seconds: float = 0.1
    client_timeout: float = 5.0
    replay_horizon: float = 300.0

    def __post_init__(self):
        if self.key_bits not in crypto.SUPPORTED_KEY_BITS:
            raise ConfigurationError(f"unsupported key size {self.key_bits}")
        for name in ("honest_clients", "attempts", "messages", "client_capacity", "server_capacity"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        if self.dos_budget_factor < 1 or self.step_seconds <= 0 or self.flood_rate < 0:
            raise ConfigurationError("invalid DoS/timing thresholds")


@dataclass(frozen=True)
class Scenario:
    name: str
    target: str = "server"
    config: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __post_init__(self):
        if self.name not in SCENARIO_NAMES:
            raise ConfigurationError(
                f"unknown scenario {self.name!r}; valid names: {', '.join(SCENARIO_NAMES)}")
        if self.target not in LEGAL_TARGETS[self.name]:
            raise ConfigurationError(f"scenario {self.name!r} cannot target {self.target!r}")

    @property
    def cell(self) -> tuple[str, str]:
        return self.target, CATEGORY_OF[self.name]


@dataclass(frozen=True)
class ScenarioReport:
    scenario: Scenario
    attacks_attempted: int
    attacks_blocked: int
    verdict: str
    evidence: tuple[str, ...]

    @property
    def cell(self) -> tuple[str, str]:
        return self.scenario.cell

    @property
    def expected(self) -> str:
        return EXPECTED_MATRIX[self.cell]

    @property
    def matches_expected(self) -> bool:
        return self.verdict == self.expected

    def to_record(self) -> dict:
        aspect, category = self.cell
        return {
            "aspect": aspect,
            "category": category,
            "scenario": self.scenario.name,
            "seed": self.scenario.config.seed,
            "attacks_attempted": self.attacks_attempted,
            "attacks_blocked": self.attacks_blocked,
            "verdict": self.verdict,
            "expected": self.expected,
            "evidence": list(self.evidence),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, separators=(",", ":"))


def _report(scenario: Scenario, attempted: int, blocked: int, evidence: list[str]) -> ScenarioReport:
    verdict = DEFENDED if attempted > 0 and blocked == attempted else VULNERABLE
    return ScenarioReport(scenario, attempted, blocked, verdict, tuple(evidence))


class KeyRing:
    """Lazily generated key pairs, shared across scenarios of one run."""

    def __init__(self, bits: int = crypto.DEFAULT_KEY_BITS):
        self.bits = bits
        self._keys: dict[str, crypto.KeyPair] = {}

    def get(self, label: str) -> crypto.KeyPair:
        if label not in self._keys:
            self._keys[label] = crypto.generate_keypair(self.bits)
        return self._keys[label]


# simulated deployment


@dataclass
class _Member:
    node: ClientNode
    endpoint: object
    autopilot: bool


class World:
    """One server plus clients and adversaries wired through a SimNet."""

    def __init__(self, scenario: Scenario, keys: KeyRing):
        cfg = scenario.config
        self.scenario = scenario
        self.config = cfg
        self.keys = keys
        self.names = random.Random(f"{cfg.seed}:{scenario.name}:{scenario.target}:names")
        self.net = SimNet(cfg.seed, cfg.step_seconds)
        server_id = DeviceIdentity(self.serial("fog"), keys.get("server"))
        self.server = ServerNode(server_id, ledger_mod.genesis(int(self.net.epoch)),
                                 clock=self.net.now, replay_horizon=cfg.replay_horizon)
        self.server_ep = self.net.add_endpoint("server", cfg.server_inbox_limit)
        self.members: dict[str, _Member] = {}
        self.outcomes: list[tuple[str, bytes, PacketOutcome]] = []

    def serial(self, prefix: str = "dev") -> str:
        return f"{prefix}-{self.names.getrandbits(64):016x}"

    def hook(self, mode: str, **kwargs) -> AdversaryHook:
        if mode not in LEGAL_HOOKS[self.scenario.name]:
            raise ConfigurationError(f"hook {mode!r} is not legal in {self.scenario.name!r}")
        return AdversaryHook(mode, **kwargs)

    def identity(self, label: str, serial: str | None = None) -> DeviceIdentity:
        return DeviceIdentity(serial or self.serial(), self.keys.get(label))

    def add_client(self, name: str, identity: DeviceIdentity, *, register: bool = True,
                   status: Status = Status.ALLOWED, hook: AdversaryHook | None = None,
                   skip_discovery: bool = False, autopilot: bool = True,
                   link_to_server: bool = True) -> ClientNode:
        cfg = self.config
        if register:
            self.server.register(identity.serial_id, identity.public_key, status)
        endpoint = self.net.add_endpoint(name, cfg.client_inbox_limit)
        if link_to_server:
            self.net.connect(endpoint, self.server_ep, hook)
        node = ClientNode(identity, self.server.identity.public_key,
                          server_serial_id=self.server.identity.serial_id if skip_discovery else None,
                          skip_discovery=skip_discovery, timeout=cfg.client_timeout,
                          clock=self.net.now)
        self.members[name] = _Member(node, endpoint, autopilot)
        return node

    def add_adversary(self, name: str, peer=None, hook: AdversaryHook | None = None):
        endpoint = self.net.add_endpoint(name)
        self.net.connect(endpoint, peer or self.server_ep, hook)
        return endpoint

    def client(self, name: str) -> ClientNode:
        return self.members[name].node

    def broadcast_hello(self) -> None:
        hello = self.server.make_hello()
        for member in self.members.values():
            if frozenset(("server", member.endpoint.address)) in self.net.links:
                self.net.send(self.server_ep, member.endpoint, hello)

    def pump(self) -> None:
        """One round: deliver, let the server and every client work through their inboxes."""
        cfg = self.config
        self.net.step()
        for src, frame in self.server_ep.receive(cfg.server_capacity):
            outcome = self.server.handle_packet(frame)
            self.outcomes.append((src, frame, outcome))
            if outcome.response is not None:
                self.net.send(self.server_ep, src, outcome.response)
        for member in self.members.values():
            node = member.node
            for _src, frame in member.endpoint.receive(cfg.client_capacity):
                node.on_frame(frame)
            node.tick(self.net.now())
            if member.autopilot and node.phase is Phase.DISCOVERED:
                self.net.send(member.endpoint, self.server_ep, node.request_access())

    def run_until(self, predicate, max_steps: int) -> Optional[int]:
        """Pump until ``predicate()`` holds; returns steps taken or None."""
        for n in range(1, max_steps + 1):
            self.pump()
            if predicate():
                return n
        return None

    def quiescent(self) -> bool:
        """Nothing in flight and no honest node has queued input."""
        return (not any(link.in_flight for link in self.net.links.values())
                and not self.server_ep.inbox
                and not any(m.endpoint.inbox for m in self.members.values()))

    def settle(self, max_steps: int = 1000) -> None:
        if not self.quiescent() and self.run_until(self.quiescent, max_steps) is None:
            raise RuntimeError("network did not settle")

    def drain_server(self, expected: int, max_steps: int = 10_000) -> None:
        start = len(self.outcomes)
        if self.run_until(lambda: len(self.outcomes) - start >= expected, max_steps) is None:
            raise RuntimeError("server did not process all frames")

    def handshake(self, name: str, max_steps: int = 50) -> Optional[int]:
        node = self.client(name)
        return self.run_until(lambda: node.phase in (Phase.GRANTED, Phase.DENIED), max_steps)


def _world(s: Scenario, keys: KeyRing, worlds: list) -> World:
    world = World(s, keys)
    worlds.append(world)
    return world


def _granted_pair(world: World, names: Sequence[str], skip_discovery: bool = True) -> list[ClientNode]:
    nodes = [world.add_client(n, world.identity(n), skip_discovery=skip_discovery) for n in names]
    world.broadcast_hello()
    world.run_until(lambda: all(c.phase is Phase.GRANTED for c in nodes), 20)
    if not all(c.phase is Phase.GRANTED for c in nodes):
        raise RuntimeError("honest handshake failed in scenario setup")
    return nodes


def _request(identity: DeviceIdentity, server_public, msg_type=MessageType.ACCESS_REQUEST,
             payload: bytes = b"", sender_private=None, serial: str | None = None) -> bytes:
    msg = InnerMessage(msg_type, serial or identity.serial_id, payload=payload)
    return create_packet(msg, sender_private or identity.private_key, server_public)


def _tamper_rule(rng_positions: list, armed: dict):
    """Aim each successive frame at the next wire region; records (region, pos)."""
    order = ["version", "wrapped_key_len", "wrapped_key", "env_nonce", "env_ct_len", "env_ct"]

    def rule(frame: bytes, rng: random.Random):
        if not armed["on"]:
            return ()
        regions = {name: (a, b) for name, a, b in wire_layout(frame)}
        name = order[len(rng_positions) % len(order)]
        a, b = regions[name]
        pos = rng.randrange(a, b)
        rng_positions.append((name, pos))
        return (pos,)

    return rule


# spoofing


def _spoofing_server(s: Scenario, keys: KeyRing, worlds: list) -> ScenarioReport:
    cfg = s.config
    world = _world(s, keys, worlds)
    capture = world.hook(EAVESDROP, target="server")
    victim = world.add_client("victim", world.identity("client-0"), hook=capture)
    world.broadcast_hello()
    world.handshake("victim")
    captured_request = capture.capture_log[0]
    mallory_ep = world.add_adversary("mallory")
    mallory = keys.get("adversary")
    server_public = world.server.identity.public_key

    classes, frames = [], []
    for i in range(cfg.attempts):
        kind = ("forged-serial", "stolen-public-key", "replay")[i % 3]
        if kind == "forged-serial":
            frame = _request(None, server_public, sender_private=mallory.private_key,
                             serial=world.serial())
        elif kind == "stolen-public-key":
            frame = _request(victim.identity, server_public, sender_private=mallory.private_key)
        else:
            frame = captured_request
        classes.append(kind)
        frames.append(frame)
        world.net.send(mallory_ep, world.server_ep, frame)
    start = len(world.outcomes)
    world.drain_server(len(frames))
    results = [o for o in world.outcomes[start:] if o[0] == "mallory"]

    evidence, blocked = [], 0
    for i, (kind, (_src, _frame, outcome)) in enumerate(zip(classes, results)):
        ok = outcome.event.verdict is Verdict.DENIED
        blocked += ok
        evidence.append(f"{kind}#{i}: {outcome.event.verdict.value}/{outcome.event.reason.value}")
    return _report(s, len(frames), blocked, evidence)


def _spoofing_client(s: Scenario, keys: KeyRing, worlds: list) -> ScenarioReport:
    cfg = s.config
    world = _world(s, keys, worlds)
    target_id = world.identity("client-0")
    mallory = keys.get("adversary")
    server_serial = world.server.identity.serial_id

    # first session: capture a genuine grant addressed to the target
    capture = world.hook(EAVESDROP, target="target-old")
    world.add_client("target-old", target_id, hook=capture, skip_discovery=True)
    world.handshake("target-old")
    old_grant = capture.capture_log[-1]

    # second session (device restarted): one idle, one awaiting a response
    idle = world.add_client("target-idle", target_id, register=False, autopilot=False,
                            link_to_server=False)
    waiting = world.add_client("target", target_id, register=False, autopilot=False,
                               link_to_server=False, skip_discovery=True)
    waiting.request_access()  # request lost in transit; the node is left waiting
    m_idle = world.add_adversary("mallory-a", world.members["target-idle"].endpoint)
    m_wait = world.add_adversary("mallory-b", world.members["target"].endpoint)

    evidence, blocked = [], 0
    kinds = ("imposter-hello", "forged-grant", "stale-grant-replay", "wrong-sender-grant")
    for i in range(cfg.attempts):
        kind = kinds[i % len(kinds)]
        if waiting.phase is Phase.DISCOVERED:
            waiting.request_access()
        if kind == "imposter-hello":
            node, src = idle, m_idle
            frame = encode_hello(server_serial, mallory.private_key)
            before = Phase.IDLE
        else:
            node, src, before = waiting, m_wait, Phase.REQUESTED
            token = waiting.pending_token
            if kind == "forged-grant":
                # strongest forger: knows the pending token, lacks the server key
                msg = InnerMessage(MessageType.ACCESS_GRANT, server_serial, payload=token)
                frame = create_packet(msg, mallory.private_key, target_id.public_key)
            elif kind == "stale-grant-replay":
                frame = old_grant
            else:
                msg = InnerMessage(MessageType.ACCESS_GRANT, world.serial("fog"), payload=token)
                frame = create_packet(msg, mallory.private_key, target_id.public_key)
        world.net.send(src, world.members["target-idle" if node is idle else "target"].endpoint, frame)
        notes_before = len(node.notes)
        world.pump()
        note = node.notes[notes_before] if len(node.notes) > notes_before else None
        ok = note is not None and note.verdict is Verdict.DISCARDED and note.phase is before
        blocked += ok
        evidence.append(f"{kind}#{i}: phase={note.phase.value if note else node.phase.value} "
                        f"note={note.reason.value if note else 'none'}")
    return _report(s, cfg.attempts, blocked, evidence)


# tampering


def _tampering_server(s: Scenario, keys: KeyRing, worlds: list) -> ScenarioReport:
    cfg = s.config
    world = _world(s, keys, worlds)
    armed = {"on": False}
    aimed: list = []
    hook = world.hook(TAMPER, rule=_tamper_rule(aimed, armed), target="server")
    node = world.add_client("device", world.identity("client-0"), hook=hook, skip_discovery=True)
    world.handshake("device")
    armed["on"] = True

    server_public = world.server.identity.public_key
    kinds = []
    for i in range(cfg.attempts):
        if i % 2:
            kinds.append("data")
            frame = node.send_data(b"reading %d" % i)
        else:
            kinds.append("request")
            frame = _request(node.identity, server_public)
        world.net.send("device", "server", frame)
    start = len(world.outcomes)
    world.drain_server(cfg.attempts)
    evidence, blocked = [], 0
    for i, (_src, _frame, outcome) in enumerate(world.outcomes[start:start + cfg.attempts]):
        region, pos = aimed[i]
        ok = outcome.event.verdict is Verdict.DENIED
        blocked += ok
        evidence.append(f"{kinds[i]}#{i} {region}@{pos}: "
                        f"{outcome.event.verdict.value}/{outcome.event.reason.value}")

    # attempted mutation of the persisted chain
    image = ledger_mod.encode_ledger(world.server.ledger)
    rng = random.Random(f"{cfg.seed}:chain")
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "ledger.fgl"
        for j in range(cfg.chain_mutations):
            pos = rng.randrange(len(image))
            mutated = bytearray(image)
            mutated[pos] ^= 1 << rng.randrange(8)
            path.write_bytes(bytes(mutated))
            try:
                ledger_mod.load(path)
                outcome = "accepted"
            except LedgerError as exc:
                outcome = type(exc).__name__
                blocked += 1
            evidence.append(f"chain-mutation#{j} byte={pos}: {outcome}")
    return _report(s, cfg.attempts + cfg.chain_mutations, blocked, evidence)


def _tampering_client(s: Scenario, keys: KeyRing, worlds: list) -> ScenarioReport:
    cfg = s.config
    world = _world(s, keys, worlds)
    armed = {"on": True}
    aimed: list = []
    hook = world.hook(TAMPER, rule=_tamper_rule(aimed, armed), target="device")
    node = world.add_client("device", world.identity("client-0"), hook=hook,
                            skip_discovery=True, autopilot=False)
    evidence, blocked = [], 0
    for i in range(cfg.attempts):
        world.net.send("device", "server", node.request_access())
        notes = len(node.notes)
        world.run_until(lambda: len(node.notes) > notes, 10)
        note = node.notes[notes] if len(node.notes) > notes else None
        ok = node.phase is Phase.REQUESTED and note is not None and note.verdict is Verdict.DISCARDED
        blocked += ok
        region, pos = aimed[i]
        evidence.append(f"response#{i} {region}@{pos}: phase={node.phase.value} "
                        f"note={note.reason.value if note else 'none'}")
        world.net.advance(cfg.client_timeout)
        node.tick(world.net.now())
    # control: the same path without tampering still grants
    armed["on"] = False
    world.net.send("device", "server", node.request_access())
    world.handshake("device", 10)
    if node.phase is not Phase.GRANTED:
        raise RuntimeError("untampered control handshake failed")
    return _report(s, cfg.attempts, blocked, evidence)


# repudiation


def recompute_tx_digest(frame: bytes, verdict: Verdict, reason: Reason) -> bytes:
    return transaction_digest(frame, verdict, reason)


def _match_digests(digests: Iterable[tuple[bytes, Verdict, Reason]], frames: Sequence[bytes]):
    """Pair each recorded digest with a distinct captured frame; returns list of frame idx or None."""
    unused = list(range(len(frames)))
    matches = []
    for tx, verdict, reason in digests:
        hit = None
        for k in unused:
            if recompute_tx_digest(frames[k], verdict, reason) == tx:
                hit = k
                break
        if hit is not None:
            unused.remove(hit)
        matches.append(hit)
    return matches


def _repudiation_server(s: Scenario, keys: KeyRing, worlds: list) -> ScenarioReport:
    cfg = s.config
    world = _world(s, keys, worlds)
    hooks = {}

    def watched(name):
        hooks[name] = world.hook(EAVESDROP, target="server")
        return hooks[name]

    nodes = [world.add_client(f"device-{k}", world.identity(f"client-{k}"),
                              hook=watched(f"device-{k}"), skip_discovery=True)
             for k in range(cfg.honest_clients)]
    mallory_ep = world.add_adversary("mallory", hook=watched("mallory"))
    mallory = keys.get("adversary")
    server_public = world.server.identity.public_key
    rng = random.Random(f"{cfg.seed}:repudiation")

    world.broadcast_hello()
    world.run_until(lambda: all(n.phase is Phase.GRANTED for n in nodes), 20)
    sent = len(nodes)
    honest_frames = []
    kinds = ("data", "junk", "unregistered", "stolen-key", "replay", "tampered")
    i = 0
    while sent < cfg.messages:
        kind = kinds[i % len(kinds)]
        i += 1
        if kind == "data":
            k = rng.randrange(len(nodes))
            frame = nodes[k].send_data(b"sample %d" % i)
            world.net.send(f"device-{k}", "server", frame)
            honest_frames.append(frame)
        else:
            if kind == "junk":
                frame = random_junk(rng)
            elif kind == "unregistered":
                frame = _request(None, server_public, sender_private=mallory.private_key,
                                 serial=world.serial())
            elif kind == "stolen-key":
                frame = _request(nodes[0].identity, server_public, sender_private=mallory.private_key)
            elif kind == "replay" and honest_frames:
                frame = honest_frames[rng.randrange(len(honest_frames))]
            else:
                victim = honest_frames[-1] if honest_frames else random_junk(rng)
                buf = bytearray(victim)
                buf[rng.randrange(len(buf))] ^= 0x01
                frame = bytes(buf)
            world.net.send(mallory_ep, world.server_ep, frame)
        sent += 1
        world.pump()
    world.settle()

    captured = [f for h in hooks.values() for f in h.capture_log]
    events = world.server.audit_log
    ledger_txs = {e.tx_digest for e in world.server.ledger.transactions()}
    matches = _match_digests(((e.tx_digest, e.verdict, e.reason) for e in events), captured)

    evidence, blocked = [], 0
    for idx, (event, hit) in enumerate(zip(events, matches)):
        ok = hit is not None and event.tx_digest in ledger_txs
        if ok and event.verdict is Verdict.GRANTED:
            # origin is non-repudiable: the ledger key verifies the sender's signature
            sealed = open_packet(captured[hit], world.server.identity.private_key)
            inner = decrypt_inner(sealed)
            entry = world.server.ledger.lookup(sealed.sender_serial_id)
            ok = verify_packet_signature(sealed, inner, crypto.public_key_from_bytes(entry.public_key))
        blocked += ok
        evidence.append(f"packet#{idx}: {event.verdict.value}/{event.reason.value} "
                        f"block={event.block_index} {'digest-match' if ok else 'UNACCOUNTED'}")
    attempted = max(len(captured), len(events))
    if len(captured) != len(events):
        evidence.append(f"count-mismatch: captured={len(captured)} audited={len(events)}")
    return _report(s, attempted, blocked, evidence)


def _repudiation_client(s: Scenario, keys: KeyRing, worlds: list) -> ScenarioReport:
    cfg = s.config
    world = _world(s, keys, worlds)
    capture = world.hook(EAVESDROP, target="device")
    node = world.add_client("device", world.identity("client-0"), hook=capture)
    spy = world.hook(EAVESDROP, target="device")
    mallory_ep = world.add_adversary("mallory", world.members["device"].endpoint, hook=spy)
    mallory = keys.get("adversary")
    server_serial = world.server.identity.serial_id
    rng = random.Random(f"{cfg.seed}:repudiation-client")

    world.broadcast_hello()
    world.handshake("device")
    i = 0
    while len(capture.capture_log) + len(spy.capture_log) < cfg.messages:
        i += 1
        if i % 2:
            world.net.send("device", "server", node.send_data(b"sample %d" % i))
        elif i % 4 == 2:
            msg = InnerMessage(MessageType.ACCESS_GRANT, server_serial, payload=rng.randbytes(16))
            world.net.send(mallory_ep, "device", create_packet(msg, mallory.private_key,
                                                                node.identity.public_key))
        else:
            world.net.send(mallory_ep, "device", random_junk(rng))
        world.pump()
        world.pump()
    world.settle()

    captured = capture.capture_log + spy.capture_log
    notes = node.notes
    matches = _match_digests(((n.tx_digest, n.verdict, n.reason) for n in notes), captured)
    evidence, blocked = [], 0
    for idx, (note, hit) in enumerate(zip(notes, matches)):
        ok = hit is not None
        if ok and note.verdict is Verdict.ACCEPTED and captured[hit][0] != 0xFF:
            sealed = open_packet(captured[hit], node.identity.private_key)
            inner = decrypt_inner(sealed, server_serial)
            ok = verify_packet_signature(sealed, inner, node.server_public)
        blocked += ok
        evidence.append(f"frame#{idx}: {note.verdict.value}/{note.reason.value} "
                        f"{'digest-match' if ok else 'UNACCOUNTED'}")
    attempted = max(len(captured), len(notes))
    if len(captured) != len(notes):
        evidence.append(f"count-mismatch: captured={len(captured)} noted={len(notes)}")
    return _report(s, attempted, blocked, evidence)


# information disclosure


def recovery_attempts(frame: bytes, public_keys: Sequence[crypto.PublicKey], serials: Sequence[str],
                      private_keys: Sequence[crypto.PrivateKey] = ()) -> list[bytes]:
    """Every plaintext candidate an eavesdropper can derive from one frame.

    Without private keys the analyzer tries the raw frame, the inner-layer
    key of every known serial against the envelope, hashes of the public
    keys as session keys, and raw RSA with the public exponent on the
    wrapped key.  ``private_keys`` exists for positive-control tests.
    """
    outputs = [frame]
    try:
        _, env = decode_wire(frame)
    except PacketError:
        return outputs
    guesses = [crypto.derive_inner_key(s) for s in serials]
    guesses += [crypto.SymmetricKey(crypto.one_way_hash(crypto.public_key_to_bytes(k)),
                                    crypto.Derivation.EPHEMERAL_RANDOM) for k in public_keys]
    for pk in public_keys:
        numbers = pk.public_numbers()
        c = int.from_bytes(env.wrapped_key, "big")
        if c < numbers.n:
            raw = pow(c, numbers.e, numbers.n).to_bytes(pk.key_size // 8, "big")
            outputs.append(raw)
            guesses.append(crypto.SymmetricKey(raw[-crypto.SYMMETRIC_KEY_SIZE:],
                                               crypto.Derivation.EPHEMERAL_RANDOM))
    for key in guesses:
        try:
            outputs.append(crypto.symmetric_decrypt(key, env.nonce, env.ciphertext))
        except crypto.DecryptionError:
            pass
    for sk in private_keys:
        try:
            sealed = open_packet(frame, sk)
        except PacketError:
            continue
        outputs.append(sealed.encode())
        try:
            outputs.append(decrypt_inner(sealed).encode())
        except PacketError:
            pass
    return outputs


def disclosed(outputs: Iterable[bytes], known_plaintexts: Iterable[bytes]) -> bool:
    known = [k for k in known_plaintexts if k]
    return any(k in out for out in outputs for k in known)


def _info_disclosure(s: Scenario, keys: KeyRing, worlds: list) -> ScenarioReport:
    cfg = s.config
    world = _world(s, keys, worlds)
    # server aspect: traffic arriving at the server; client aspect: both directions
    toward = "server" if s.target == "server" else None
    hooks = []
    nodes = []
    for k in range(cfg.honest_clients):
        hook = world.hook(EAVESDROP, target=toward)
        hooks.append(hook)
        nodes.append(world.add_client(f"device-{k}", world.identity(f"client-{k}"), hook=hook))
    world.broadcast_hello()
    world.run_until(lambda: all(n.phase is Phase.GRANTED for n in nodes), 20)

    secrets = []
    per_client = max(1, math.ceil(cfg.attempts / len(nodes)))
    for i in range(per_client):
        for k, node in enumerate(nodes):
            secret = b"CONFIDENTIAL-%d-%d-%s" % (k, i, node.identity.serial_id.encode())
            secrets.append(secret)
            world.net.send(f"device-{k}", "server", node.send_data(secret))
        world.pump()
    world.settle()

    known = list(secrets)
    if s.target == "client":
        known += _client_side_known(nodes, hooks)
    public_keys = [world.server.identity.public_key] + [n.identity.public_key for n in nodes]
    serials = [world.server.identity.serial_id] + [n.identity.serial_id for n in nodes]
    evidence, attempted, blocked = [], 0, 0
    for h, hook in enumerate(hooks):
        for j, frame in enumerate(hook.capture_log):
            attempted += 1
            leaked = disclosed(recovery_attempts(frame, public_keys, serials), known)
            blocked += not leaked
            evidence.append(f"link{h}-frame#{j}: {'RECOVERED' if leaked else 'opaque'}")
    return _report(s, attempted, blocked, evidence)


def _client_side_known(nodes, hooks) -> list[bytes]:
    """Payloads the server sealed to each client, recovered with that client's own key."""
    known = []
    for node, hook in zip(nodes, hooks):
        for frame in hook.capture_log:
            try:
                sealed = open_packet(frame, node.identity.private_key)
            except PacketError:
                continue  # hello, or a frame addressed to the server
            known.append(decrypt_inner(sealed).payload)
    return known


# denial of service


def _baseline_steps(s: Scenario, keys: KeyRing) -> int:
    world = World(replace(s, name="spoofing", target="server"), keys)
    world.add_client("device-0", world.identity("client-0"))
    world.broadcast_hello()
    steps = world.handshake("device-0")
    if steps is None:
        raise RuntimeError("baseline handshake did not complete")
    return steps


def _dos_client(s: Scenario, keys: KeyRing, worlds: list) -> ScenarioReport:
    cfg = s.config
    budget = math.ceil(cfg.dos_budget_factor * _baseline_steps(s, keys))
    world = _world(s, keys, worlds)
    flood = world.hook(FLOOD, rate=cfg.flood_rate, duration=cfg.flood_duration,
                       target="victim", start_step=None)
    victim = world.add_client("victim", world.identity("client-0"), hook=flood)
    world.broadcast_hello()
    granted_at = None
    for n in range(1, budget + 1):
        world.pump()
        if victim.phase is Phase.REQUESTED and flood.start_step is None:
            flood.arm(world.net.steps + 1)
        if victim.phase is Phase.GRANTED:
            granted_at = n
            break
    ep = world.members["victim"].endpoint
    ok = granted_at is not None
    evidence = [f"victim: phase={victim.phase.value} granted_at={granted_at} budget={budget} "
                f"flood_frames={flood.injected} inbox_drops={ep.overflow_drops}"]
    return _report(s, 1, int(ok), evidence)


def _dos_server(s: Scenario, keys: KeyRing, worlds: list) -> ScenarioReport:
    cfg = s.config
    budget = math.ceil(cfg.dos_budget_factor * _baseline_steps(s, keys))
    world = _world(s, keys, worlds)
    mallory = keys.get("adversary")
    server_public = world.server.identity.public_key
    pool = [_request(None, server_public, sender_private=mallory.private_key, serial=world.serial())
            for _ in range(8)]

    def source(rng: random.Random) -> bytes:
        return pool[rng.randrange(len(pool))] if rng.random() < 0.5 else random_junk(rng)

    flood = world.hook(FLOOD, rate=cfg.flood_rate, duration=cfg.flood_duration,
                       target="server", source=source, start_step=1)
    world.add_adversary("mallory", hook=flood)
    nodes = [world.add_client(f"device-{k}", world.identity(f"client-{k}"))
             for k in range(cfg.honest_clients)]
    world.broadcast_hello()
    granted_at = {}
    for n in range(1, budget + 1):
        world.pump()
        for k, node in enumerate(nodes):
            if node.phase is Phase.GRANTED and k not in granted_at:
                granted_at[k] = n
    flood_handled = sum(1 for src, _, _ in world.outcomes if src == "mallory")
    evidence = [f"device-{k}: phase={node.phase.value} granted_at={granted_at.get(k)} "
                f"budget={budget} flood_handled={flood_handled}"
                for k, node in enumerate(nodes)]
    return _report(s, len(nodes), len(granted_at), evidence)


# elevation of privilege


def _privilege_server(s: Scenario, keys: KeyRing, worlds: list) -> ScenarioReport:
    """Two granted clients ask for the same admin resource; nothing tells them apart."""
    cfg = s.config
    world = _world(s, keys, worlds)
    nodes = dict(zip(("admin", "user"), _granted_pair(world, ["admin", "user"])))
    order = [("admin", "user")[i % 2] for i in range(cfg.attempts)]
    start = len(world.outcomes)
    for name in order:
        world.net.send(name, "server", nodes[name].send_data(ADMIN_RESOURCE))
    world.drain_server(cfg.attempts)
    results = {name: [] for name in nodes}
    for src, _frame, outcome in world.outcomes[start:start + cfg.attempts]:
        results[src].append(outcome.event)

    # the attack is the unprivileged device reaching the admin resource
    evidence, attempted, blocked = [], 0, 0
    for name, events in results.items():
        for i, event in enumerate(events):
            if name == "user":
                attempted += 1
                blocked += event.verdict is Verdict.DENIED
            evidence.append(f"{name}-admin-request#{i}: {event.verdict.value}/{event.reason.value}")
    return _report(s, attempted, blocked, evidence)


def _privilege_client(s: Scenario, keys: KeyRing, worlds: list) -> ScenarioReport:
    cfg = s.config
    world = _world(s, keys, worlds)
    (device,) = _granted_pair(world, ["device"])
    idle = world.add_client("idle", world.identity("client-1"), skip_discovery=True, autopilot=False)
    blocked_id = world.identity("client-2")
    world.add_client("revoked", blocked_id, status=Status.BLOCKED, skip_discovery=True,
                     autopilot=False)
    server_public = world.server.identity.public_key

    def view():
        return (frozenset(world.server.granted_sessions),
                tuple(sorted((d, e.status, e.public_key)
                             for d, e in world.server.ledger.identities().items())))

    kinds = ("claim-grant", "claim-deny", "claim-hello", "data-without-grant", "blocked-request")
    evidence, blocked = [], 0
    for i in range(cfg.attempts):
        kind = kinds[i % len(kinds)]
        if kind == "data-without-grant":
            src, frame = "idle", _request(idle.identity, server_public, MessageType.DATA, b"escalate")
        elif kind == "blocked-request":
            src, frame = "revoked", _request(blocked_id, server_public)
        else:
            msg_type = {"claim-grant": MessageType.ACCESS_GRANT, "claim-deny": MessageType.ACCESS_DENY,
                        "claim-hello": MessageType.SERVER_HELLO}[kind]
            src, frame = "device", _request(device.identity, server_public, msg_type, b"role=admin")
        before = view()
        start = len(world.outcomes)
        world.net.send(src, "server", frame)
        world.drain_server(1)
        outcome = world.outcomes[start][2]
        ok = outcome.event.verdict is Verdict.DENIED and view() == before
        blocked += ok
        evidence.append(f"{kind}#{i}: {outcome.event.verdict.value}/{outcome.event.reason.value} "
                        f"{'view-unchanged' if view() == before else 'VIEW-CHANGED'}")
    return _report(s, cfg.attempts, blocked, evidence)


_RUNNERS = {
    ("spoofing", "server"): _spoofing_server,
    ("spoofing", "client"): _spoofing_client,
    ("tampering", "server"): _tampering_server,
    ("tampering", "client"): _tampering_client,
    ("repudiation", "server"): _repudiation_server,
    ("repudiation", "client"): _repudiation_client,
    ("info-disclosure", "server"): _info_disclosure,
    ("info-disclosure", "client"): _info_disclosure,
    ("dos-client", "client"): _dos_client,
    ("dos-server", "server"): _dos_server,
    ("privilege", "server"): _privilege_server,
    ("privilege", "client"): _privilege_client,
}


def run_scenario(s: Scenario, keys: KeyRing | None = None, worlds: list | None = None) -> ScenarioReport:
    """Run one scenario.  ``worlds``, if given, collects the simulated deployments for inspection."""
    keys = keys or KeyRing(s.config.key_bits)
    if keys.bits != s.config.key_bits:
        raise ConfigurationError("key ring size does not match scenario key size")
    return _RUNNERS[(s.name, s.target)](s, keys, [] if worlds is None else worlds)


def default_scenarios(config: ScenarioConfig | None = None) -> list[Scenario]:
    """One scenario per matrix cell, in table order (client row, then server row)."""
    config = config or ScenarioConfig()
    out = []
    for aspect in ASPECTS:
        for category in CATEGORIES:
            if category == "D":
                name = "dos-client" if aspect == "client" else "dos-server"
            else:
                name = next(n for n, c in CATEGORY_OF.items() if c == category)
            out.append(Scenario(name, aspect, config))
    return out


def scenarios_named(name: str, config: ScenarioConfig | None = None) -> list[Scenario]:
    if name == "all":
        return default_scenarios(config)
    if name not in SCENARIO_NAMES:
        raise ConfigurationError(f"unknown scenario {name!r}; valid names: all, {', '.join(SCENARIO_NAMES)}")
    return [s for s in default_scenarios(config) if s.name == name]


def run_all(config: ScenarioConfig | None = None, scenarios: Sequence[Scenario] | None = None
            ) -> list[ScenarioReport]:
    scenarios = list(scenarios) if scenarios is not None else default_scenarios(config)
    keys = KeyRing(scenarios[0].config.key_bits) if scenarios else None
    return [run_scenario(s, keys) for s in scenarios]


# matrix


class Matrix:
    """2x6 grid of cell verdicts aligned with the published table."""

    def __init__(self, cells: dict[tuple[str, str], str]):
        self.cells = dict(cells)

    def __getitem__(self, cell: tuple[str, str]) -> str:
        return self.cells[cell]

    def row(self, aspect: str) -> list[str]:
        return [self.cells[(aspect, c)] for c in CATEGORIES]

    def counts(self) -> dict[str, int]:
        out = {DEFENDED: 0, VULNERABLE: 0, UNTESTED: 0}
        for v in self.cells.values():
            out[v] += 1
        return out

    def matches(self, expected: dict | None = None) -> bool:
        return self.cells == (expected or EXPECTED_MATRIX)

    def render(self) -> str:
        symbol = {DEFENDED: "X", VULNERABLE: "-", UNTESTED: "?"}
        lines = ["Aspect  " + " ".join(CATEGORIES)]
        for aspect in ASPECTS:
            lines.append(f"{aspect.capitalize():<8}" + " ".join(symbol[v] for v in self.row(aspect)))
        return "\n".join(lines)


def stride_matrix(reports: Iterable[ScenarioReport]) -> Matrix:
    cells = {(a, c): UNTESTED for a in ASPECTS for c in CATEGORIES}
    seen = set()
    for report in reports:
        if report.cell in seen:
            raise ConfigurationError(f"duplicate report for cell {report.cell}")
        seen.add(report.cell)
        cells[report.cell] = report.verdict
    return Matrix(cells)


def write_reports(reports: Iterable[ScenarioReport], path) -> None:
    with open(path, "w") as fh:
        for report in reports:
            fh.write(report.to_json() + "\n")


def read_reports(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]

"""Server node: ledger-gated access processing.

Every inbound packet goes through the same ordered pipeline and stops at the
first failing stage:

1. remove the outer layer with the server's private key
2. look the claimed serial up in the ledger (absent or blocked -> deny)
3. decrypt the inner layer with the key derived from the claimed serial
4. verify the signature with the ledger's public key for that serial
5. reject nonce tokens already seen inside the replay horizon
6. ACCESS_REQUEST -> grant; DATA from a granted serial -> accept; else deny

Denials in stages 1-2 are silent (nobody trustworthy to answer); later
denials get an ACCESS_DENY packet sealed to the registered key.  Every packet,
whatever the outcome, yields one AuditEvent and one transaction block.
"""

from __future__ import annotations

import logging
import threading
import time
from typing import Callable, NamedTuple, Optional

from . import crypto
from .audit import AuditEvent, Reason, Verdict, transaction_digest
from .errors import IntegrityError, NotFoundError, PacketError
from .identity import DeviceIdentity
from .ledger import Ledger, Status, ZERO_HASH, serial_digest, verify_chain
from .packet import (
    InnerMessage,
    MessageType,
    create_packet,
    decrypt_inner,
    encode_hello,
    open_packet,
    verify_packet_signature,
)

log = logging.getLogger(__name__)

DEFAULT_REPLAY_HORIZON = 300.0


class PacketOutcome(NamedTuple):
    response: Optional[bytes]
    event: AuditEvent


class ServerNode:
    def __init__(self, identity: DeviceIdentity, ledger: Ledger, *,
                 clock: Callable[[], float] = time.time,
                 replay_horizon: float = DEFAULT_REPLAY_HORIZON):
        self.identity = identity
        self.clock = clock
        self.replay_horizon = replay_horizon
        self.granted_sessions: set[bytes] = set()
        self.seen_nonces: dict[bytes, float] = {}
        self.audit_log: list[AuditEvent] = []
        self._lock = threading.RLock()
        self._fatal = False
        self._ledger = ledger
        self._check_integrity()

    @property
    def ledger(self) -> Ledger:
        return self._ledger

    @ledger.setter
    def ledger(self, value: Ledger) -> None:
        with self._lock:
            self._ledger = value
            self._check_integrity()

    def _check_integrity(self) -> None:
        report = verify_chain(self._ledger)
        if not report.valid:
            self._fatal = True
            raise IntegrityError(
                f"ledger fails verification at block {report.first_bad_index}",
                report.first_bad_index,
            )
        self._fatal = False

    # administration

    def register(self, serial_id: str, public_key, status: Status = Status.ALLOWED) -> None:
        with self._lock:
            self._ledger = self._ledger.register_device(serial_id, public_key, status,
                                                        timestamp=int(self.clock()))

    def revoke(self, serial_id: str) -> None:
        with self._lock:
            entry = self._ledger.lookup(serial_id)
            if entry is None:
                raise NotFoundError(serial_id)
            self._ledger = self._ledger.register_device(
                serial_id, entry.public_key, Status.BLOCKED, timestamp=int(self.clock()))
            self.granted_sessions.discard(serial_digest(serial_id))

    def is_granted(self, serial_id: str) -> bool:
        return serial_digest(serial_id) in self.granted_sessions

    # protocol

    def make_hello(self) -> bytes:
        return encode_hello(self.identity.serial_id, self.identity.private_key)

    def handle_packet(self, wire: bytes) -> PacketOutcome:
        with self._lock:
            if self._fatal:
                raise IntegrityError("server ledger is invalid; refusing traffic")
            now = self.clock()
            self._prune_nonces(now)
            return self._process(bytes(wire), now)

    def _process(self, wire: bytes, now: float) -> PacketOutcome:
        try:
            sealed = open_packet(wire, self.identity.private_key)
        except PacketError as exc:
            log.debug("outer layer rejected: %s", exc)
            return self._finish(wire, now, None, Reason.BAD_OUTER)

        claimed = sealed.sender_serial_id
        entry = self._ledger.lookup(claimed)
        if entry is None:
            return self._finish(wire, now, claimed, Reason.NOT_REGISTERED)
        if entry.status is Status.BLOCKED:
            return self._finish(wire, now, claimed, Reason.BLOCKED)
        sender_public = crypto.public_key_from_bytes(entry.public_key)

        try:
            inner = decrypt_inner(sealed, claimed)
        except PacketError as exc:
            log.debug("inner layer rejected for %s: %s", claimed, exc)
            return self._finish(wire, now, claimed, Reason.BAD_INNER, reply_to=sender_public)

        if not verify_packet_signature(sealed, inner, sender_public):
            return self._finish(wire, now, claimed, Reason.BAD_SIGNATURE,
                                reply_to=sender_public, inner=inner)

        if inner.nonce_token in self.seen_nonces:
            return self._finish(wire, now, claimed, Reason.REPLAY,
                                reply_to=sender_public, inner=inner)
        self.seen_nonces[inner.nonce_token] = now

        digest = serial_digest(claimed)
        if inner.msg_type is MessageType.ACCESS_REQUEST:
            self.granted_sessions.add(digest)
            reason = Reason.NONE
        elif inner.msg_type is MessageType.DATA and digest in self.granted_sessions:
            reason = Reason.NONE
        else:
            reason = Reason.BAD_TYPE
        return self._finish(wire, now, claimed, reason, reply_to=sender_public, inner=inner)

    def _finish(self, wire, now, claimed, reason, reply_to=None, inner=None) -> PacketOutcome:
        verdict = Verdict.GRANTED if reason is Reason.NONE else Verdict.DENIED
        tx = transaction_digest(wire, verdict, reason)
        who = serial_digest(claimed) if claimed else ZERO_HASH
        self._ledger = self._ledger.record_transaction(tx, timestamp=int(now), serial_id_digest=who)
        event = AuditEvent(
            timestamp=now,
            sender_serial_id=claimed,
            verdict=verdict,
            reason=reason,
            tx_digest=tx,
            msg_type=inner.msg_type.name if inner is not None else None,
            block_index=self._ledger.tip.index,
        )
        self.audit_log.append(event)
        if reason is not Reason.NONE:
            log.info("denied %s: %s", claimed or "<unreadable>", reason.value)

        response = None
        if reply_to is not None:
            reply_type = MessageType.ACCESS_GRANT if verdict is Verdict.GRANTED else MessageType.ACCESS_DENY
            echo = inner.nonce_token if inner is not None else b""
            reply = InnerMessage(reply_type, self.identity.serial_id, payload=echo)
            response = create_packet(reply, self.identity.private_key, reply_to)
        return PacketOutcome(response, event)

    def _prune_nonces(self, now: float) -> None:
        # insertion order is arrival order, so stale tokens form a prefix
        cutoff = now - self.replay_horizon
        stale = []
        for token, seen in self.seen_nonces.items():
            if seen >= cutoff:
                break
            stale.append(token)
        for token in stale:
            del self.seen_nonces[token]

    def serve(self, transport) -> int:
        """Run the handshake loop over one transport until it closes; returns packets handled."""
        transport.send(self.make_hello())
        handled = 0
        while True:
            frame = transport.recv()
            if frame is None:
                return handled
            outcome = self.handle_packet(frame)
            handled += 1
            if outcome.response is not None:
                transport.send(outcome.response)

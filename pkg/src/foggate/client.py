"""Client node: the device side of the three-point handshake.

Phases move ``idle -> discovered -> requested -> granted | denied``.  A
request that goes unanswered for ``timeout`` seconds re-arms to
``discovered`` so the caller can try again.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional

from . import crypto
from .audit import Reason, Verdict, transaction_digest
from .errors import ConfigurationError, PacketError, StateError
from .identity import DeviceIdentity
from .packet import (
    HELLO_VERSION,
    InnerMessage,
    MessageType,
    create_packet,
    decrypt_inner,
    open_packet,
    read_hello,
    verify_packet_signature,
)

log = logging.getLogger(__name__)

DEFAULT_RESPONSE_TIMEOUT = 5.0


class Phase(str, enum.Enum):
    IDLE = "idle"
    DISCOVERED = "discovered"
    REQUESTED = "requested"
    GRANTED = "granted"
    DENIED = "denied"


@dataclass(frozen=True)
class ClientNote:
    """Local audit record for one inbound frame."""

    timestamp: float
    verdict: Verdict
    reason: Reason
    tx_digest: bytes
    phase: Phase


class ClientNode:
    def __init__(self, identity: DeviceIdentity, server_public: crypto.PublicKey, *,
                 server_serial_id: str | None = None, skip_discovery: bool = False,
                 timeout: float = DEFAULT_RESPONSE_TIMEOUT,
                 clock: Callable[[], float] = time.time):
        if skip_discovery and not server_serial_id:
            raise ConfigurationError("skipping discovery needs a pre-provisioned server serial ID")
        self.identity = identity
        self._server_public = server_public
        self.server_serial_id = server_serial_id
        self.timeout = timeout
        self.clock = clock
        self.notes: list[ClientNote] = []
        self._phase = Phase.DISCOVERED if skip_discovery else Phase.IDLE
        self._pending_token: Optional[bytes] = None
        self._requested_at: Optional[float] = None
        self._data_tokens: set[bytes] = set()

    @property
    def server_public(self) -> crypto.PublicKey:
        return self._server_public

    @property
    def phase(self) -> Phase:
        return self._phase

    @property
    def pending_token(self) -> Optional[bytes]:
        """Nonce token of the outstanding access request, if any."""
        return self._pending_token

    def _note(self, wire: bytes, reason: Reason) -> Phase:
        verdict = Verdict.ACCEPTED if reason is Reason.NONE else Verdict.DISCARDED
        self.notes.append(ClientNote(self.clock(), verdict, reason,
                                     transaction_digest(wire, verdict, reason), self._phase))
        if verdict is Verdict.DISCARDED:
            log.debug("%s discarded frame: %s", self.identity.serial_id, reason.value)
        return self._phase

    def on_frame(self, wire: bytes) -> Phase:
        if wire[:1] == bytes([HELLO_VERSION]):
            return self.on_hello(wire)
        return self.on_response(wire)

    def on_hello(self, wire: bytes) -> Phase:
        wire = bytes(wire)
        if self._phase not in (Phase.IDLE, Phase.DISCOVERED):
            return self._note(wire, Reason.UNEXPECTED)
        try:
            hello = read_hello(wire, self._server_public)
        except PacketError:
            return self._note(wire, Reason.BAD_SIGNATURE)
        if self.server_serial_id and hello.sender_serial_id != self.server_serial_id:
            return self._note(wire, Reason.NOT_REGISTERED)
        self.server_serial_id = hello.sender_serial_id
        self._phase = Phase.DISCOVERED
        return self._note(wire, Reason.NONE)

    def request_access(self) -> bytes:
        if self._phase is not Phase.DISCOVERED:
            raise StateError(f"cannot request access while {self._phase.value}")
        msg = InnerMessage(MessageType.ACCESS_REQUEST, self.identity.serial_id)
        wire = create_packet(msg, self.identity.private_key, self._server_public)
        self._pending_token = msg.nonce_token
        self._requested_at = self.clock()
        self._phase = Phase.REQUESTED
        return wire

    def _authenticate(self, wire: bytes):
        """Return (inner, reason); inner is None unless every check passed."""
        try:
            sealed = open_packet(wire, self.identity.private_key)
        except PacketError:
            return None, Reason.BAD_OUTER
        if not self.server_serial_id or sealed.sender_serial_id != self.server_serial_id:
            return None, Reason.NOT_REGISTERED
        try:
            inner = decrypt_inner(sealed, self.server_serial_id)
        except PacketError:
            return None, Reason.BAD_INNER
        if not verify_packet_signature(sealed, inner, self._server_public):
            return None, Reason.BAD_SIGNATURE
        return inner, Reason.NONE

    def on_response(self, wire: bytes) -> Phase:
        wire = bytes(wire)
        if self._phase not in (Phase.REQUESTED, Phase.GRANTED):
            return self._note(wire, Reason.UNEXPECTED)
        inner, reason = self._authenticate(wire)
        if inner is None:
            return self._note(wire, reason)

        if self._phase is Phase.GRANTED:
            # acknowledgements for DATA we sent
            if inner.payload not in self._data_tokens:
                return self._note(wire, Reason.REPLAY)
            self._data_tokens.discard(inner.payload)
            return self._note(wire, Reason.NONE)

        # server echoes the request's nonce token; anything else is stale
        if inner.payload != self._pending_token:
            return self._note(wire, Reason.REPLAY)
        if inner.msg_type is MessageType.ACCESS_GRANT:
            self._phase = Phase.GRANTED
        elif inner.msg_type is MessageType.ACCESS_DENY:
            self._phase = Phase.DENIED
        else:
            return self._note(wire, Reason.BAD_TYPE)
        self._pending_token = None
        return self._note(wire, Reason.NONE)

    def tick(self, now: float | None = None) -> Phase:
        """Re-arm an unanswered request once the response timeout has passed."""
        now = self.clock() if now is None else now
        if self._phase is Phase.REQUESTED and now - self._requested_at >= self.timeout:
            self._phase = Phase.DISCOVERED
            self._pending_token = None
        return self._phase

    def send_data(self, payload: bytes = b"") -> bytes:
        if self._phase is not Phase.GRANTED:
            raise StateError(f"cannot send data while {self._phase.value}")
        msg = InnerMessage(MessageType.DATA, self.identity.serial_id, payload=bytes(payload))
        self._data_tokens.add(msg.nonce_token)
        return create_packet(msg, self.identity.private_key, self._server_public)

    def handshake(self, transport, timeout: float | None = None) -> Phase:
        """Drive the handshake over a blocking transport until granted, denied or timeout."""
        timeout = self.timeout if timeout is None else timeout
        deadline = time.monotonic() + timeout
        if self._phase is Phase.DISCOVERED:
            transport.send(self.request_access())
        while self._phase not in (Phase.GRANTED, Phase.DENIED):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            frame = transport.recv(timeout=remaining)
            if frame is None:
                break
            self.on_frame(frame)
            if self._phase is Phase.DISCOVERED:
                transport.send(self.request_access())
        return self._phase

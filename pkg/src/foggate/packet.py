"""Three-layer packet codec.

Wire layout (integers big-endian)::

    packet    = version:1 | wrapped_key_len:2 | wrapped_key | env_nonce:12
                | env_ct_len:4 | env_ct
    envelope  = serial_len:2 | serial | sig_len:2 | sig | inner_nonce:12
                | inner_ct_len:4 | inner_ct                  (plaintext of env_ct)
    inner     = msg_type:1 | serial_len:2 | serial | nonce_token:16
                | payload_len:4 | payload                    (plaintext of inner_ct)

``env_ct`` is AES-GCM under a random session key that is RSA-OAEP wrapped to
the recipient.  ``inner_ct`` is AES-GCM under SHA-256(serial).  ``sig`` is an
RSA-PSS signature over SHA-256(inner).

Server hellos use a separate, unencrypted variant::

    hello     = 0xFF | serial_len:2 | serial | body_len:4 | body | sig_len:2 | sig

where ``body`` is an encoded SERVER_HELLO inner message signed by the server.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field

from . import crypto
from ._wire import FramingError, Reader, pack_field, pack_uint
from .errors import (
    ConstructionError,
    DecryptionError,
    IdentityMismatchError,
    InnerDecryptionError,
    InvalidIdentityError,
    OuterDecryptionError,
    PacketError,
    ParseError,
    VersionError,
)

PACKET_VERSION = 0x01
HELLO_VERSION = 0xFF
NONCE_TOKEN_SIZE = 16


class MessageType(enum.IntEnum):
    ACCESS_REQUEST = 0x01
    ACCESS_GRANT = 0x02
    ACCESS_DENY = 0x03
    SERVER_HELLO = 0x04
    DATA = 0x05


def new_nonce_token() -> bytes:
    return os.urandom(NONCE_TOKEN_SIZE)


@dataclass(frozen=True)
class InnerMessage:
    msg_type: MessageType
    sender_serial_id: str
    nonce_token: bytes = field(default_factory=new_nonce_token)
    payload: bytes = b""

    def encode(self) -> bytes:
        if not self.sender_serial_id:
            raise ConstructionError("sender serial ID must be non-empty")
        if len(self.nonce_token) != NONCE_TOKEN_SIZE:
            raise ConstructionError(f"nonce token must be {NONCE_TOKEN_SIZE} bytes")
        try:
            return b"".join([
                pack_uint(MessageType(self.msg_type), 1),
                pack_field(self.sender_serial_id.encode("utf-8"), 2),
                self.nonce_token,
                pack_field(bytes(self.payload), 4),
            ])
        except (FramingError, ValueError) as exc:
            raise ConstructionError(str(exc)) from None

    @classmethod
    def decode(cls, data: bytes) -> "InnerMessage":
        reader = Reader(data)
        try:
            try:
                msg_type = MessageType(reader.uint(1))
            except ValueError:
                raise FramingError("unknown message type") from None
            serial = reader.text(2)
            token = reader.take(NONCE_TOKEN_SIZE)
            payload = reader.field(4)
            reader.finish()
        except FramingError as exc:
            raise ParseError(f"inner message: {exc}") from None
        if not serial:
            raise ParseError("inner message: empty serial ID")
        return cls(msg_type, serial, token, payload)

    def digest(self) -> bytes:
        return crypto.one_way_hash(self.encode())


@dataclass(frozen=True)
class SealedPacket:
    """Envelope plaintext: what is readable once the outer layer is removed."""

    sender_serial_id: str
    signature: bytes
    inner_nonce: bytes
    inner_ciphertext: bytes

    def encode(self) -> bytes:
        return b"".join([
            pack_field(self.sender_serial_id.encode("utf-8"), 2),
            pack_field(self.signature, 2),
            self.inner_nonce,
            pack_field(self.inner_ciphertext, 4),
        ])

    @classmethod
    def decode(cls, data: bytes) -> "SealedPacket":
        reader = Reader(data)
        try:
            serial = reader.text(2)
            signature = reader.field(2)
            inner_nonce = reader.take(crypto.NONCE_SIZE)
            inner_ct = reader.field(4)
            reader.finish()
        except FramingError as exc:
            raise ParseError(f"envelope: {exc}") from None
        if not serial:
            raise ParseError("envelope: empty serial ID")
        return cls(serial, signature, inner_nonce, inner_ct)


# outer framing


def encode_wire(envelope: crypto.WrappedEnvelope, version: int = PACKET_VERSION) -> bytes:
    return b"".join([
        pack_uint(version, 1),
        pack_field(envelope.wrapped_key, 2),
        envelope.nonce,
        pack_field(envelope.ciphertext, 4),
    ])


def decode_wire(wire: bytes) -> tuple[int, crypto.WrappedEnvelope]:
    """Split wire bytes into version and envelope without decrypting."""
    if not wire:
        raise ParseError("empty packet")
    version = wire[0]
    if version != PACKET_VERSION:
        raise VersionError(f"unsupported packet version 0x{version:02x}")
    reader = Reader(wire)
    try:
        reader.take(1)
        wrapped_key = reader.field(2)
        nonce = reader.take(crypto.NONCE_SIZE)
        ciphertext = reader.field(4)
        reader.finish()
    except FramingError as exc:
        raise ParseError(f"outer frame: {exc}") from None
    return version, crypto.WrappedEnvelope(wrapped_key, nonce, ciphertext)


def seal(sealed: SealedPacket, recipient_public: crypto.PublicKey) -> bytes:
    """Outer layer only: wrap an envelope plaintext to the recipient."""
    return encode_wire(crypto.hybrid_wrap(recipient_public, sealed.encode()))


def create_packet(msg: InnerMessage, sender_private: crypto.PrivateKey,
                  recipient_public: crypto.PublicKey) -> bytes:
    if not isinstance(msg.sender_serial_id, str) or not msg.sender_serial_id:
        raise ConstructionError("sender serial ID must be non-empty")
    encoded = msg.encode()
    try:
        inner_key = crypto.derive_inner_key(msg.sender_serial_id)
        inner_nonce, inner_ct = crypto.symmetric_encrypt(inner_key, encoded)
        signature = crypto.sign(sender_private, crypto.one_way_hash(encoded))
        sealed = SealedPacket(msg.sender_serial_id, signature, inner_nonce, inner_ct)
        return seal(sealed, recipient_public)
    except (InvalidIdentityError, AttributeError, TypeError, ValueError) as exc:
        raise ConstructionError(f"cannot build packet: {exc}") from None


def open_packet(wire: bytes, recipient_private: crypto.PrivateKey) -> SealedPacket:
    _, envelope = decode_wire(wire)
    try:
        plaintext = crypto.hybrid_unwrap(recipient_private, envelope)
    except DecryptionError as exc:
        raise OuterDecryptionError(str(exc)) from None
    return SealedPacket.decode(plaintext)


def decrypt_inner(sealed: SealedPacket, claimed_serial_id: str | None = None) -> InnerMessage:
    claimed = sealed.sender_serial_id if claimed_serial_id is None else claimed_serial_id
    try:
        key = crypto.derive_inner_key(claimed)
    except InvalidIdentityError as exc:
        raise InnerDecryptionError(str(exc)) from None
    try:
        plaintext = crypto.symmetric_decrypt(key, sealed.inner_nonce, sealed.inner_ciphertext)
    except DecryptionError as exc:
        raise InnerDecryptionError(str(exc)) from None
    try:
        inner = InnerMessage.decode(plaintext)
    except ParseError as exc:
        raise InnerDecryptionError(str(exc)) from None
    if inner.sender_serial_id != claimed:
        raise IdentityMismatchError(
            f"inner sender {inner.sender_serial_id!r} does not match claimed {claimed!r}"
        )
    return inner


def verify_packet_signature(sealed: SealedPacket, inner: InnerMessage,
                            sender_public: crypto.PublicKey) -> bool:
    try:
        digest = inner.digest()
    except ConstructionError:
        return False
    return crypto.verify(sender_public, digest, sealed.signature)


# server hello


def encode_hello(server_serial_id: str, server_private: crypto.PrivateKey) -> bytes:
    body = InnerMessage(MessageType.SERVER_HELLO, server_serial_id).encode()
    signature = crypto.sign(server_private, crypto.one_way_hash(body))
    return b"".join([
        pack_uint(HELLO_VERSION, 1),
        pack_field(server_serial_id.encode("utf-8"), 2),
        pack_field(body, 4),
        pack_field(signature, 2),
    ])


def read_hello(wire: bytes, server_public: crypto.PublicKey) -> InnerMessage:
    """Parse and authenticate a hello; raises PacketError subclasses on any failure."""
    if not wire or wire[0] != HELLO_VERSION:
        raise VersionError("not a hello frame")
    reader = Reader(wire)
    try:
        reader.take(1)
        serial = reader.text(2)
        body = reader.field(4)
        signature = reader.field(2)
        reader.finish()
    except FramingError as exc:
        raise ParseError(f"hello: {exc}") from None
    if not crypto.verify(server_public, crypto.one_way_hash(body), signature):
        raise PacketError("hello signature does not verify")
    inner = InnerMessage.decode(body)
    if inner.msg_type is not MessageType.SERVER_HELLO or inner.sender_serial_id != serial:
        raise IdentityMismatchError("hello body does not match its header")
    return inner


# field layouts, for adversaries and audits that need to aim at one region


def _layout(data: bytes, fields) -> list[tuple[str, int, int]]:
    """Walk ``fields`` = [(name, fixed_width | ("len", prefix_width))] over ``data``."""
    regions, pos = [], 0
    for name, width in fields:
        if isinstance(width, tuple):
            prefix = width[1]
            length = int.from_bytes(data[pos:pos + prefix], "big")
            regions.append((f"{name}_len", pos, pos + prefix))
            pos += prefix
            regions.append((name, pos, pos + length))
            pos += length
        else:
            regions.append((name, pos, pos + width))
            pos += width
    if pos != len(data):
        raise ParseError("layout does not cover the data exactly")
    return regions


def wire_layout(wire: bytes) -> list[tuple[str, int, int]]:
    """(region, start, end) for each field of an encrypted packet."""
    return _layout(wire, [("version", 1), ("wrapped_key", ("len", 2)),
                          ("env_nonce", crypto.NONCE_SIZE), ("env_ct", ("len", 4))])


def envelope_layout(plaintext: bytes) -> list[tuple[str, int, int]]:
    return _layout(plaintext, [("serial", ("len", 2)), ("signature", ("len", 2)),
                               ("inner_nonce", crypto.NONCE_SIZE), ("inner_ct", ("len", 4))])


def inner_layout(plaintext: bytes) -> list[tuple[str, int, int]]:
    return _layout(plaintext, [("msg_type", 1), ("serial", ("len", 2)),
                               ("nonce_token", NONCE_TOKEN_SIZE), ("payload", ("len", 4))])

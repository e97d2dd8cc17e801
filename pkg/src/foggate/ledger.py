"""Permissioned, single-writer hash chain holding device registrations and audit records.

The ledger is an immutable value: every mutating operation returns a new
``Ledger`` that shares the existing ``Block`` objects and adds one at the tip.

Canonical block encoding (all integers big-endian)::

    block   = index:u64 | prev_hash:32 | timestamp:u64 | entry_count:u32 | entry*
    entry   = kind:u8 | serial_id_digest:32 | timestamp:u64 | body
    body    = pk_len:u16 | public_key_der | status:u8      (kind 1, identity)
            | tx_digest:32                                 (kind 2, transaction record)

``block_hash = SHA-256(block)``.  The ledger file is ``b"FGL1"`` followed by,
for every block, ``record_len:u32 | block | block_hash:32``.
"""

from __future__ import annotations

import enum
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

from . import crypto
from ._wire import FramingError, Reader, pack_field, pack_uint
from .errors import (
    IntegrityError,
    InvalidArgumentError,
    InvalidIdentityError,
    LedgerLoadError,
)

MAGIC = b"FGL1"
ZERO_HASH = bytes(crypto.HASH_SIZE)


class EntryKind(enum.IntEnum):
    IDENTITY = 1
    TRANSACTION = 2


class Status(enum.IntEnum):
    ALLOWED = 1
    BLOCKED = 2

    @property
    def label(self) -> str:
        return self.name.lower()


def _now() -> int:
    return int(time.time())


def serial_digest(serial_id: str) -> bytes:
    if not isinstance(serial_id, str) or not serial_id:
        raise InvalidArgumentError("serial ID must be a non-empty string")
    return crypto.one_way_hash(serial_id.encode("utf-8"))


@dataclass(frozen=True)
class LedgerEntry:
    kind: EntryKind
    serial_id_digest: bytes
    timestamp: int
    public_key: Optional[bytes] = None
    status: Optional[Status] = None
    tx_digest: Optional[bytes] = None

    def __post_init__(self):
        if len(self.serial_id_digest) != crypto.HASH_SIZE:
            raise InvalidArgumentError("serial_id_digest must be hash-width")
        if self.kind is EntryKind.IDENTITY:
            if self.public_key is None or self.status is None or self.tx_digest is not None:
                raise InvalidArgumentError("identity entries carry public_key and status only")
        elif self.kind is EntryKind.TRANSACTION:
            if self.tx_digest is None or self.public_key is not None or self.status is not None:
                raise InvalidArgumentError("transaction entries carry tx_digest only")
            if len(self.tx_digest) != crypto.HASH_SIZE:
                raise InvalidArgumentError("tx_digest must be hash-width")
        else:
            raise InvalidArgumentError(f"unknown entry kind {self.kind!r}")

    @classmethod
    def identity(cls, serial_id: str, public_key: bytes, status: Status, timestamp: int):
        return cls(EntryKind.IDENTITY, serial_digest(serial_id), timestamp,
                   public_key=bytes(public_key), status=Status(status))

    @classmethod
    def transaction(cls, tx_digest: bytes, timestamp: int, serial_id_digest: bytes = ZERO_HASH):
        return cls(EntryKind.TRANSACTION, serial_id_digest, timestamp, tx_digest=bytes(tx_digest))

    def encode(self) -> bytes:
        head = pack_uint(self.kind, 1) + self.serial_id_digest + pack_uint(self.timestamp, 8)
        if self.kind is EntryKind.IDENTITY:
            return head + pack_field(self.public_key, 2) + pack_uint(self.status, 1)
        return head + self.tx_digest

    @classmethod
    def read(cls, reader: Reader) -> "LedgerEntry":
        try:
            kind = EntryKind(reader.uint(1))
        except ValueError:
            raise FramingError("unknown entry kind") from None
        digest = reader.take(crypto.HASH_SIZE)
        timestamp = reader.uint(8)
        if kind is EntryKind.IDENTITY:
            public_key = reader.field(2)
            try:
                status = Status(reader.uint(1))
            except ValueError:
                raise FramingError("unknown status") from None
            return cls(kind, digest, timestamp, public_key=public_key, status=status)
        return cls(kind, digest, timestamp, tx_digest=reader.take(crypto.HASH_SIZE))


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: bytes
    timestamp: int
    entries: tuple[LedgerEntry, ...]
    block_hash: bytes

    @classmethod
    def create(cls, index: int, prev_hash: bytes, timestamp: int, entries: Iterable[LedgerEntry]):
        entries = tuple(entries)
        body = encode_block_body(index, prev_hash, timestamp, entries)
        return cls(index, prev_hash, timestamp, entries, crypto.one_way_hash(body))

    def body(self) -> bytes:
        return encode_block_body(self.index, self.prev_hash, self.timestamp, self.entries)

    def compute_hash(self) -> bytes:
        return crypto.one_way_hash(self.body())


def encode_block_body(index, prev_hash, timestamp, entries) -> bytes:
    parts = [pack_uint(index, 8), prev_hash, pack_uint(timestamp, 8), pack_uint(len(entries), 4)]
    parts.extend(e.encode() for e in entries)
    return b"".join(parts)


def decode_block_body(body: bytes, block_hash: bytes) -> Block:
    reader = Reader(body)
    index = reader.uint(8)
    prev_hash = reader.take(crypto.HASH_SIZE)
    timestamp = reader.uint(8)
    count = reader.uint(4)
    entries = []
    for _ in range(count):
        try:
            entries.append(LedgerEntry.read(reader))
        except InvalidArgumentError as exc:
            raise FramingError(str(exc)) from None
    reader.finish()
    return Block(index, prev_hash, timestamp, tuple(entries), block_hash)


class IntegrityReport(NamedTuple):
    valid: bool
    first_bad_index: Optional[int] = None


@dataclass(frozen=True)
class Ledger:
    blocks: tuple[Block, ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.blocks)

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def append_block(self, entries: Iterable[LedgerEntry], timestamp: int | None = None) -> "Ledger":
        entries = tuple(entries)
        if not entries:
            raise InvalidArgumentError("a block needs at least one entry")
        if not self.blocks:
            raise InvalidArgumentError("cannot append to an empty ledger; start from genesis()")
        tip = self.tip
        ts = max(_now() if timestamp is None else int(timestamp), tip.timestamp)
        block = Block.create(tip.index + 1, tip.block_hash, ts, entries)
        return Ledger(self.blocks + (block,))

    def register_device(self, serial_id: str, public_key, status=Status.ALLOWED,
                        timestamp: int | None = None) -> "Ledger":
        """Append an identity entry; re-registering the same serial supersedes earlier ones."""
        if not isinstance(public_key, (bytes, bytearray)):
            public_key = crypto.public_key_to_bytes(public_key)
        try:
            crypto.public_key_from_bytes(public_key)
        except InvalidIdentityError as exc:
            raise InvalidArgumentError(str(exc)) from None
        ts = _now() if timestamp is None else int(timestamp)
        entry = LedgerEntry.identity(serial_id, public_key, Status(status), ts)
        return self.append_block([entry], ts)

    def record_transaction(self, tx_digest: bytes, timestamp: int | None = None,
                           serial_id_digest: bytes = ZERO_HASH) -> "Ledger":
        ts = _now() if timestamp is None else int(timestamp)
        entry = LedgerEntry.transaction(tx_digest, ts, serial_id_digest)
        return self.append_block([entry], ts)

    def lookup(self, serial_id: str) -> Optional[LedgerEntry]:
        """Most recent identity entry for ``serial_id``, scanning newest block first."""
        if not serial_id:
            return None
        wanted = crypto.one_way_hash(serial_id.encode("utf-8"))
        for block in reversed(self.blocks):
            for entry in reversed(block.entries):
                if entry.kind is EntryKind.IDENTITY and entry.serial_id_digest == wanted:
                    return entry
        return None

    def identities(self) -> dict[bytes, LedgerEntry]:
        """Current (latest-wins) identity entry per serial digest, in first-seen order."""
        current: dict[bytes, LedgerEntry] = {}
        for block in self.blocks:
            for entry in block.entries:
                if entry.kind is EntryKind.IDENTITY:
                    current[entry.serial_id_digest] = entry
        return current

    def transactions(self) -> list[LedgerEntry]:
        return [e for b in self.blocks for e in b.entries if e.kind is EntryKind.TRANSACTION]


def genesis(timestamp: int = 0) -> Ledger:
    return Ledger((Block.create(0, ZERO_HASH, int(timestamp), ()),))


def verify_chain(ledger: Ledger) -> IntegrityReport:
    prev = ZERO_HASH
    for i, block in enumerate(ledger.blocks):
        if block.index != i or block.prev_hash != prev or block.compute_hash() != block.block_hash:
            return IntegrityReport(False, i)
        prev = block.block_hash
    if not ledger.blocks:
        return IntegrityReport(False, 0)
    return IntegrityReport(True)


# file format


def encode_ledger(ledger: Ledger) -> bytes:
    parts = [MAGIC]
    for block in ledger.blocks:
        parts.append(pack_field(block.body() + block.block_hash, 4))
    return b"".join(parts)


def decode_ledger(data: bytes) -> Ledger:
    """Parse a ledger file image without checking hash links (see ``load``)."""
    if data[:4] != MAGIC:
        raise LedgerLoadError("bad magic, not a ledger file")
    reader = Reader(data[4:])
    blocks = []
    try:
        while reader.remaining():
            record = reader.field(4)
            if len(record) < crypto.HASH_SIZE:
                raise FramingError("block record too short")
            body, stored_hash = record[:-crypto.HASH_SIZE], record[-crypto.HASH_SIZE:]
            block = decode_block_body(body, stored_hash)
            if block.body() != body:
                raise FramingError("non-canonical block encoding")
            blocks.append(block)
    except FramingError as exc:
        raise LedgerLoadError(f"corrupt ledger at block {len(blocks)}: {exc}") from None
    if not blocks:
        raise LedgerLoadError("ledger file holds no blocks")
    return Ledger(tuple(blocks))


def save(ledger: Ledger, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_ledger(ledger))
    os.replace(tmp, path)


def load(path) -> Ledger:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise LedgerLoadError(f"cannot read ledger {path}: {exc}") from None
    ledger = decode_ledger(data)
    report = verify_chain(ledger)
    if not report.valid:
        raise IntegrityError(
            f"ledger {path} fails verification at block {report.first_bad_index}",
            report.first_bad_index,
        )
    return ledger

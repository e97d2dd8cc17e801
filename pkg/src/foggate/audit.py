"""Audit records shared by the server and client nodes."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import IO, Iterable, Optional

from . import crypto


class Verdict(str, enum.Enum):
    GRANTED = "granted"
    DENIED = "denied"
    # client-side notes
    ACCEPTED = "accepted"
    DISCARDED = "discarded"


class Reason(str, enum.Enum):
    NONE = "none"
    NOT_REGISTERED = "not-registered"
    BLOCKED = "blocked"
    BAD_SIGNATURE = "bad-signature"
    BAD_INNER = "bad-inner"
    BAD_OUTER = "bad-outer"
    REPLAY = "replay"
    BAD_TYPE = "bad-type"
    # client only: frame arrived in a phase that does not expect it
    UNEXPECTED = "unexpected"


_VERDICT_CODES = {v: i for i, v in enumerate(Verdict, start=1)}
_REASON_CODES = {r: i for i, r in enumerate(Reason)}


def transaction_digest(frame: bytes, verdict: Verdict, reason: Reason) -> bytes:
    """SHA-256 over ``verdict_code:u8 | reason_code:u8 | frame``.

    Codes follow declaration order: verdicts from 1, reasons from 0.
    """
    head = bytes([_VERDICT_CODES[Verdict(verdict)], _REASON_CODES[Reason(reason)]])
    return crypto.one_way_hash(head + bytes(frame))


@dataclass(frozen=True)
class AuditEvent:
    timestamp: float
    sender_serial_id: Optional[str]
    verdict: Verdict
    reason: Reason
    tx_digest: bytes
    msg_type: Optional[str] = None
    block_index: Optional[int] = None

    def to_record(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "sender_serial_id": self.sender_serial_id,
            "verdict": self.verdict.value,
            "reason": self.reason.value,
            "tx_digest": self.tx_digest.hex(),
            "msg_type": self.msg_type,
            "block_index": self.block_index,
        }


def write_audit_log(events: Iterable[AuditEvent], fh: IO[str]) -> int:
    """Write one JSON object per line; returns the number of records written."""
    n = 0
    for event in events:
        fh.write(json.dumps(event.to_record(), sort_keys=True) + "\n")
        n += 1
    return n

"""Device identities and the on-disk key file format.

A key file is a JSON object::

    {"serial_id": "...", "public_key": "<base64 DER SubjectPublicKeyInfo>",
     "private_key": "<PKCS#8 PEM>"}

The ``.pub`` companion written next to it carries only the first two fields
and is what an administrator hands to ``foggate ledger add``.
"""

from __future__ import annotations

import base64
import json
import secrets
from dataclasses import dataclass
from pathlib import Path

from . import crypto
from .errors import InvalidIdentityError


def generate_serial_id(prefix: str = "dev") -> str:
    return f"{prefix}-{secrets.token_hex(8)}"


@dataclass(frozen=True)
class DeviceIdentity:
    serial_id: str
    keypair: crypto.KeyPair

    @classmethod
    def generate(cls, serial_id: str | None = None, bits: int = crypto.DEFAULT_KEY_BITS):
        return cls(serial_id or generate_serial_id(), crypto.generate_keypair(bits))

    @property
    def public_key(self) -> crypto.PublicKey:
        return self.keypair.public_key

    @property
    def private_key(self) -> crypto.PrivateKey:
        return self.keypair.private_key


@dataclass(frozen=True)
class PublicIdentity:
    serial_id: str
    public_key: crypto.PublicKey


def _public_record(serial_id, public_key) -> dict:
    der = crypto.public_key_to_bytes(public_key)
    return {"serial_id": serial_id, "public_key": base64.b64encode(der).decode("ascii")}


def save_identity(identity: DeviceIdentity, path, force: bool = False) -> Path:
    """Write the key file and its ``.pub`` companion; returns the public file path."""
    path = Path(path)
    pub_path = path.with_name(path.name + ".pub")
    if not force and (path.exists() or pub_path.exists()):
        raise FileExistsError(f"{path} already exists (use --force to overwrite)")
    record = _public_record(identity.serial_id, identity.public_key)
    record["private_key"] = crypto.private_key_to_pem(identity.private_key).decode("ascii")
    path.write_text(json.dumps(record, indent=2) + "\n")
    path.chmod(0o600)
    pub_path.write_text(json.dumps(_public_record(identity.serial_id, identity.public_key), indent=2) + "\n")
    return pub_path


def _read_record(path) -> dict:
    try:
        record = json.loads(Path(path).read_text())
        serial = record["serial_id"]
        record["public_key"] = base64.b64decode(record["public_key"], validate=True)
    except FileNotFoundError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise InvalidIdentityError(f"{path}: not a key file ({exc})") from None
    if not isinstance(serial, str) or not serial:
        raise InvalidIdentityError(f"{path}: empty serial_id")
    return record


def load_identity(path) -> DeviceIdentity:
    record = _read_record(path)
    if "private_key" not in record:
        raise InvalidIdentityError(f"{path}: no private key (is this a .pub file?)")
    private = crypto.private_key_from_pem(record["private_key"].encode("ascii"))
    public = crypto.public_key_from_bytes(record["public_key"])
    if crypto.public_key_to_bytes(private.public_key()) != crypto.public_key_to_bytes(public):
        raise InvalidIdentityError(f"{path}: public key does not match private key")
    return DeviceIdentity(record["serial_id"], crypto.KeyPair(private, public))


def load_public_identity(path) -> PublicIdentity:
    """Read serial + public key from either a key file or a ``.pub`` file."""
    record = _read_record(path)
    return PublicIdentity(record["serial_id"], crypto.public_key_from_bytes(record["public_key"]))

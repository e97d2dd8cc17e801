"""Cryptographic primitives: RSA key pairs and signatures, AES-256-GCM, SHA-256.

Every other module goes through these functions, so the algorithm choices
live in exactly one place:

* one-way hash: SHA-256 (inner-key derivation, signature digests, block links)
* symmetric cipher: AES-256-GCM with a fresh 96-bit nonce per message
* asymmetric cipher: RSA-OAEP(SHA-256) for key wrapping,
  RSA-PSS(SHA-256) over a precomputed digest for signatures
"""

from __future__ import annotations

import enum
import hashlib
import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.asymmetric.utils import Prehashed
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import ConfigurationError, DecryptionError, InvalidIdentityError

HASH_SIZE = 32
SYMMETRIC_KEY_SIZE = 32
NONCE_SIZE = 12
SUPPORTED_KEY_BITS = (2048, 3072)
DEFAULT_KEY_BITS = 2048
PUBLIC_EXPONENT = 65537

_OAEP = padding.OAEP(mgf=padding.MGF1(hashes.SHA256()), algorithm=hashes.SHA256(), label=None)
_PSS = padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=padding.PSS.DIGEST_LENGTH)

PublicKey = rsa.RSAPublicKey
PrivateKey = rsa.RSAPrivateKey


class Derivation(str, enum.Enum):
    SERIAL_ID_HASH = "serial-id-hash"
    EPHEMERAL_RANDOM = "ephemeral-random"


@dataclass(frozen=True)
class KeyPair:
    private_key: PrivateKey
    public_key: PublicKey

    @property
    def bits(self) -> int:
        return self.public_key.key_size

    def public_bytes(self) -> bytes:
        return public_key_to_bytes(self.public_key)


@dataclass(frozen=True)
class SymmetricKey:
    key: bytes
    derivation: Derivation

    def __post_init__(self):
        if len(self.key) != SYMMETRIC_KEY_SIZE:
            raise ValueError(f"symmetric key must be {SYMMETRIC_KEY_SIZE} bytes, got {len(self.key)}")

    def __repr__(self):
        return f"SymmetricKey(derivation={self.derivation.value!r})"


@dataclass(frozen=True)
class WrappedEnvelope:
    wrapped_key: bytes
    nonce: bytes
    ciphertext: bytes


def generate_keypair(bits: int = DEFAULT_KEY_BITS) -> KeyPair:
    if bits not in SUPPORTED_KEY_BITS:
        raise ConfigurationError(
            f"unsupported RSA key size {bits}; choose one of {SUPPORTED_KEY_BITS}"
        )
    private = rsa.generate_private_key(public_exponent=PUBLIC_EXPONENT, key_size=bits)
    return KeyPair(private, private.public_key())


def one_way_hash(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def derive_inner_key(serial_id: str) -> SymmetricKey:
    """Key for the inner message layer: the SHA-256 of the UTF-8 serial ID."""
    if not isinstance(serial_id, str) or not serial_id:
        raise InvalidIdentityError("serial ID must be a non-empty string")
    return SymmetricKey(one_way_hash(serial_id.encode("utf-8")), Derivation.SERIAL_ID_HASH)


def symmetric_encrypt(key: SymmetricKey, plaintext: bytes) -> tuple[bytes, bytes]:
    nonce = os.urandom(NONCE_SIZE)
    return nonce, AESGCM(key.key).encrypt(nonce, plaintext, None)


def symmetric_decrypt(key: SymmetricKey, nonce: bytes, ciphertext: bytes) -> bytes:
    if len(nonce) != NONCE_SIZE:
        raise DecryptionError("bad nonce length")
    try:
        return AESGCM(key.key).decrypt(nonce, ciphertext, None)
    except InvalidTag:
        raise DecryptionError("authentication failed") from None


def hybrid_wrap(recipient_public: PublicKey, payload: bytes) -> WrappedEnvelope:
    ephemeral = SymmetricKey(os.urandom(SYMMETRIC_KEY_SIZE), Derivation.EPHEMERAL_RANDOM)
    nonce, ciphertext = symmetric_encrypt(ephemeral, payload)
    wrapped = recipient_public.encrypt(ephemeral.key, _OAEP)
    return WrappedEnvelope(wrapped, nonce, ciphertext)


def hybrid_unwrap(recipient_private: PrivateKey, envelope: WrappedEnvelope) -> bytes:
    try:
        raw_key = recipient_private.decrypt(envelope.wrapped_key, _OAEP)
    except ValueError:
        raise DecryptionError("could not unwrap session key") from None
    if len(raw_key) != SYMMETRIC_KEY_SIZE:
        raise DecryptionError("unwrapped key has wrong length")
    key = SymmetricKey(raw_key, Derivation.EPHEMERAL_RANDOM)
    return symmetric_decrypt(key, envelope.nonce, envelope.ciphertext)


def sign(private_key: PrivateKey, digest: bytes) -> bytes:
    if len(digest) != HASH_SIZE:
        raise ValueError(f"digest must be {HASH_SIZE} bytes")
    return private_key.sign(digest, _PSS, Prehashed(hashes.SHA256()))


def verify(public_key: PublicKey, digest: bytes, signature: bytes) -> bool:
    if len(digest) != HASH_SIZE:
        return False
    try:
        public_key.verify(bytes(signature), digest, _PSS, Prehashed(hashes.SHA256()))
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


# serialization


def public_key_to_bytes(key: PublicKey) -> bytes:
    return key.public_bytes(
        serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
    )


def public_key_from_bytes(data: bytes) -> PublicKey:
    try:
        key = serialization.load_der_public_key(bytes(data))
    except (ValueError, TypeError) as exc:
        raise InvalidIdentityError(f"malformed public key: {exc}") from None
    if not isinstance(key, rsa.RSAPublicKey):
        raise InvalidIdentityError("public key is not RSA")
    if key.key_size not in SUPPORTED_KEY_BITS:
        raise InvalidIdentityError(f"unsupported public key size {key.key_size}")
    return key


def private_key_to_pem(key: PrivateKey) -> bytes:
    return key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption(),
    )


def private_key_from_pem(data: bytes) -> PrivateKey:
    try:
        key = serialization.load_pem_private_key(data, password=None)
    except (ValueError, TypeError) as exc:
        raise InvalidIdentityError(f"malformed private key: {exc}") from None
    if not isinstance(key, rsa.RSAPrivateKey):
        raise InvalidIdentityError("private key is not RSA")
    return key

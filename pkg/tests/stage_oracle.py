"""Reference model of the server's gate, written against the raw primitives.

It re-parses frames with ``struct`` and decrypts with ``cryptography``
directly, so it shares no code with the package's codec or pipeline.
"""

import hashlib
import struct

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, utils
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

OAEP = padding.OAEP(mgf=padding.MGF1(hashes.SHA256()), algorithm=hashes.SHA256(), label=None)
PSS = padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=padding.PSS.DIGEST_LENGTH)


class Malformed(Exception):
    pass


def _split(buf, fields):
    """fields items: int width, or 'H'/'I' for a length-prefixed field."""
    out, pos = [], 0
    for item in fields:
        if isinstance(item, int):
            if pos + item > len(buf):
                raise Malformed
            out.append(buf[pos:pos + item])
            pos += item
        else:
            size = struct.calcsize(">" + item)
            if pos + size > len(buf):
                raise Malformed
            (n,) = struct.unpack(">" + item, buf[pos:pos + size])
            pos += size
            if pos + n > len(buf):
                raise Malformed
            out.append(buf[pos:pos + n])
            pos += n
    if pos != len(buf):
        raise Malformed
    return out


def _serial(raw):
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise Malformed from None
    if not text:
        raise Malformed
    return text


def expected_reason(frame, server_private, registry, seen_tokens, granted):
    """Reason the gate must give ``frame``; 'none' means it must pass.

    ``registry`` maps serial -> (public key DER, 'allowed' | 'blocked').
    ``seen_tokens`` and ``granted`` are updated as the real server would.
    """
    try:
        if not frame or frame[0] != 1:
            raise Malformed
        _, wrapped, nonce, ct = _split(frame, [1, "H", 12, "I"])
        key = server_private.decrypt(wrapped, OAEP)
        env = AESGCM(key).decrypt(nonce, ct, None)
        serial_raw, sig, inner_nonce, inner_ct = _split(env, ["H", "H", 12, "I"])
        serial = _serial(serial_raw)
    except Exception:
        return "bad-outer", None
    if serial not in registry:
        return "not-registered", serial
    der, status = registry[serial]
    if status == "blocked":
        return "blocked", serial
    try:
        plain = AESGCM(hashlib.sha256(serial.encode()).digest()).decrypt(inner_nonce, inner_ct, None)
        mtype, inner_serial, token, _payload = _split(plain, [1, "H", 16, "I"])
        if mtype[0] not in (1, 2, 3, 4, 5) or _serial(inner_serial) != serial:
            raise Malformed
    except Exception:
        return "bad-inner", serial
    public = serialization.load_der_public_key(der)
    try:
        public.verify(sig, hashlib.sha256(plain).digest(), PSS, utils.Prehashed(hashes.SHA256()))
    except (InvalidSignature, ValueError):
        return "bad-signature", serial
    if token in seen_tokens:
        return "replay", serial
    seen_tokens.add(token)
    if mtype[0] == 1:
        granted.add(serial)
        return "none", serial
    if mtype[0] == 5 and serial in granted:
        return "none", serial
    return "bad-type", serial

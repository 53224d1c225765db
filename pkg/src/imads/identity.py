"""Self-asserted identities: ECDSA P-256 key pairs and GUID derivation.

A GUID is PBKDF2-HMAC-SHA256 over the uncompressed public key bytes with
a fixed-length random salt, Base64URL-encoded without padding. Because
the identifier is derived from the key itself, replacing the key in a
published dataset inevitably changes the GUID.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Callable, Union

from cryptography.hazmat.primitives.asymmetric import ec

from imads.encoding import b64url_encode
from imads.errors import GenerationError, InvalidKeyError, InvalidSaltError

CURVE = ec.SECP256R1()
# order of the P-256 base point
CURVE_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551

SALT_BYTES = 16
GUID_DIGEST_BYTES = 32
DEFAULT_ITERATIONS = 10000

PRIVATE_KEY_BYTES = 32

EntropySource = Union[int, random.Random, Callable[[int], bytes]]


def public_key_to_bytes(public_key: ec.EllipticCurvePublicKey) -> bytes:
    """Uncompressed point encoding: 0x04 || X || Y (65 bytes on P-256)."""
    from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

    return public_key.public_bytes(Encoding.X962, PublicFormat.UncompressedPoint)


def public_key_from_bytes(data: bytes) -> ec.EllipticCurvePublicKey:
    try:
        return ec.EllipticCurvePublicKey.from_encoded_point(CURVE, data)
    except ValueError as exc:
        raise InvalidKeyError(str(exc)) from exc


def derive_guid(public_key: bytes, salt: bytes, iterations: int = DEFAULT_ITERATIONS) -> str:
    """Derive the 43-char Base64URL GUID from raw public-key bytes and salt.

    Pure function: the same (key, salt, iterations) always yields the same
    GUID. The key bytes are used verbatim as the PBKDF2 password, so the
    uncompressed point encoding is the interoperable input form.
    """
    if not isinstance(public_key, (bytes, bytearray)) or len(public_key) == 0:
        raise InvalidKeyError("public key must be non-empty bytes")
    if len(salt) != SALT_BYTES:
        raise InvalidSaltError(f"salt must be {SALT_BYTES} bytes, got {len(salt)}")
    digest = hashlib.pbkdf2_hmac("sha256", bytes(public_key), bytes(salt), iterations, dklen=GUID_DIGEST_BYTES)
    return b64url_encode(digest)


@dataclass(frozen=True)
class GuidIdentity:
    """A user's key pair, salt, and the GUID derived from them."""

    private_key: ec.EllipticCurvePrivateKey
    public_key: bytes  # uncompressed point
    salt: bytes
    guid: str


def _read_entropy(source: EntropySource, n: int) -> bytes:
    if isinstance(source, int):
        source = random.Random(source)
    if isinstance(source, random.Random):
        return source.randbytes(n)
    data = source(n)
    if len(data) < n:
        raise GenerationError(f"entropy source supplied {len(data)} of {n} requested bytes")
    return data


def generate_identity(
    entropy_source: EntropySource, iterations: int = DEFAULT_ITERATIONS
) -> GuidIdentity:
    """Create a fresh identity from a deterministic-seedable entropy source.

    Accepts an int seed, a ``random.Random``, or a callable ``n -> bytes``.
    The same source state always yields the same identity.
    """
    if isinstance(entropy_source, int):
        entropy_source = random.Random(entropy_source)
    raw = _read_entropy(entropy_source, PRIVATE_KEY_BYTES)
    scalar = int.from_bytes(raw, "big") % (CURVE_ORDER - 1) + 1
    private_key = ec.derive_private_key(scalar, CURVE)
    public_key = public_key_to_bytes(private_key.public_key())
    salt = _read_entropy(entropy_source, SALT_BYTES)
    guid = derive_guid(public_key, salt, iterations)
    return GuidIdentity(private_key=private_key, public_key=public_key, salt=salt, guid=guid)

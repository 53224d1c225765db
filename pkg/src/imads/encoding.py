"""Canonical JSON and Base64URL helpers shared across the stack."""

import base64
import json
import re

_B64URL_RE = re.compile(r"^[A-Za-z0-9_-]*$")

GUID_CHARS = 43  # 256 bits, Base64URL, unpadded
GUID_BYTES = 32


def canonical_json(obj) -> bytes:
    """Serialize with sorted keys and no insignificant whitespace.

    Signatures are computed over this form, so it must be stable across
    processes and implementations.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def b64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64url_decode(text: str) -> bytes:
    if not _B64URL_RE.match(text):
        raise ValueError(f"not a Base64URL string: {text!r}")
    pad = (-len(text)) % 4
    if pad == 3:
        raise ValueError(f"invalid Base64URL length: {len(text)}")
    return base64.urlsafe_b64decode(text + "=" * pad)


def is_guid(text: str) -> bool:
    """Syntactic check: 43 unpadded Base64URL chars decoding to 32 bytes."""
    if len(text) != GUID_CHARS or not _B64URL_RE.match(text):
        return False
    try:
        return len(b64url_decode(text)) == GUID_BYTES
    except ValueError:
        return False

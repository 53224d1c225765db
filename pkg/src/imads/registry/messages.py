"""Inter-node wire messages, shared by the simulator and the TCP transport.

Every message is a JSON object with at least ``type``, ``sender_node_id``
(Base64URL), ``sender_address``, and ``rpc_id``; on the wire it is
serialized as canonical JSON prefixed with a 4-byte big-endian length.
"""

from __future__ import annotations

import json
import struct

REQUEST_TYPES = {"PING", "STORE", "FIND_NODE", "FIND_VALUE"}
RESPONSE_TYPES = {"PONG", "NODES", "VALUE", "STORE_OK", "STORE_REJECTED"}

_LEN = struct.Struct(">I")
MAX_MESSAGE_BYTES = 1 << 20


class MessageError(ValueError):
    pass


def validate_message(msg: dict) -> dict:
    if not isinstance(msg, dict):
        raise MessageError("message must be an object")
    mtype = msg.get("type")
    if mtype not in REQUEST_TYPES | RESPONSE_TYPES:
        raise MessageError(f"unknown message type: {mtype!r}")
    for field in ("sender_node_id", "rpc_id"):
        if field not in msg:
            raise MessageError(f"message missing {field}")
    return msg


def encode_message(msg: dict) -> bytes:
    validate_message(msg)
    body = json.dumps(msg, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    if len(body) > MAX_MESSAGE_BYTES:
        raise MessageError("message too large")
    return _LEN.pack(len(body)) + body


def decode_message(data: bytes) -> dict:
    if len(data) < _LEN.size:
        raise MessageError("short frame")
    (length,) = _LEN.unpack(data[: _LEN.size])
    body = data[_LEN.size : _LEN.size + length]
    if len(body) != length:
        raise MessageError("truncated frame")
    try:
        return validate_message(json.loads(body))
    except json.JSONDecodeError as exc:
        raise MessageError(f"bad JSON frame: {exc}") from exc


def read_message(recv) -> dict:
    """Read one length-prefixed message via a ``recv(n) -> bytes`` callable."""
    header = _read_exact(recv, _LEN.size)
    (length,) = _LEN.unpack(header)
    if length > MAX_MESSAGE_BYTES:
        raise MessageError("frame exceeds size limit")
    return decode_message(header + _read_exact(recv, length))


def _read_exact(recv, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = recv(remaining)
        if not chunk:
            raise MessageError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)

"""Local identity persistence: key file with restrictive permissions.

The file stores the private scalar, salt, GUID, PBKDF2 iteration count,
the userID entries last published, and the last published version
(0 = never published). It is created with mode 0600.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from cryptography.hazmat.primitives.asymmetric import ec

from imads.dataset import UserIdEntry
from imads.encoding import b64url_decode, b64url_encode
from imads.errors import ImadsError
from imads.identity import CURVE, DEFAULT_ITERATIONS, GuidIdentity, public_key_to_bytes


class IdentityFileError(ImadsError):
    """Identity file missing or malformed."""


@dataclass
class StoredIdentity:
    identity: GuidIdentity
    iterations: int = DEFAULT_ITERATIONS
    version: int = 0  # last published version; 0 means never published
    user_ids: list[UserIdEntry] = field(default_factory=list)


def save_identity(stored: StoredIdentity, path: str) -> None:
    obj = {
        "privateKey": b64url_encode(
            stored.identity.private_key.private_numbers().private_value.to_bytes(32, "big")
        ),
        "salt": b64url_encode(stored.identity.salt),
        "guid": stored.identity.guid,
        "iterations": stored.iterations,
        "version": stored.version,
        "userIDs": [e.to_obj() for e in stored.user_ids],
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
    os.chmod(path, 0o600)


def load_identity(path: str) -> StoredIdentity:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, ValueError) as exc:
        raise IdentityFileError(f"cannot read identity file {path!r}: {exc}") from exc
    try:
        scalar = int.from_bytes(b64url_decode(obj["privateKey"]), "big")
        private_key = ec.derive_private_key(scalar, CURVE)
        identity = GuidIdentity(
            private_key=private_key,
            public_key=public_key_to_bytes(private_key.public_key()),
            salt=b64url_decode(obj["salt"]),
            guid=obj["guid"],
        )
        return StoredIdentity(
            identity=identity,
            iterations=int(obj.get("iterations", DEFAULT_ITERATIONS)),
            version=int(obj.get("version", 0)),
            user_ids=[UserIdEntry.from_obj(e) for e in obj.get("userIDs", [])],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise IdentityFileError(f"malformed identity file {path!r}: {exc}") from exc

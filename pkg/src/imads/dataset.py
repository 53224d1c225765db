"""Signed GUID datasets: the record published in the global registry.

A dataset maps a GUID to the user's service identities plus the key
material the GUID was derived from. It travels as a compact ES256 JWT
whose payload is canonical JSON, and it is only trusted if (a) the
signature verifies under the key embedded in the payload and (b) the
GUID re-derives from that key and salt.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)

from imads.encoding import b64url_decode, b64url_encode, canonical_json, is_guid
from imads.errors import (
    DatasetParseError,
    GuidBindingError,
    InvalidKeyError,
    SignatureInvalidError,
    SigningError,
)
from imads.identity import (
    DEFAULT_ITERATIONS,
    derive_guid,
    public_key_from_bytes,
    public_key_to_bytes,
)

JWT_HEADER = {"alg": "ES256", "typ": "JWT"}
SIGNATURE_BYTES = 64  # raw r || s, 32 bytes each on P-256


@dataclass
class UserIdEntry:
    user_id: str
    domain_registry_url: str

    def to_obj(self) -> dict:
        return {"userID": self.user_id, "domainRegistry": self.domain_registry_url}

    @classmethod
    def from_obj(cls, obj: dict) -> "UserIdEntry":
        try:
            return cls(user_id=obj["userID"], domain_registry_url=obj["domainRegistry"])
        except (KeyError, TypeError) as exc:
            raise DatasetParseError(f"bad userIDs entry: {obj!r}") from exc


@dataclass
class GlobalDataset:
    """GUID record: key material plus the user's service identities."""

    guid: str
    public_key: bytes  # uncompressed point
    salt: bytes
    user_ids: list[UserIdEntry] = field(default_factory=list)
    version: int = 1
    issued_at: int = 0
    active: bool = True

    def validate(self) -> None:
        if not is_guid(self.guid):
            raise DatasetParseError(f"malformed GUID: {self.guid!r}")
        if self.version < 0:
            raise DatasetParseError("version must be non-negative")
        seen = set()
        for entry in self.user_ids:
            key = (entry.domain_registry_url, entry.user_id)
            if key in seen:
                raise DatasetParseError(f"duplicate userIDs entry: {key}")
            seen.add(key)

    def to_obj(self) -> dict:
        return {
            "guid": self.guid,
            "publicKey": b64url_encode(self.public_key),
            "salt": b64url_encode(self.salt),
            "userIDs": [e.to_obj() for e in self.user_ids],
            "version": self.version,
            "issuedAt": self.issued_at,
            "active": self.active,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "GlobalDataset":
        if not isinstance(obj, dict):
            raise DatasetParseError("dataset payload must be a JSON object")
        try:
            ds = cls(
                guid=obj["guid"],
                public_key=b64url_decode(obj["publicKey"]),
                salt=b64url_decode(obj["salt"]),
                user_ids=[UserIdEntry.from_obj(e) for e in obj["userIDs"]],
                version=int(obj["version"]),
                issued_at=int(obj["issuedAt"]),
                active=bool(obj["active"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetParseError(f"bad dataset payload: {exc}") from exc
        ds.validate()
        return ds


@dataclass(frozen=True)
class SignedDataset:
    """Compact-serialized JWT wrapping a GlobalDataset payload."""

    jwt: str

    def segments(self) -> tuple[str, str, str]:
        parts = self.jwt.split(".")
        if len(parts) != 3:
            raise DatasetParseError("JWT must have exactly three segments")
        return parts[0], parts[1], parts[2]

    def payload(self) -> GlobalDataset:
        """Decode the payload without verifying; use verify_dataset for trust."""
        _, body, _ = self.segments()
        try:
            obj = json.loads(b64url_decode(body))
        except (ValueError, UnicodeDecodeError) as exc:
            raise DatasetParseError(f"undecodable payload: {exc}") from exc
        return GlobalDataset.from_obj(obj)

    def signature_bytes(self) -> bytes:
        _, _, sig = self.segments()
        try:
            return b64url_decode(sig)
        except ValueError as exc:
            raise DatasetParseError(f"undecodable signature: {exc}") from exc


def sign_dataset(
    dataset: GlobalDataset,
    private_key: ec.EllipticCurvePrivateKey,
    iterations: int = DEFAULT_ITERATIONS,
) -> SignedDataset:
    """Sign a dataset as an ES256 JWT with a canonical-JSON payload.

    The private key must match the dataset's embedded public key and the
    GUID must re-derive from that key and salt; both are the signer's own
    material, so a mismatch is a caller bug, not an attack.
    """
    dataset.validate()
    if public_key_to_bytes(private_key.public_key()) != dataset.public_key:
        raise SigningError("private key does not match dataset public key")
    if derive_guid(dataset.public_key, dataset.salt, iterations) != dataset.guid:
        raise SigningError("dataset GUID does not derive from its key and salt")

    header_b64 = b64url_encode(canonical_json(JWT_HEADER))
    payload_b64 = b64url_encode(canonical_json(dataset.to_obj()))
    signing_input = f"{header_b64}.{payload_b64}".encode("ascii")
    der = private_key.sign(signing_input, ec.ECDSA(hashes.SHA256()))
    r, s = decode_dss_signature(der)
    raw = r.to_bytes(32, "big") + s.to_bytes(32, "big")
    return SignedDataset(jwt=f"{header_b64}.{payload_b64}.{b64url_encode(raw)}")


def verify_dataset(signed: SignedDataset, iterations: int = DEFAULT_ITERATIONS) -> GlobalDataset:
    """Verify an untrusted signed dataset and return its payload.

    Checks, in order: JWT structure and header, signature under the
    payload's own embedded public key, and GUID binding (the GUID must
    equal the derivation of the embedded key and salt). A dataset that
    was re-signed with a substituted key fails the binding check unless
    its GUID was also recomputed, in which case it identifies a
    different user entirely.
    """
    if isinstance(signed, str):
        signed = SignedDataset(jwt=signed)
    header_b64, payload_b64, _ = signed.segments()
    try:
        header = json.loads(b64url_decode(header_b64))
    except (ValueError, UnicodeDecodeError) as exc:
        raise DatasetParseError(f"undecodable header: {exc}") from exc
    if not isinstance(header, dict) or header.get("alg") != "ES256":
        raise DatasetParseError(f"unsupported JWT header: {header!r}")

    dataset = signed.payload()
    raw_sig = signed.signature_bytes()
    if len(raw_sig) != SIGNATURE_BYTES:
        raise SignatureInvalidError(f"signature must be {SIGNATURE_BYTES} bytes")
    try:
        public_key = public_key_from_bytes(dataset.public_key)
    except InvalidKeyError as exc:
        raise DatasetParseError(f"embedded public key invalid: {exc}") from exc

    r = int.from_bytes(raw_sig[:32], "big")
    s = int.from_bytes(raw_sig[32:], "big")
    signing_input = f"{header_b64}.{payload_b64}".encode("ascii")
    try:
        public_key.verify(encode_dss_signature(r, s), signing_input, ec.ECDSA(hashes.SHA256()))
    except (InvalidSignature, ValueError) as exc:
        raise SignatureInvalidError("JWT signature does not verify") from exc

    if derive_guid(dataset.public_key, dataset.salt, iterations) != dataset.guid:
        raise GuidBindingError("GUID does not derive from embedded key and salt")
    return dataset

"""Global registry facade: validated read/write over a DHT backend.

The facade enforces the trust rules at the service boundary: nothing is
stored or returned unless its signature verifies and its GUID re-derives
from the embedded key material, and re-publication must strictly
increase the version.
"""

from __future__ import annotations

import threading
from typing import Optional, Protocol

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from imads.dataset import GlobalDataset, SignedDataset, verify_dataset
from imads.encoding import b64url_decode, is_guid
from imads.errors import (
    DatasetParseError,
    GuidBindingError,
    IntegrityError,
    MalformedGuidError,
    NotFoundError,
    SignatureInvalidError,
    VersionConflictError,
)
from imads.identity import DEFAULT_ITERATIONS
from imads.registry.node import KademliaNode


class DhtBackend(Protocol):
    def put(self, key: bytes, signed: SignedDataset) -> None: ...

    def get(self, key: bytes) -> Optional[SignedDataset]: ...


class DhtNodeBackend:
    """Backend running DHT operations through one gateway node."""

    def __init__(self, node: KademliaNode):
        self.node = node
        self._lock = threading.Lock()

    def put(self, key: bytes, signed: SignedDataset) -> None:
        with self._lock:
            self.node.dht_store(key, signed)

    def get(self, key: bytes) -> Optional[SignedDataset]:
        with self._lock:
            return self.node.dht_get(key)


class GlobalRegistryFacade:
    """put/get GUID records with full validation at the boundary."""

    def __init__(self, backend: DhtBackend, iterations: int = DEFAULT_ITERATIONS):
        self.backend = backend
        self.iterations = iterations

    def put_guid(self, jwt: str) -> GlobalDataset:
        """Accept a signed dataset for publication.

        Raises DatasetParseError / SignatureInvalidError /
        GuidBindingError on invalid input and VersionConflictError when
        the incoming version does not exceed the stored one.
        """
        signed = SignedDataset(jwt)
        dataset = verify_dataset(signed, iterations=self.iterations)
        key = b64url_decode(dataset.guid)
        existing = self._existing_version(key)
        if existing is not None and dataset.version <= existing:
            raise VersionConflictError(
                f"version {dataset.version} does not exceed stored version {existing}"
            )
        self.backend.put(key, signed)
        return dataset

    def _existing_version(self, key: bytes) -> Optional[int]:
        try:
            current = self.backend.get(key)
        except IntegrityError:
            return None  # only corrupt replicas exist; allow healing overwrite
        if current is None:
            return None
        return current.payload().version

    def get_guid(self, guid: str) -> SignedDataset:
        if not is_guid(guid):
            raise MalformedGuidError(f"not a 43-char Base64URL GUID: {guid!r}")
        signed = self.backend.get(b64url_decode(guid))
        if signed is None:
            raise NotFoundError(guid)
        return signed


_STATUS = {
    MalformedGuidError: 400,
    DatasetParseError: 400,
    SignatureInvalidError: 401,
    GuidBindingError: 403,
    NotFoundError: 404,
    VersionConflictError: 409,
    IntegrityError: 502,
}


def create_global_registry_app(facade: GlobalRegistryFacade):
    """HTTP facade: GET/PUT /guid/{guid} carrying compact JWTs."""
    app = FastAPI(title="global-registry")

    def _error(exc: Exception) -> JSONResponse:
        status = _STATUS.get(type(exc), 500)
        return JSONResponse({"error": type(exc).__name__, "detail": str(exc)}, status_code=status)

    @app.get("/guid/{guid}")
    def get_guid(guid: str):
        try:
            signed = facade.get_guid(guid)
        except Exception as exc:
            return _error(exc)
        return Response(content=signed.jwt, media_type="application/jwt")

    @app.put("/guid/{guid}")
    async def put_guid(guid: str, request: Request):
        jwt = (await request.body()).decode("utf-8", errors="replace").strip()
        try:
            if SignedDataset(jwt).payload().guid != guid:
                raise DatasetParseError("path GUID does not match dataset GUID")
            dataset = facade.put_guid(jwt)
        except Exception as exc:
            return _error(exc)
        return JSONResponse({"guid": dataset.guid, "version": dataset.version}, status_code=200)

    return app

"""Client pipeline: search -> GUID -> global registry -> domain registries.

``resolve`` turns a free-text query or a bare GUID into a ContactSheet of
live endpoints. The signed dataset is verified locally before any domain
registry is contacted; domain-registry queries fan out concurrently and a
single unreachable registry only marks its own entry as failed.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional
from urllib.parse import quote

import httpx

from imads.client.config import ClientConfig
from imads.client.identity_store import StoredIdentity, load_identity, save_identity
from imads.dataset import GlobalDataset, SignedDataset, UserIdEntry, sign_dataset, verify_dataset
from imads.encoding import is_guid
from imads.errors import ImadsError, NotFoundError, VersionConflictError
from imads.identity import DEFAULT_ITERATIONS, GuidIdentity, generate_identity

DEFAULT_TIMEOUT_S = 5.0
MAX_FANOUT = 8


class ClientError(ImadsError):
    """Resolution failed for a reason other than a core validation error."""


@dataclass
class ContactEntry:
    domain_registry_url: str
    user_id: str
    instances: list[dict] = field(default_factory=list)
    error: Optional[str] = None

    def to_obj(self) -> dict:
        return {
            "domainRegistry": self.domain_registry_url,
            "userID": self.user_id,
            "instances": self.instances,
            "error": self.error,
        }


@dataclass
class ContactSheet:
    guid: str
    entries: list[ContactEntry]
    resolved_at: float

    def to_obj(self) -> dict:
        return {
            "guid": self.guid,
            "entries": [e.to_obj() for e in self.entries],
            "resolvedAt": self.resolved_at,
        }

    def live_instances(self) -> list[dict]:
        return [inst for entry in self.entries for inst in entry.instances]


class ImadsClient:
    def __init__(
        self,
        config: ClientConfig,
        http: Optional[httpx.Client] = None,
        iterations: int = DEFAULT_ITERATIONS,
    ):
        self.config = config
        self.http = http or httpx.Client(timeout=DEFAULT_TIMEOUT_S)
        self.iterations = iterations

    # ----- discovery -----

    def search(self, query: str) -> dict:
        headers = {}
        if self.config.discovery_token:
            headers["Authorization"] = f"Bearer {self.config.discovery_token}"
        r = self.http.get(
            f"{self.config.discovery_url}/discovery/rest/discover/lookup",
            params={"searchquery": query},
            headers=headers,
        )
        if r.status_code != 200:
            raise ClientError(f"discovery lookup failed: HTTP {r.status_code}")
        return r.json()

    # ----- global registry -----

    def get_dataset(self, guid: str) -> GlobalDataset:
        """Fetch and locally verify the signed dataset for a GUID."""
        r = self.http.get(f"{self.config.global_registry_url}/guid/{guid}")
        if r.status_code == 404:
            raise NotFoundError(guid)
        if r.status_code != 200:
            raise ClientError(f"global registry GET failed: HTTP {r.status_code}: {r.text}")
        return verify_dataset(SignedDataset(r.text.strip()), iterations=self.iterations)

    def put_dataset(self, signed: SignedDataset) -> dict:
        guid = signed.payload().guid
        r = self.http.put(
            f"{self.config.global_registry_url}/guid/{guid}",
            content=signed.jwt,
            headers={"Content-Type": "application/jwt"},
        )
        if r.status_code == 409:
            raise VersionConflictError(r.text)
        if r.status_code != 200:
            raise ClientError(f"global registry PUT failed: HTTP {r.status_code}: {r.text}")
        return r.json()

    # ----- resolution pipeline -----

    def resolve(
        self,
        query_or_guid: str,
        capability: Optional[str] = None,
        pick: int = 0,
    ) -> ContactSheet:
        text = query_or_guid.strip()
        if not text:
            raise ClientError("empty query")
        guid = text if is_guid(text) else self._guid_from_search(text, pick)
        dataset = self.get_dataset(guid)  # verification failure aborts resolution
        entries = list(dataset.user_ids)
        with ThreadPoolExecutor(max_workers=min(MAX_FANOUT, max(1, len(entries)))) as pool:
            resolved = list(
                pool.map(lambda e: self._query_domain_registry(e, capability), entries)
            )
        return ContactSheet(guid=guid, entries=resolved, resolved_at=time.time())

    def _guid_from_search(self, query: str, pick: int) -> str:
        response = self.search(query)
        results = response.get("results", [])
        if not results:
            raise NotFoundError(f"no discovery results for {query!r}")
        if not 0 <= pick < len(results):
            raise ClientError(f"--pick {pick} out of range ({len(results)} results)")
        guid = results[pick].get("GUID")
        if not guid:
            raise ClientError(f"result {pick} has no GUID attached")
        return guid

    def _query_domain_registry(self, entry: UserIdEntry, capability: Optional[str]) -> ContactEntry:
        contact = ContactEntry(
            domain_registry_url=entry.domain_registry_url, user_id=entry.user_id
        )
        url = f"{entry.domain_registry_url}/hyperty/user/{quote(entry.user_id, safe='')}"
        params = {"cap": capability} if capability else {}
        try:
            r = self.http.get(url, params=params)
        except httpx.HTTPError as exc:
            contact.error = f"unreachable: {exc}"
            return contact
        if r.status_code != 200:
            contact.error = f"HTTP {r.status_code}"
            return contact
        contact.instances = r.json()
        return contact

    # ----- identity lifecycle -----

    def create_and_publish_identity(
        self,
        user_ids: list[UserIdEntry],
        path: Optional[str] = None,
        entropy=None,
    ) -> GuidIdentity:
        """Generate, persist, sign, and publish a v1 identity dataset."""
        if not user_ids:
            raise ClientError("at least one userID entry is required")
        identity = generate_identity(entropy if entropy is not None else os.urandom, self.iterations)
        stored = StoredIdentity(
            identity=identity, iterations=self.iterations, version=0, user_ids=list(user_ids)
        )
        path = path or self.config.identity_path()
        save_identity(stored, path)
        self.publish_identity(path)
        return identity

    def publish_identity(
        self, path: Optional[str] = None, add_user_ids: Optional[list[UserIdEntry]] = None
    ) -> dict:
        """Sign the stored identity at the next version and publish it.

        The version in the file is only bumped after the registry accepts
        the record, so a rejected publication can simply be retried.
        """
        path = path or self.config.identity_path()
        stored = load_identity(path)
        for entry in add_user_ids or []:
            if all(e.to_obj() != entry.to_obj() for e in stored.user_ids):
                stored.user_ids.append(entry)
        if not stored.user_ids:
            raise ClientError("identity has no userID entries to publish")
        dataset = GlobalDataset(
            guid=stored.identity.guid,
            public_key=stored.identity.public_key,
            salt=stored.identity.salt,
            user_ids=stored.user_ids,
            version=stored.version + 1,
            issued_at=int(time.time()),
        )
        signed = sign_dataset(dataset, stored.identity.private_key, iterations=stored.iterations)
        ack = self.put_dataset(signed)
        stored.version = dataset.version
        save_identity(stored, path)
        return ack

"""Kademlia node: routing table, iterative lookups, and validated storage.

Node IDs share the 256-bit space with GUID digests, so a GUID key can be
located without re-hashing. All network I/O goes through an abstract
transport so the same node logic runs inside the deterministic simulator
and over real sockets.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from imads.dataset import SignedDataset, verify_dataset
from imads.encoding import b64url_decode, b64url_encode
from imads.errors import ImadsError, IntegrityError
from imads.identity import DEFAULT_ITERATIONS

ID_BITS = 256
ID_BYTES = 32

DEFAULT_K = 8
DEFAULT_ALPHA = 3
DEFAULT_RECORD_TTL_S = 24 * 3600.0


def xor_distance(a: bytes, b: bytes) -> int:
    """XOR metric between two 32-byte identifiers, as a big-endian magnitude."""
    if len(a) != ID_BYTES or len(b) != ID_BYTES:
        raise ValueError("identifiers must be 32 bytes")
    return int.from_bytes(a, "big") ^ int.from_bytes(b, "big")


@dataclass(frozen=True)
class Contact:
    node_id: bytes
    address: str


class Transport(Protocol):
    def request(self, sender: "KademliaNode", to_address: str, message: dict) -> Optional[dict]:
        """Send a request and return the response, or None on timeout/loss."""


class RoutingTable:
    """256 distance-indexed k-buckets, least-recently-seen first.

    Bucket i holds contacts whose XOR distance from the owner has its
    highest set bit at position i, i.e. contacts sharing exactly 255 - i
    leading bits with the owner.
    """

    def __init__(self, owner: bytes, k: int = DEFAULT_K):
        self.owner = owner
        self.k = k
        self.buckets: list[list[Contact]] = [[] for _ in range(ID_BITS)]
        self.last_seen: dict[bytes, float] = {}

    def bucket_index(self, node_id: bytes) -> int:
        d = xor_distance(self.owner, node_id)
        if d == 0:
            raise ValueError("own ID has no bucket")
        return d.bit_length() - 1

    def contacts(self) -> list[Contact]:
        return [c for bucket in self.buckets for c in bucket]

    def __len__(self) -> int:
        return sum(len(b) for b in self.buckets)

    def update(
        self, contact: Contact, now: float = 0.0, ping: Optional[Callable[[Contact], bool]] = None
    ) -> None:
        """Record a contact as just seen.

        Known contacts move to most-recently-seen. New contacts are
        appended while the bucket has room; when full, the least-recently
        seen contact is pinged and only evicted if it fails to answer,
        in which case the new contact takes its place.
        """
        if contact.node_id == self.owner:
            return
        bucket = self.buckets[self.bucket_index(contact.node_id)]
        self.last_seen[contact.node_id] = now
        for i, existing in enumerate(bucket):
            if existing.node_id == contact.node_id:
                bucket.pop(i)
                bucket.append(contact)
                return
        if len(bucket) < self.k:
            bucket.append(contact)
            return
        oldest = bucket[0]
        if ping is not None and ping(oldest):
            bucket.pop(0)
            bucket.append(oldest)  # still alive: keep, drop the newcomer
        else:
            bucket.pop(0)
            bucket.append(contact)

    def remove(self, node_id: bytes) -> None:
        if node_id == self.owner:
            return
        bucket = self.buckets[self.bucket_index(node_id)]
        self.buckets[self.bucket_index(node_id)] = [c for c in bucket if c.node_id != node_id]
        self.last_seen.pop(node_id, None)

    def closest(self, key: bytes, count: int) -> list[Contact]:
        return sorted(self.contacts(), key=lambda c: xor_distance(c.node_id, key))[:count]


@dataclass
class StoredRecord:
    jwt: str
    version: int
    issued_at: int
    stored_at: float
    replica: bool = True

    def order(self) -> tuple:
        # conflict resolution: version, then issue time, then signature bytes
        return (self.version, self.issued_at, self.jwt.rsplit(".", 1)[1])


class KademliaNode:
    """One DHT node: handles inbound RPCs and drives iterative lookups."""

    def __init__(
        self,
        node_id: bytes,
        address: str,
        transport: Optional[Transport] = None,
        *,
        k: int = DEFAULT_K,
        alpha: int = DEFAULT_ALPHA,
        iterations: int = DEFAULT_ITERATIONS,
        record_ttl_s: float = DEFAULT_RECORD_TTL_S,
        clock: Callable[[], float] = time.time,
    ):
        self.node_id = node_id
        self.address = address
        self.transport = transport
        self.k = k
        self.alpha = alpha
        self.iterations = iterations
        self.record_ttl_s = record_ttl_s
        self.clock = clock
        self.table = RoutingTable(node_id, k)
        self.store: dict[bytes, StoredRecord] = {}
        self.lookup_rounds: list[int] = []
        self._rpc_counter = 0
        self._lock = threading.RLock()

    # ----- outbound -----

    def _next_rpc_id(self) -> int:
        with self._lock:
            self._rpc_counter += 1
            return self._rpc_counter

    def rpc(self, contact: Contact, payload: dict) -> Optional[dict]:
        message = {
            "sender_node_id": b64url_encode(self.node_id),
            "sender_address": self.address,
            "rpc_id": self._next_rpc_id(),
            **payload,
        }
        response = self.transport.request(self, contact.address, message)
        if response is None:
            with self._lock:
                self.table.remove(contact.node_id)
        else:
            self._saw_contact(Contact(b64url_decode(response["sender_node_id"]), contact.address))
        return response

    def ping(self, contact: Contact) -> bool:
        return self.rpc(contact, {"type": "PING"}) is not None

    def _saw_contact(self, contact: Contact) -> None:
        if contact.node_id == self.node_id:
            return
        with self._lock:
            self.table.update(contact, now=self.clock(), ping=None)

    def join(self, bootstrap: list[Contact]) -> None:
        """Seed the table from bootstrap contacts and look up our own ID."""
        for contact in bootstrap:
            self._saw_contact(contact)
        self.iterative_find_node(self.node_id)

    # ----- inbound -----

    def handle_message(self, message: dict) -> dict:
        sender = Contact(b64url_decode(message["sender_node_id"]), message["sender_address"])
        mtype = message["type"]
        if sender.node_id != self.node_id:
            if mtype == "PING":
                # answer pings without blocking on the node lock: an
                # eviction ping from a peer must never deadlock against a
                # handler on this node that is itself waiting on that peer
                if self._lock.acquire(blocking=False):
                    try:
                        self.table.update(sender, now=self.clock(), ping=None)
                    finally:
                        self._lock.release()
            else:
                with self._lock:
                    self.table.update(sender, now=self.clock(), ping=self.ping)
        if mtype == "PING":
            body = {"type": "PONG"}
        elif mtype == "FIND_NODE":
            body = {"type": "NODES", "contacts": self._closest_with_self(b64url_decode(message["key"]))}
        elif mtype == "FIND_VALUE":
            key = b64url_decode(message["key"])
            record = self._local_get(key)
            if record is not None:
                body = {"type": "VALUE", "jwt": record.jwt}
            else:
                body = {"type": "NODES", "contacts": self._closest_with_self(key)}
        elif mtype == "STORE":
            body = self._handle_store(message)
        else:
            raise ValueError(f"unexpected request type {mtype!r}")
        return {
            "sender_node_id": b64url_encode(self.node_id),
            "sender_address": self.address,
            "rpc_id": message["rpc_id"],
            **body,
        }

    def _closest_with_self(self, key: bytes) -> list[dict]:
        with self._lock:
            contacts = self.table.closest(key, self.k)
        contacts = sorted(
            contacts + [Contact(self.node_id, self.address)],
            key=lambda c: xor_distance(c.node_id, key),
        )[: self.k]
        return [{"node_id": b64url_encode(c.node_id), "address": c.address} for c in contacts]

    def _handle_store(self, message: dict) -> dict:
        try:
            key = b64url_decode(message["key"])
            dataset = verify_dataset(SignedDataset(message["jwt"]), iterations=self.iterations)
            if b64url_decode(dataset.guid) != key or len(key) != ID_BYTES:
                raise IntegrityError("store key does not match dataset GUID")
        except (ImadsError, KeyError, ValueError) as exc:
            return {"type": "STORE_REJECTED", "reason": str(exc)}
        record = StoredRecord(
            jwt=message["jwt"],
            version=dataset.version,
            issued_at=dataset.issued_at,
            stored_at=self.clock(),
        )
        with self._lock:
            existing = self.store.get(key)
            if existing is None or record.order() >= existing.order():
                self.store[key] = record
        return {"type": "STORE_OK"}

    def _local_get(self, key: bytes) -> Optional[StoredRecord]:
        with self._lock:
            record = self.store.get(key)
            if record is None:
                return None
            if self.clock() - record.stored_at > self.record_ttl_s:
                del self.store[key]
                return None
            return record

    # ----- iterative operations -----

    def iterative_find_node(self, key: bytes) -> list[Contact]:
        """Locate the k closest known contacts to a key.

        Proceeds in rounds of alpha parallel-equivalent requests over the
        current best candidates; terminates once every contact in the
        best-k set has been queried (a round that improves nothing adds
        no new candidates, so the loop drains and stops).
        """
        contacts, rounds = self._lookup(key)
        self.lookup_rounds.append(rounds)
        return contacts

    def _lookup(self, key: bytes) -> tuple[list[Contact], int]:
        with self._lock:
            seed = self.table.closest(key, self.k)
        known: dict[bytes, Contact] = {c.node_id: c for c in seed}
        known[self.node_id] = Contact(self.node_id, self.address)
        queried = {self.node_id}
        failed: set[bytes] = set()
        rounds = 0

        def best() -> list[Contact]:
            alive = [c for c in known.values() if c.node_id not in failed]
            return sorted(alive, key=lambda c: xor_distance(c.node_id, key))[: self.k]

        while True:
            candidates = [c for c in best() if c.node_id not in queried][: self.alpha]
            if not candidates:
                break
            rounds += 1
            for contact in candidates:
                queried.add(contact.node_id)
                response = self.rpc(contact, {"type": "FIND_NODE", "key": b64url_encode(key)})
                if response is None:
                    failed.add(contact.node_id)
                    continue
                for entry in response.get("contacts", []):
                    node_id = b64url_decode(entry["node_id"])
                    known.setdefault(node_id, Contact(node_id, entry["address"]))
        return best(), rounds

    def dht_store(self, key: bytes, signed: SignedDataset) -> int:
        """Validate and store a signed dataset on the k closest nodes.

        Returns the number of replicas acknowledged. Raises before any
        network traffic if the dataset fails verification or the key does
        not match its GUID.
        """
        dataset = verify_dataset(signed, iterations=self.iterations)
        if b64url_decode(dataset.guid) != key:
            raise IntegrityError("store key does not match dataset GUID")
        targets = self.iterative_find_node(key)
        if not targets:
            targets = [Contact(self.node_id, self.address)]
        acked = 0
        for contact in targets:
            if contact.node_id == self.node_id:
                reply = self._handle_store(
                    {"key": b64url_encode(key), "jwt": signed.jwt, "rpc_id": 0}
                )
            else:
                reply = self.rpc(
                    contact, {"type": "STORE", "key": b64url_encode(key), "jwt": signed.jwt}
                )
            if reply is not None and reply["type"] == "STORE_OK":
                acked += 1
        return acked

    def dht_get(self, key: bytes) -> Optional[SignedDataset]:
        """Fetch the highest-version valid replica among the k closest nodes.

        Every replica is re-verified (signature and GUID binding) before
        being considered; tampered replicas are skipped. Returns None when
        no replica exists; raises IntegrityError when replicas exist but
        none verifies.
        """
        targets = self.iterative_find_node(key)
        candidates: list[str] = []
        local = self._local_get(key)
        if local is not None:
            candidates.append(local.jwt)
        for contact in targets:
            if contact.node_id == self.node_id:
                continue
            reply = self.rpc(contact, {"type": "FIND_VALUE", "key": b64url_encode(key)})
            if reply is not None and reply["type"] == "VALUE":
                candidates.append(reply["jwt"])
        if not candidates:
            return None
        valid: list[tuple[tuple, str]] = []
        for jwt in candidates:
            try:
                dataset = verify_dataset(SignedDataset(jwt), iterations=self.iterations)
                if b64url_decode(dataset.guid) != key:
                    continue
                record = StoredRecord(jwt, dataset.version, dataset.issued_at, 0.0)
                valid.append((record.order(), jwt))
            except ImadsError:
                continue
        if not valid:
            raise IntegrityError("replicas found but none passed verification")
        return SignedDataset(max(valid)[1])

    def republish_all(self) -> int:
        """Re-store every locally held record on its current k closest nodes."""
        count = 0
        with self._lock:
            items = list(self.store.items())
        for key, record in items:
            if self.clock() - record.stored_at > self.record_ttl_s:
                with self._lock:
                    self.store.pop(key, None)
                continue
            self.dht_store(key, SignedDataset(record.jwt))
            count += 1
        return count

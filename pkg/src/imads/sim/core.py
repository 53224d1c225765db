"""Deterministic in-process network simulator for DHT nodes.

A single virtual-time event loop hosts every node; message latency and
loss are sampled from a PRNG stream keyed by (seed, sender, rpc_id), so
the trace is a pure function of configuration plus workload and adding
instrumentation never perturbs outcomes.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from imads.dataset import SignedDataset
from imads.encoding import b64url_decode
from imads.registry.messages import decode_message, encode_message
from imads.registry.node import Contact, KademliaNode

DELIVERED = "delivered"
DROPPED_BY_LOSS = "dropped-by-loss"
DROPPED_BY_PARTITION = "dropped-by-partition"


class ConfigError(ValueError):
    """Scenario or simulator configuration is inconsistent."""


@dataclass
class SimConfig:
    seed: int = 0
    node_count: int = 8
    latency_min_ms: float = 5.0
    latency_max_ms: float = 50.0
    loss_rate: float = 0.0
    churn_events: list[dict] = field(default_factory=list)
    k: int = 8
    alpha: int = 3
    iterations: int = 1  # PBKDF2 count for dataset validation inside the sim
    record_ttl_s: float = 24 * 3600.0

    def validate(self) -> None:
        if self.node_count < 1:
            raise ConfigError("node_count must be >= 1")
        if not 0.0 <= self.loss_rate <= 1.0:
            raise ConfigError("loss_rate must be in [0, 1]")
        if self.latency_min_ms > self.latency_max_ms:
            raise ConfigError("latency_min_ms must be <= latency_max_ms")
        times = [e.get("time_ms", 0) for e in self.churn_events]
        if times != sorted(times):
            raise ConfigError("churn_events must be sorted by time_ms")


class SimClock:
    """Virtual clock: time only moves by popping the earliest pending event."""

    def __init__(self):
        self.now_ms = 0.0
        self._queue: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = 0

    def schedule(self, time_ms: float, fn: Callable[[], None]) -> None:
        if time_ms < self.now_ms:
            time_ms = self.now_ms
        heapq.heappush(self._queue, (time_ms, self._seq, fn))
        self._seq += 1

    def advance_to(self, target_ms: float) -> None:
        """Run every event due at or before target, then settle at target."""
        while self._queue and self._queue[0][0] <= target_ms:
            time_ms, _, fn = heapq.heappop(self._queue)
            self.now_ms = max(self.now_ms, time_ms)
            fn()
        self.now_ms = max(self.now_ms, target_ms)

    def run_until_idle(self) -> None:
        while self._queue:
            time_ms, _, fn = heapq.heappop(self._queue)
            self.now_ms = max(self.now_ms, time_ms)
            fn()


@dataclass
class _Slot:
    node: KademliaNode
    alive: bool = True


class SimNetwork:
    """Hosts node_count Kademlia nodes over a simulated lossy network.

    Acts as the nodes' transport. Client operations (store/get/lookup)
    are issued through a gateway node and run synchronously, advancing
    virtual time per message leg; scheduled churn and partition events
    interleave at delivery boundaries.
    """

    def __init__(self, config: SimConfig, build: bool = True):
        config.validate()
        self.config = config
        self.clock = SimClock()
        self.slots: dict[str, _Slot] = {}
        self.order: list[str] = []  # addresses by node index
        self.partition: Optional[dict[str, int]] = None
        self.trace: list[dict] = []
        self.metrics = {
            "messages": {DELIVERED: 0, DROPPED_BY_LOSS: 0, DROPPED_BY_PARTITION: 0},
            "messages_by_type": {},
        }
        self._id_rng = random.Random(config.seed ^ 0x1D5EED)
        self._seen_ids: set[bytes] = set()
        if build:
            self.build()

    # ----- topology -----

    def _fresh_id(self) -> bytes:
        while True:
            node_id = self._id_rng.randbytes(32)
            if node_id not in self._seen_ids:
                self._seen_ids.add(node_id)
                return node_id

    def _make_node(self, index: int) -> KademliaNode:
        address = f"sim://{index}"
        node = KademliaNode(
            self._fresh_id(),
            address,
            transport=self,
            k=self.config.k,
            alpha=self.config.alpha,
            iterations=self.config.iterations,
            record_ttl_s=self.config.record_ttl_s,
            clock=lambda: self.clock.now_ms / 1000.0,
        )
        self.slots[address] = _Slot(node)
        self.order.append(address)
        return node

    def build(self) -> None:
        first = self._make_node(0)
        bootstrap = [Contact(first.node_id, first.address)]
        for i in range(1, self.config.node_count):
            node = self._make_node(i)
            node.join(bootstrap)
        self.refresh_routing()

    def refresh_routing(self) -> None:
        """Bucket refresh: every node looks up one pseudo-random key.

        Spreads knowledge of late joiners into early joiners' tables,
        the same role periodic bucket refreshes play in a long-running
        deployment.
        """
        rng = random.Random(self.config.seed ^ 0x5EF5E5)
        for index in self.alive_indices():
            self.node(index).iterative_find_node(rng.randbytes(32))
        for index in self.alive_indices():
            self.node(index).lookup_rounds.clear()

    def node(self, index: int) -> KademliaNode:
        return self.slots[self.order[index]].node

    def alive_indices(self) -> list[int]:
        return [i for i, addr in enumerate(self.order) if self.slots[addr].alive]

    def crash(self, index: int) -> None:
        """Silent stop: the node vanishes without notifying anyone."""
        self.slots[self.order[index]].alive = False
        self._trace({"event": "crash", "node": index})

    def leave(self, index: int) -> None:
        """Graceful departure: peers drop the node from their buckets."""
        leaving = self.node(index)
        for addr in self.order:
            slot = self.slots[addr]
            if slot.alive and slot.node is not leaving:
                slot.node.table.remove(leaving.node_id)
        self.slots[self.order[index]].alive = False
        self._trace({"event": "leave", "node": index})

    def join_node(self, bootstrap_index: Optional[int] = None) -> int:
        index = len(self.order)
        node = self._make_node(index)
        if bootstrap_index is None:
            alive = [i for i in self.alive_indices() if i != index]
            bootstrap_index = alive[0] if alive else None
        if bootstrap_index is not None:
            peer = self.node(bootstrap_index)
            node.join([Contact(peer.node_id, peer.address)])
        self._trace({"event": "join", "node": index})
        return index

    def revive(self, index: int) -> None:
        self.slots[self.order[index]].alive = True
        self._trace({"event": "revive", "node": index})

    # ----- partitions -----

    def set_partition(self, groups: list[list[int]]) -> None:
        seen: set[int] = set()
        for group in groups:
            overlap = seen & set(group)
            if overlap:
                raise ConfigError(f"overlapping partition groups: {sorted(overlap)}")
            seen |= set(group)
        mapping: dict[str, int] = {}
        for gi, group in enumerate(groups):
            for index in group:
                mapping[self.order[index]] = gi
        # nodes not named fall into one implicit remainder group
        for addr in self.order:
            mapping.setdefault(addr, len(groups))
        self.partition = mapping
        self._trace({"event": "partition", "groups": groups})

    def lift_partition(self) -> None:
        self.partition = None
        self._trace({"event": "lift"})

    # ----- transport -----

    def request(self, sender: KademliaNode, to_address: str, message: dict) -> Optional[dict]:
        frame = encode_message(message)  # enforce wire schema even in-process
        rng = self._message_rng(message["sender_node_id"], message["rpc_id"])
        from_address = sender.address

        if not self._leg(message["type"], from_address, to_address, message["rpc_id"], rng, "request"):
            return None
        slot = self.slots.get(to_address)
        if slot is None or not slot.alive:
            # delivered to a dead endpoint: no response is ever generated
            return None
        response = slot.node.handle_message(decode_message(frame))
        if not self._leg(response["type"], to_address, from_address, message["rpc_id"], rng, "response"):
            return None
        return response

    def _leg(self, mtype: str, src: str, dst: str, rpc_id: int, rng: random.Random, leg: str) -> bool:
        lost = rng.random() < self.config.loss_rate
        latency = rng.uniform(self.config.latency_min_ms, self.config.latency_max_ms)
        if self.partition is not None and self.partition.get(src) != self.partition.get(dst):
            disposition = DROPPED_BY_PARTITION
        elif lost:
            disposition = DROPPED_BY_LOSS
        else:
            disposition = DELIVERED
        self.clock.advance_to(self.clock.now_ms + latency)
        self.metrics["messages"][disposition] += 1
        by_type = self.metrics["messages_by_type"]
        by_type[mtype] = by_type.get(mtype, 0) + 1
        self._trace(
            {
                "event": "message",
                "leg": leg,
                "type": mtype,
                "from": src,
                "to": dst,
                "rpc_id": rpc_id,
                "disposition": disposition,
            }
        )
        return disposition == DELIVERED

    def _message_rng(self, sender_node_id: str, rpc_id: int) -> random.Random:
        material = f"{self.config.seed}|{sender_node_id}|{rpc_id}".encode()
        return random.Random(int.from_bytes(hashlib.sha256(material).digest()[:8], "big"))

    def _trace(self, entry: dict) -> None:
        self.trace.append({"t": round(self.clock.now_ms, 6), **entry})

    # ----- client operations -----

    def client_store(self, key: bytes, signed: SignedDataset, via: int = 0) -> int:
        return self.node(via).dht_store(key, signed)

    def client_get(self, key: bytes, via: int = 0) -> Optional[SignedDataset]:
        return self.node(via).dht_get(key)

    def client_find_node(self, key: bytes, via: int = 0) -> list[Contact]:
        return self.node(via).iterative_find_node(key)

    def replicate_all(self) -> int:
        """One full replication cycle: every alive node republishes its records."""
        total = 0
        for index in self.alive_indices():
            total += self.node(index).republish_all()
        return total

    def replica_holders(self, key: bytes) -> list[int]:
        """Ground truth from storage: which nodes currently hold the key."""
        return [i for i, addr in enumerate(self.order) if key in self.slots[addr].node.store]

    def true_closest(self, key: bytes, count: Optional[int] = None) -> list[bytes]:
        """Global-knowledge oracle: the closest alive node IDs to a key."""
        ids = [self.node(i).node_id for i in self.alive_indices()]
        ids.sort(key=lambda nid: int.from_bytes(nid, "big") ^ int.from_bytes(key, "big"))
        return ids[: count or self.config.k]

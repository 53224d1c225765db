"""Per-provider soft-state directory of live communication endpoints.

Every registered endpoint instance carries a lease; unless refreshed it
becomes disconnected when the lease expires, and is forgotten entirely
after a retention window (two phases, so a status query can distinguish
"known but down" from "never seen"). All time flows through an
injectable clock, which keeps expiry behavior fully deterministic under
test.
"""

from __future__ import annotations

import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Protocol

from imads.errors import NotFoundError

USER_ID_RE = re.compile(r"^user://[^\s/]+/[^\s/]+$")

MIN_TTL_S = 10.0
MAX_TTL_S = 3600.0
DEFAULT_TTL_S = 120.0
DEFAULT_RETENTION_S = 24 * 3600.0

LIVE = "live"
DISCONNECTED = "disconnected"
UNKNOWN = "unknown"


class RegistrationError(ValueError):
    """Registration rejected: bad TTL, malformed userID, or URL conflict."""


@dataclass
class HypertyInstance:
    instance_url: str
    user_id: str
    provider: str
    capabilities: frozenset[str]
    ttl: float
    last_refresh: float
    lease_expiry: float

    def status_at(self, now: float, retention_s: float) -> str:
        if now < self.lease_expiry:
            return LIVE
        if now <= self.lease_expiry + retention_s:
            return DISCONNECTED
        return UNKNOWN

    def to_obj(self, now: float, retention_s: float) -> dict:
        return {
            "url": self.instance_url,
            "userID": self.user_id,
            "media": " ".join(sorted(self.capabilities)).upper(),
            "provider": self.provider,
            "status": self.status_at(now, retention_s),
            "leaseExpiry": self.lease_expiry,
        }


@dataclass
class _Record:
    instance: HypertyInstance
    marked_disconnected: bool = False
    watchers: list[Callable[[str, str], None]] = field(default_factory=list)


class InstanceStore(Protocol):
    """Pluggable storage; the in-memory reference keeps everything in dicts."""

    def get(self, user_id: str, instance_url: str) -> Optional[_Record]: ...

    def put(self, record: _Record) -> None: ...

    def delete(self, user_id: str, instance_url: str) -> None: ...

    def by_user(self, user_id: str) -> list[_Record]: ...

    def all_records(self) -> Iterable[_Record]: ...

    def owner_of(self, instance_url: str) -> Optional[str]: ...


class MemoryInstanceStore:
    def __init__(self):
        self._by_user: dict[str, dict[str, _Record]] = {}
        self._url_owner: dict[str, str] = {}

    def get(self, user_id, instance_url):
        return self._by_user.get(user_id, {}).get(instance_url)

    def put(self, record):
        inst = record.instance
        self._by_user.setdefault(inst.user_id, {})[inst.instance_url] = record
        self._url_owner[inst.instance_url] = inst.user_id

    def delete(self, user_id, instance_url):
        self._by_user.get(user_id, {}).pop(instance_url, None)
        self._url_owner.pop(instance_url, None)

    def by_user(self, user_id):
        return list(self._by_user.get(user_id, {}).values())

    def all_records(self):
        return [r for urls in self._by_user.values() for r in urls.values()]

    def owner_of(self, instance_url):
        return self._url_owner.get(instance_url)


class WatchHandle:
    """One-shot subscription to a disconnected-to-live transition."""

    def __init__(self, registry: "DomainRegistry", user_id: str, instance_url: str,
                 subscriber: Callable[[str, str], None]):
        self._registry = registry
        self.user_id = user_id
        self.instance_url = instance_url
        self._subscriber = subscriber
        self.fired = False

    def cancel(self) -> None:
        self._registry._cancel_watch(self)


class DomainRegistry:
    """Soft-state endpoint directory with linearizable per-instance ops."""

    def __init__(
        self,
        provider: str = "",
        clock: Callable[[], float] = time.time,
        *,
        min_ttl_s: float = MIN_TTL_S,
        max_ttl_s: float = MAX_TTL_S,
        default_ttl_s: float = DEFAULT_TTL_S,
        retention_s: float = DEFAULT_RETENTION_S,
        store: Optional[InstanceStore] = None,
        url_token_source: Optional[Callable[[], str]] = None,
    ):
        self.provider = provider
        self.clock = clock
        self.min_ttl_s = min_ttl_s
        self.max_ttl_s = max_ttl_s
        self.default_ttl_s = default_ttl_s
        self.retention_s = retention_s
        self._store = store or MemoryInstanceStore()
        self._url_token_source = url_token_source or self._random_token
        self._lock = threading.RLock()

    @staticmethod
    def _random_token() -> str:
        import secrets

        return secrets.token_hex(16)

    # ----- registration and leases -----

    def register_instance(
        self,
        user_id: str,
        instance_url: str,
        capabilities: Iterable[str],
        provider: Optional[str] = None,
        ttl: Optional[float] = None,
    ) -> float:
        """Register (or replace) an endpoint instance; returns lease expiry."""
        ttl = self.default_ttl_s if ttl is None else float(ttl)
        if not self.min_ttl_s <= ttl <= self.max_ttl_s:
            raise RegistrationError(
                f"ttl {ttl} outside [{self.min_ttl_s}, {self.max_ttl_s}]"
            )
        if not USER_ID_RE.match(user_id):
            raise RegistrationError(f"malformed userID: {user_id!r}")
        to_notify: list[Callable] = []
        with self._lock:
            owner = self._store.owner_of(instance_url)
            if owner is not None and owner != user_id:
                raise RegistrationError(f"instance URL already registered to another user")
            now = self.clock()
            existing = self._store.get(user_id, instance_url)
            instance = HypertyInstance(
                instance_url=instance_url,
                user_id=user_id,
                provider=provider or self.provider,
                capabilities=frozenset(capabilities),
                ttl=ttl,
                last_refresh=now,
                lease_expiry=now + ttl,
            )
            if existing is not None:
                was_down = existing.instance.status_at(now, self.retention_s) != LIVE
                existing.instance = instance
                existing.marked_disconnected = False
                if was_down:
                    to_notify = existing.watchers[:]
                    existing.watchers.clear()
            else:
                self._store.put(_Record(instance))
        self._notify(to_notify, user_id, instance_url)
        return instance.lease_expiry

    def refresh_instance(self, user_id: str, instance_url: str) -> float:
        """Extend the lease by the instance's original TTL from now.

        A refresh of an expired (disconnected) instance brings it back
        live and fires pending come-back-online notifications.
        """
        with self._lock:
            record = self._store.get(user_id, instance_url)
            now = self.clock()
            if record is None or record.instance.status_at(now, self.retention_s) == UNKNOWN:
                if record is not None:
                    self._store.delete(user_id, instance_url)
                raise NotFoundError(f"unknown instance {instance_url!r}")
            was_down = record.instance.status_at(now, self.retention_s) != LIVE
            record.instance.last_refresh = now
            record.instance.lease_expiry = now + record.instance.ttl
            record.marked_disconnected = False
            to_notify = record.watchers[:] if was_down else []
            if was_down:
                record.watchers.clear()
        self._notify(to_notify, user_id, instance_url)
        return now + record.instance.ttl

    def _notify(self, subscribers: list[Callable], user_id: str, instance_url: str) -> None:
        # delivered after the state transition committed, outside the lock
        for subscriber in subscribers:
            subscriber(user_id, instance_url)

    # ----- queries -----

    def query_user(
        self,
        user_id: str,
        capability_filter: Optional[Iterable[str]] = None,
        include_disconnected: bool = False,
    ) -> list[HypertyInstance]:
        wanted = frozenset(capability_filter) if capability_filter else frozenset()
        with self._lock:
            now = self.clock()
            out = []
            for record in self._store.by_user(user_id):
                status = record.instance.status_at(now, self.retention_s)
                if status == UNKNOWN:
                    continue
                if status != LIVE and not include_disconnected:
                    continue
                if not wanted <= record.instance.capabilities:
                    continue
                out.append(record.instance)
            return sorted(out, key=lambda i: i.instance_url)

    def instance_status(self, user_id: str, instance_url: str) -> str:
        with self._lock:
            record = self._store.get(user_id, instance_url)
            if record is None:
                return UNKNOWN
            return record.instance.status_at(self.clock(), self.retention_s)

    # ----- expiry -----

    def expire_sweep(self, now: Optional[float] = None) -> int:
        """Mark expired leases disconnected; drop those past retention.

        Returns the number of live-to-disconnected transitions.
        """
        transitions = 0
        with self._lock:
            now = self.clock() if now is None else now
            for record in list(self._store.all_records()):
                inst = record.instance
                status = inst.status_at(now, self.retention_s)
                if status == UNKNOWN:
                    self._store.delete(inst.user_id, inst.instance_url)
                elif status == DISCONNECTED and not record.marked_disconnected:
                    record.marked_disconnected = True
                    transitions += 1
        return transitions

    # ----- notifications -----

    def watch_instance(
        self, user_id: str, instance_url: str, subscriber: Callable[[str, str], None]
    ) -> WatchHandle:
        """Subscribe to the instance's next disconnected-to-live transition.

        The subscriber is called exactly once, then the subscription
        completes. Unknown instances cannot be watched.
        """
        with self._lock:
            record = self._store.get(user_id, instance_url)
            if record is None or record.instance.status_at(self.clock(), self.retention_s) == UNKNOWN:
                raise NotFoundError(f"unknown instance {instance_url!r}")
            handle = WatchHandle(self, user_id, instance_url, subscriber)

            def once(uid, url, handle=handle):
                if not handle.fired:
                    handle.fired = True
                    subscriber(uid, url)

            handle._once = once
            record.watchers.append(once)
        return handle

    def _cancel_watch(self, handle: WatchHandle) -> None:
        with self._lock:
            record = self._store.get(handle.user_id, handle.instance_url)
            if record is not None and handle._once in record.watchers:
                record.watchers.remove(handle._once)

    # ----- endpoint URL rotation -----

    def rotate_instances(
        self, user_id: Optional[str] = None, url_factory: Optional[Callable[[HypertyInstance], str]] = None
    ) -> dict[str, str]:
        """Re-register instances under fresh URLs; old URLs become unknown.

        Cached old URLs can never be used to find the instance again: the
        old record is removed outright rather than merely expired.
        """
        factory = url_factory or (
            lambda inst: f"hyperty://{inst.provider or 'local'}/{self._url_token_source()}"
        )
        mapping: dict[str, str] = {}
        with self._lock:
            now = self.clock()
            records = (
                self._store.by_user(user_id) if user_id is not None else list(self._store.all_records())
            )
            for record in records:
                old = record.instance
                if old.status_at(now, self.retention_s) == UNKNOWN:
                    continue
                new_url = factory(old)
                fresh = HypertyInstance(
                    instance_url=new_url,
                    user_id=old.user_id,
                    provider=old.provider,
                    capabilities=old.capabilities,
                    ttl=old.ttl,
                    last_refresh=now,
                    lease_expiry=now + old.ttl,
                )
                self._store.delete(old.user_id, old.instance_url)
                self._store.put(_Record(fresh))
                mapping[old.instance_url] = new_url
        return mapping

"""Profile store and search engine with per-profile visibility policies.

Users publish profiles (headline, description, hashtags, contacts,
optional GUID link); search matches query tokens against an inverted
index and filters results by the owner's chosen visibility: public,
registered users only, or favorites only. Publication and removal take
effect immediately; there is no crawl or cache window.
"""

from __future__ import annotations

import itertools
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

from imads.encoding import is_guid
from imads.errors import NotFoundError

PUBLIC = "public"
IMADS_USERS = "imads_users"
FAVORITES = "favorites"
VISIBILITY_LEVELS = {PUBLIC, IMADS_USERS, FAVORITES}

HASHTAG_RE = re.compile(r"^#\S+$")
_TOKEN_RE = re.compile(r"#[^\s#]+|[^\s#]+")
_STRIP = ".,;:!?()[]{}\"'"

RESPONSE_OK = 201
RESPONSE_EMPTY = 404


class DiscoveryError(ValueError):
    pass


class ForbiddenError(DiscoveryError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; '#'-prefixed tokens survive as hashtags."""
    tokens = []
    for raw in _TOKEN_RE.findall(text.lower()):
        token = raw.strip(_STRIP)
        if token and token != "#":
            tokens.append(token)
    return tokens


@dataclass
class Profile:
    owner_account: str
    headline: str = ""
    description: str = ""
    hashtags: list[str] = field(default_factory=list)
    contacts: list[str] = field(default_factory=list)
    guid: Optional[str] = None
    visibility: str = PUBLIC
    favorites: set[str] = field(default_factory=set)
    profile_id: str = ""
    published_at: float = 0.0

    def validate(self) -> None:
        if self.visibility not in VISIBILITY_LEVELS:
            raise DiscoveryError(f"unknown visibility: {self.visibility!r}")
        if self.guid is not None and not is_guid(self.guid):
            raise DiscoveryError(f"malformed GUID: {self.guid!r}")
        for tag in self.hashtags:
            if not HASHTAG_RE.match(tag):
                raise DiscoveryError(f"bad hashtag: {tag!r}")

    def index_text(self) -> str:
        return " ".join([self.headline, self.description, *self.hashtags, *self.contacts])


@dataclass
class QueryContext:
    requester: Optional[str]  # None means anonymous
    raw_query: str
    resolve_live: bool = False


class DiscoveryEngine:
    """Single discovery instance: profiles, index, visibility, search."""

    def __init__(
        self,
        instance_id: str = "discovery1",
        clock: Callable[[], float] = time.time,
        live_resolver: Optional[Callable[[str], list[dict]]] = None,
    ):
        self.instance_id = instance_id
        self.clock = clock
        self.live_resolver = live_resolver
        self.accounts: set[str] = set()
        self._profiles: dict[str, Profile] = {}
        self._index: dict[str, set[str]] = {}
        self._counts: dict[str, Counter] = {}
        self._ids = itertools.count(1)
        self._lock = threading.RLock()

    # ----- accounts -----

    def create_account(self, account: str) -> str:
        with self._lock:
            self.accounts.add(account)
        return account

    def is_known_account(self, requester: Optional[str]) -> bool:
        return requester is not None and requester in self.accounts

    # ----- publication -----

    def publish_profile(self, account: str, profile: Profile) -> str:
        """Index a profile immediately; returns the new profile id."""
        if account not in self.accounts:
            raise ForbiddenError(f"unknown account: {account!r}")
        profile.owner_account = account
        profile.validate()
        tokens = tokenize(profile.index_text())
        if not tokens:
            raise DiscoveryError("profile has no indexable content")
        with self._lock:
            profile.profile_id = f"p{next(self._ids)}"
            profile.published_at = self.clock()
            self._profiles[profile.profile_id] = profile
            counts = Counter(tokens)
            self._counts[profile.profile_id] = counts
            for token in counts:
                self._index.setdefault(token, set()).add(profile.profile_id)
        return profile.profile_id

    def unpublish_profile(self, account: str, profile_id: str) -> None:
        """Remove a profile from all future results, with no cache window."""
        with self._lock:
            profile = self._profiles.get(profile_id)
            if profile is None:
                raise NotFoundError(f"no profile {profile_id!r}")
            if profile.owner_account != account:
                raise ForbiddenError("not the profile owner")
            del self._profiles[profile_id]
            for token in self._counts.pop(profile_id, ()):
                bucket = self._index.get(token)
                if bucket is not None:
                    bucket.discard(profile_id)
                    if not bucket:
                        del self._index[token]

    def set_visibility(
        self, account: str, profile_id: str, visibility: str, favorites: Optional[set[str]] = None
    ) -> None:
        with self._lock:
            profile = self._profiles.get(profile_id)
            if profile is None:
                raise NotFoundError(f"no profile {profile_id!r}")
            if profile.owner_account != account:
                raise ForbiddenError("not the profile owner")
            if visibility not in VISIBILITY_LEVELS:
                raise DiscoveryError(f"unknown visibility: {visibility!r}")
            profile.visibility = visibility
            if favorites is not None:
                profile.favorites = set(favorites)

    # ----- search -----

    def visibility_allows(self, profile: Profile, requester: Optional[str]) -> bool:
        if profile.visibility == PUBLIC:
            return True
        if profile.visibility == IMADS_USERS:
            return self.is_known_account(requester)
        return requester is not None and requester in profile.favorites

    def search(self, ctx: QueryContext) -> dict:
        """Token-match search filtered by visibility.

        Response mirrors the service's wire format: ``instanceID``,
        ``responseCode`` (201 with hits, 404 without), ``searchString``
        (the leading query term), and ranked ``results``.
        """
        query = ctx.raw_query.strip()
        if not query:
            raise DiscoveryError("empty search query")
        tokens = tokenize(query)
        with self._lock:
            candidates: set[str] = set()
            for token in tokens:
                candidates |= self._index.get(token, set())
            scored = []
            for pid in candidates:
                profile = self._profiles[pid]
                if not self.visibility_allows(profile, ctx.requester):
                    continue
                counts = self._counts[pid]
                matched = [t for t in tokens if counts.get(t)]
                score = (
                    len(set(matched)),
                    sum(counts[t] for t in set(matched)),
                    profile.published_at,
                )
                scored.append((score, pid, profile))
            scored.sort(key=lambda item: (item[0], item[1]), reverse=True)
            results = [
                self._result_obj(no, profile, ctx)
                for no, (_, _, profile) in enumerate(scored)
            ]
        return {
            "instanceID": self.instance_id,
            "responseCode": RESPONSE_OK if results else RESPONSE_EMPTY,
            "searchString": query.split()[0],
            "results": results,
        }

    def _result_obj(self, result_no: int, profile: Profile, ctx: QueryContext) -> dict:
        obj = {
            "resultNo": result_no,
            "hashtags": " ".join(profile.hashtags),
            "description": profile.description,
            "headline": profile.headline,
            "contacts": ", ".join(profile.contacts),
            "hasGUID": "true" if profile.guid else "false",
        }
        if profile.guid:
            obj["GUID"] = profile.guid
        if ctx.resolve_live and profile.guid and self.live_resolver is not None:
            obj["hyperties"] = self.live_resolver(profile.guid)
        return obj

    # ----- endpoint URL rotation -----

    def rotate_endpoint_urls(self, registry_hook, policy: dict) -> dict[str, str]:
        """Coordinate a URL rotation with a domain registry.

        ``policy`` is ``{"mode": "on_restart"}`` or ``{"mode": "period",
        "seconds": n}``; a periodic policy shorter than the registry's
        minimum lease TTL is rejected. Returns the old-to-new URL map;
        rotated-away URLs immediately become unknown in the registry.
        """
        mode = policy.get("mode")
        if mode == "period":
            period = float(policy.get("seconds", 0))
            if period < registry_hook.min_ttl_s:
                raise DiscoveryError(
                    f"rotation period {period}s below minimum lease ttl {registry_hook.min_ttl_s}s"
                )
        elif mode != "on_restart":
            raise DiscoveryError(f"unknown rotation policy: {mode!r}")
        return registry_hook.rotate_instances(user_id=policy.get("user_id"))

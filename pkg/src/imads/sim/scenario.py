"""Scenario files: JSON-driven simulator runs with traces and metrics.

A scenario is ``{"config": {...}, "workload": [...]}``. Workload actions
are timed client operations executed through a gateway node; churn and
partition events live in ``config.churn_events``. Identities used by the
workload are generated deterministically from the scenario seed and the
identity's name, so repeated runs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from typing import Optional

from imads.dataset import GlobalDataset, UserIdEntry, sign_dataset
from imads.encoding import b64url_decode
from imads.identity import generate_identity
from imads.sim.core import ConfigError, SimConfig, SimNetwork

_CHURN_ACTIONS = {"join", "leave", "crash", "revive", "partition", "lift"}
_WORKLOAD_ACTIONS = {"put_identity", "get", "replicate"}


def load_scenario(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        scenario = json.load(fh)
    if "config" not in scenario:
        raise ConfigError("scenario must have a 'config' object")
    scenario.setdefault("workload", [])
    return scenario


def inject_partition(scenario: dict, addendum: dict) -> dict:
    """Add a partition (and optional lift) event to a scenario.

    ``addendum`` is ``{"time_ms": t, "groups": [[...], ...]}`` with an
    optional ``lift_ms``. Groups must not overlap; nodes left out form
    one implicit remainder group.
    """
    groups = addendum["groups"]
    seen: set[int] = set()
    for group in groups:
        overlap = seen & set(group)
        if overlap:
            raise ConfigError(f"overlapping partition groups: {sorted(overlap)}")
        seen |= set(group)
    updated = json.loads(json.dumps(scenario))  # deep copy, keeps it JSON-pure
    events = updated["config"].setdefault("churn_events", [])
    events.append({"time_ms": addendum["time_ms"], "action": "partition", "groups": groups})
    if "lift_ms" in addendum:
        events.append({"time_ms": addendum["lift_ms"], "action": "lift"})
    events.sort(key=lambda e: e.get("time_ms", 0))
    return updated


class _WorkloadIdentities:
    """Deterministic per-name identities with monotonically bumped versions."""

    def __init__(self, seed: int, iterations: int):
        self.seed = seed
        self.iterations = iterations
        self.versions: dict[str, int] = {}
        self._cache: dict[str, object] = {}

    def identity(self, name: str):
        if name not in self._cache:
            material = hashlib.sha256(f"{self.seed}|{name}".encode()).digest()
            self._cache[name] = generate_identity(
                int.from_bytes(material[:8], "big"), iterations=self.iterations
            )
        return self._cache[name]

    def next_dataset(self, name: str, user_ids: Optional[list[dict]] = None) -> GlobalDataset:
        ident = self.identity(name)
        version = self.versions.get(name, 0) + 1
        self.versions[name] = version
        entries = [
            UserIdEntry(e["userID"], e["domainRegistry"])
            for e in (user_ids or [{"userID": f"user://example.org/{name}", "domainRegistry": "https://dr.example.org"}])
        ]
        return GlobalDataset(
            guid=ident.guid,
            public_key=ident.public_key,
            salt=ident.salt,
            user_ids=entries,
            version=version,
            issued_at=version,
        )


def run_scenario(config, workload: list[dict]) -> dict:
    """Execute a workload against a fresh simulated network.

    Returns ``{"trace": [...], "metrics": {...}}``. The trace is a list
    of JSON-serializable events; metrics summarize message dispositions,
    per-lookup round counts, workload outcomes, and final replica counts.
    """
    if isinstance(config, dict):
        config = SimConfig(**config)
    times = [a.get("time_ms", 0) for a in workload]
    if times != sorted(times):
        raise ConfigError("workload must be sorted by time_ms")
    for action in workload:
        if action.get("action") not in _WORKLOAD_ACTIONS:
            raise ConfigError(f"unknown workload action: {action.get('action')!r}")
    for event in config.churn_events:
        if event.get("action") not in _CHURN_ACTIONS:
            raise ConfigError(f"unknown churn action: {event.get('action')!r}")

    net = SimNetwork(config)
    identities = _WorkloadIdentities(config.seed, config.iterations)
    # scenario times are relative to the end of network bootstrap, which
    # itself consumes virtual time
    t0 = net.clock.now_ms
    for event in config.churn_events:
        net.clock.schedule(t0 + event.get("time_ms", 0), _churn_fn(net, event))

    outcomes: list[dict] = []
    stored_keys: dict[str, bytes] = {}
    for action in workload:
        net.clock.advance_to(t0 + action.get("time_ms", 0))
        outcomes.append(_run_action(net, identities, stored_keys, action))
    net.clock.run_until_idle()

    lookup_rounds = [r for i in range(len(net.order)) for r in net.node(i).lookup_rounds]
    replicas = {name: len(net.replica_holders(key)) for name, key in stored_keys.items()}
    return {
        "trace": net.trace,
        "metrics": {
            "messages": net.metrics["messages"],
            "messages_by_type": net.metrics["messages_by_type"],
            "lookup_rounds": lookup_rounds,
            "workload": outcomes,
            "replicas": replicas,
        },
    }


def _churn_fn(net: SimNetwork, event: dict):
    action = event["action"]

    def fire():
        if action == "crash":
            net.crash(event["node_index"])
        elif action == "leave":
            net.leave(event["node_index"])
        elif action == "revive":
            net.revive(event["node_index"])
        elif action == "join":
            net.join_node(event.get("bootstrap_index"))
        elif action == "partition":
            net.set_partition(event["groups"])
        elif action == "lift":
            net.lift_partition()

    return fire


def _run_action(net: SimNetwork, identities: _WorkloadIdentities, stored_keys: dict, action: dict) -> dict:
    kind = action["action"]
    via = action.get("via", 0)
    out = {"time_ms": action.get("time_ms", 0), "action": kind}
    if kind == "put_identity":
        name = action["name"]
        dataset = identities.next_dataset(name, action.get("user_ids"))
        signed = sign_dataset(dataset, identities.identity(name).private_key, iterations=identities.iterations)
        key = b64url_decode(dataset.guid)
        stored_keys[name] = key
        out.update(name=name, version=dataset.version, replicas_acked=net.client_store(key, signed, via=via))
    elif kind == "get":
        name = action["name"]
        key = stored_keys.get(name) or b64url_decode(identities.identity(name).guid)
        try:
            result = net.client_get(key, via=via)
        except Exception as exc:  # integrity failures are an outcome, not a crash
            out.update(name=name, found=False, error=type(exc).__name__)
        else:
            out.update(name=name, found=result is not None)
            if result is not None:
                out["version"] = result.payload().version
    elif kind == "replicate":
        out["republished"] = net.replicate_all()
    return out

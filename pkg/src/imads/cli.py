"""Command-line interface: identity management, search, resolution, and
local service hosting for the discovery/global-registry/domain-registry
stack."""

from __future__ import annotations

import json
import random
import sys

import click

from imads.client import ImadsClient, load_config, load_identity
from imads.dataset import UserIdEntry
from imads.errors import ImadsError


@click.group()
@click.option("--config", "config_path", default=None, help="Config file (default: $IMADS_CONFIG).")
@click.pass_context
def main(ctx, config_path):
    """IMaDS client: map user identities to live communication endpoints."""
    ctx.obj = load_config(config_path)


def _client(ctx) -> ImadsClient:
    return ImadsClient(ctx.obj)


def _fail(exc: Exception) -> None:
    raise click.ClickException(f"{type(exc).__name__}: {exc}")


# ----- identity -----

@main.group()
def identity():
    """Create, publish, and inspect the local GUID identity."""


@identity.command("new")
@click.option("--seed", type=int, default=None, help="Deterministic seed (testing only).")
@click.option("--file", "path", default=None, help="Identity file path (default from config).")
@click.option("--user-id", "user_ids", multiple=True, help="userID (repeatable, pairs with --domain-registry).")
@click.option("--domain-registry", "registries", multiple=True, help="Domain registry URL for the matching --user-id.")
@click.pass_context
def identity_new(ctx, seed, path, user_ids, registries):
    """Generate a key pair and GUID, publish version 1, and persist it."""
    if len(user_ids) != len(registries) or not user_ids:
        raise click.UsageError("provide matching --user-id/--domain-registry pairs (at least one)")
    entries = [UserIdEntry(u, r) for u, r in zip(user_ids, registries)]
    entropy = random.Random(seed) if seed is not None else None
    try:
        ident = _client(ctx).create_and_publish_identity(entries, path=path, entropy=entropy)
    except ImadsError as exc:
        _fail(exc)
    click.echo(ident.guid)


@identity.command("publish")
@click.option("--file", "path", default=None)
@click.option("--user-id", "user_ids", multiple=True)
@click.option("--domain-registry", "registries", multiple=True)
@click.pass_context
def identity_publish(ctx, path, user_ids, registries):
    """Re-sign the stored identity at the next version and publish it."""
    if len(user_ids) != len(registries):
        raise click.UsageError("--user-id and --domain-registry must pair up")
    entries = [UserIdEntry(u, r) for u, r in zip(user_ids, registries)]
    try:
        ack = _client(ctx).publish_identity(path, add_user_ids=entries or None)
    except ImadsError as exc:
        _fail(exc)
    click.echo(json.dumps(ack))


@identity.command("show")
@click.option("--file", "path", default=None)
@click.pass_context
def identity_show(ctx, path):
    """Print the stored identity (public parts only)."""
    try:
        stored = load_identity(path or ctx.obj.identity_path())
    except ImadsError as exc:
        _fail(exc)
    click.echo(
        json.dumps(
            {
                "guid": stored.identity.guid,
                "version": stored.version,
                "userIDs": [e.to_obj() for e in stored.user_ids],
            },
            indent=2,
        )
    )


# ----- search / resolve -----

@main.command()
@click.argument("terms", nargs=-1, required=True)
@click.pass_context
def search(ctx, terms):
    """Query the discovery service and print the raw response."""
    try:
        response = _client(ctx).search(" ".join(terms))
    except ImadsError as exc:
        _fail(exc)
    click.echo(json.dumps(response, indent=2))


@main.command()
@click.argument("query", nargs=-1, required=True)
@click.option("--cap", default=None, help="Capability filter, e.g. video.")
@click.option("--pick", default=0, show_default=True, help="Search-result index to resolve.")
@click.option("--json", "as_json", is_flag=True, help="Emit machine-readable ContactSheet.")
@click.pass_context
def resolve(ctx, query, cap, pick, as_json):
    """Resolve free text or a GUID to live endpoints."""
    try:
        sheet = _client(ctx).resolve(" ".join(query), capability=cap, pick=pick)
    except ImadsError as exc:
        _fail(exc)
    if as_json:
        click.echo(json.dumps(sheet.to_obj(), indent=2))
        return
    click.echo(f"GUID: {sheet.guid}")
    for entry in sheet.entries:
        click.echo(f"{entry.user_id}  via {entry.domain_registry_url}")
        if entry.error:
            click.echo(f"  ! {entry.error}")
        for inst in entry.instances:
            click.echo(f"  {inst['status']:<13} {inst['media']:<12} {inst['url']}")
        if not entry.error and not entry.instances:
            click.echo("  (no matching instances)")


# ----- local services -----

@main.group()
def serve():
    """Run one of the IMaDS services locally."""


def _run(app, host, port):
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")


@serve.command("domain-registry")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=4602, show_default=True)
@click.option("--provider", default="", help="Provider name reported in instance records.")
def serve_domain_registry(host, port, provider):
    from imads.domain import DomainRegistry, create_domain_registry_app

    _run(create_domain_registry_app(DomainRegistry(provider=provider)), host, port)


@serve.command("global-registry")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=4601, show_default=True)
@click.option("--nodes", default=8, show_default=True, help="Local DHT nodes to run.")
@click.option("--dht-seed", default=None, type=int, help="Deterministic node IDs (testing only).")
def serve_global_registry(host, port, nodes, dht_seed):
    """Serve the HTTP facade over a local multi-node DHT."""
    from imads.registry.node import Contact, KademliaNode
    from imads.registry.service import DhtNodeBackend, GlobalRegistryFacade, create_global_registry_app
    from imads.registry.transport import NodeServer, TcpTransport

    rng = random.Random(dht_seed)
    transport = TcpTransport()
    dht_nodes, servers = [], []
    for _ in range(nodes):
        node = KademliaNode(rng.randbytes(32), "", transport=transport)
        servers.append(NodeServer(node).start())
        dht_nodes.append(node)
    bootstrap = [Contact(dht_nodes[0].node_id, dht_nodes[0].address)]
    for node in dht_nodes[1:]:
        node.join(bootstrap)
    facade = GlobalRegistryFacade(DhtNodeBackend(dht_nodes[0]))
    try:
        _run(create_global_registry_app(facade), host, port)
    finally:
        for server in servers:
            server.stop()


@serve.command("discovery")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=4600, show_default=True)
@click.option("--instance-id", default="discovery1", show_default=True)
@click.option("--account", "accounts", multiple=True, help="token=account pair (repeatable).")
def serve_discovery(host, port, instance_id, accounts):
    from imads.discovery import DiscoveryEngine, create_discovery_app

    engine = DiscoveryEngine(instance_id=instance_id)
    tokens = {}
    for pair in accounts:
        token, _, account = pair.partition("=")
        if not token or not account:
            raise click.UsageError(f"--account must be token=account, got {pair!r}")
        tokens[token] = engine.create_account(account)
    _run(create_discovery_app(engine, tokens), host, port)


# ----- simulation -----

@main.command()
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--trace", is_flag=True, help="Include the full event trace in the output.")
def sim(scenario_file, trace):
    """Run a deterministic network-simulator scenario and print metrics."""
    from imads.sim.scenario import load_scenario, run_scenario

    try:
        scenario = load_scenario(scenario_file)
        result = run_scenario(scenario["config"], scenario["workload"])
    except (ImadsError, ValueError, KeyError) as exc:
        _fail(exc)
    output = result if trace else {"metrics": result["metrics"]}
    click.echo(json.dumps(output, indent=2))


if __name__ == "__main__":
    sys.exit(main())

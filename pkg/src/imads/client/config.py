"""Client configuration: service endpoints and identity-file location.

The config file is JSON; its path comes from an explicit argument or the
``IMADS_CONFIG`` environment variable, falling back to built-in defaults
when neither is set.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from typing import Optional

from imads.errors import ImadsError

ENV_VAR = "IMADS_CONFIG"


class ClientConfigError(ImadsError):
    """Config file missing, unreadable, or containing unknown keys."""


@dataclass
class ClientConfig:
    discovery_url: str = "http://127.0.0.1:4600"
    global_registry_url: str = "http://127.0.0.1:4601"
    identity_file: str = "~/.imads/identity.json"
    bootstrap_peers: list[str] = field(default_factory=list)
    discovery_token: Optional[str] = None

    def identity_path(self) -> str:
        return os.path.expanduser(self.identity_file)


def load_config(path: Optional[str] = None) -> ClientConfig:
    """Load config from ``path``, else ``$IMADS_CONFIG``, else defaults."""
    path = path or os.environ.get(ENV_VAR)
    if path is None:
        return ClientConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ClientConfigError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ClientConfigError("config must be a JSON object")
    known = {f.name for f in fields(ClientConfig)}
    unknown = set(obj) - known
    if unknown:
        raise ClientConfigError(f"unknown config keys: {sorted(unknown)}")
    return ClientConfig(**obj)

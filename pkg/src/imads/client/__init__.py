from imads.client.config import ClientConfig, ClientConfigError, load_config
from imads.client.identity_store import (
    IdentityFileError,
    StoredIdentity,
    load_identity,
    save_identity,
)
from imads.client.pipeline import ClientError, ContactEntry, ContactSheet, ImadsClient

__all__ = [
    "ClientConfig",
    "ClientConfigError",
    "ClientError",
    "ContactEntry",
    "ContactSheet",
    "IdentityFileError",
    "ImadsClient",
    "StoredIdentity",
    "load_config",
    "load_identity",
    "save_identity",
]

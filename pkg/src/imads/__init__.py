"""Identity mapping and discovery stack.

Self-asserted global user identifiers (GUIDs) derived from ECDSA keys,
a Kademlia-backed global registry storing signed identity datasets,
per-provider soft-state domain registries of live communication
endpoints, and a privacy-aware discovery search service, plus a client
pipeline chaining all three.
"""

from imads.identity import GuidIdentity, derive_guid, generate_identity
from imads.dataset import GlobalDataset, SignedDataset, sign_dataset, verify_dataset

__all__ = [
    "GuidIdentity",
    "derive_guid",
    "generate_identity",
    "GlobalDataset",
    "SignedDataset",
    "sign_dataset",
    "verify_dataset",
]

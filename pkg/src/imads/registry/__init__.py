from imads.registry.node import Contact, KademliaNode, RoutingTable, xor_distance
from imads.registry.service import (
    DhtNodeBackend,
    GlobalRegistryFacade,
    create_global_registry_app,
)

__all__ = [
    "Contact",
    "KademliaNode",
    "RoutingTable",
    "xor_distance",
    "DhtNodeBackend",
    "GlobalRegistryFacade",
    "create_global_registry_app",
]

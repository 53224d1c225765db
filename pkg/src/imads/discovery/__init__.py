from imads.discovery.engine import (
    DiscoveryEngine,
    DiscoveryError,
    ForbiddenError,
    Profile,
    QueryContext,
    tokenize,
)
from imads.discovery.service import create_discovery_app

__all__ = [
    "DiscoveryEngine",
    "DiscoveryError",
    "ForbiddenError",
    "Profile",
    "QueryContext",
    "tokenize",
    "create_discovery_app",
]

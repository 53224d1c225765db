from imads.domain.registry import (
    DomainRegistry,
    HypertyInstance,
    RegistrationError,
    WatchHandle,
)
from imads.domain.service import create_domain_registry_app

__all__ = [
    "DomainRegistry",
    "HypertyInstance",
    "RegistrationError",
    "WatchHandle",
    "create_domain_registry_app",
]

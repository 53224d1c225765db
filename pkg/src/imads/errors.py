"""Exception hierarchy for identity and registry operations."""


class ImadsError(Exception):
    """Base class for all errors raised by this package."""


class GenerationError(ImadsError):
    """Entropy source could not supply enough bytes for key generation."""


class InvalidKeyError(ImadsError):
    """Public key bytes are malformed."""


class InvalidSaltError(ImadsError):
    """Salt does not have the configured fixed length."""


class SigningError(ImadsError):
    """Private key does not match the dataset being signed."""


class DatasetParseError(ImadsError):
    """JWT or dataset payload is structurally malformed."""


class SignatureInvalidError(ImadsError):
    """JWT signature does not verify under the embedded public key."""


class GuidBindingError(ImadsError):
    """Dataset GUID does not equal the derivation of its own key and salt.

    Raised when a dataset claims a GUID that its embedded key material
    cannot produce: the deflected-takeover case.
    """


class VersionConflictError(ImadsError):
    """Incoming dataset version is not strictly greater than the stored one."""


class IntegrityError(ImadsError):
    """All located replicas of a record failed verification."""


class NotFoundError(ImadsError):
    """Requested record does not exist."""


class MalformedGuidError(ImadsError):
    """GUID string fails the syntactic 43-char Base64URL check."""

import random

import pytest

from imads.encoding import b64url_decode
from imads.errors import GenerationError, InvalidKeyError, InvalidSaltError
from imads.identity import SALT_BYTES, derive_guid, generate_identity

# Expected outputs frozen from a hand-written RFC 2898 HMAC-loop oracle
# (see oracle_pbkdf2 below), computed before derive_guid existed.
PBKDF2_VECTORS = [
    (bytes(32), bytes(16), 1, "yMLvk2JPU_dGrVZkRB-eBPHd5shPjwoGaJ2fTvYewb0"),
    (b"\x04" + bytes(64), bytes(16), 1, "ChmXpW_y2Nfv9Ywk3IpVYYuKTQE4-IJAjBW1d9IZ2q8"),
    (bytes.fromhex("0102030405060708090a0b0c0d0e0f10"), b"saltsaltsaltsalt", 1,
     "RUIA5V7334wUfK8D_Gt8UbCn8Gk2T7GNooQKamaWyqM"),
    (b"another-public-key-material-under-test", bytes(range(16)), 2,
     "oT3eDJ36-8s7A9iSptEljMFlJZbHCTV49LGPLy89NzY"),
    (b"\xffpk\xff" * 8, b"\xab" * 16, 10, "Ppxq4PRqA_2s8XbFRaxd711PuPMpnVtCh7cbfz7Td60"),
    (b"interop-check", b"0123456789abcdef", 1, "2wZ-6Xw-czPEopwm-8OxBGj_NJ9b7eldK2nmGMxWfOU"),
]


def oracle_pbkdf2(password: bytes, salt: bytes, iterations: int, dklen: int = 32) -> bytes:
    """Independent PBKDF2-HMAC-SHA256: plain RFC 2898 loop over hmac."""
    import hashlib
    import hmac

    out = b""
    block = 1
    while len(out) < dklen:
        u = hmac.new(password, salt + block.to_bytes(4, "big"), hashlib.sha256).digest()
        t = int.from_bytes(u, "big")
        for _ in range(iterations - 1):
            u = hmac.new(password, u, hashlib.sha256).digest()
            t ^= int.from_bytes(u, "big")
        out += t.to_bytes(32, "big")
        block += 1
    return out[:dklen]


@pytest.mark.parametrize("password,salt,iterations,expected", PBKDF2_VECTORS)
def test_derive_guid_matches_frozen_oracle(password, salt, iterations, expected):
    assert derive_guid(password, salt, iterations) == expected
    # and the frozen value itself agrees with the in-test oracle
    import base64

    assert base64.urlsafe_b64encode(oracle_pbkdf2(password, salt, iterations)).rstrip(b"=").decode() == expected


def test_derive_guid_is_pure():
    pk, salt = b"some-public-key", bytes(16)
    assert derive_guid(pk, salt, 3) == derive_guid(pk, salt, 3)


def test_derive_guid_shape():
    guid = derive_guid(b"\x04" + bytes(64), bytes(16), 1)
    assert len(guid) == 43
    assert len(b64url_decode(guid)) == 32


def test_derive_guid_rejects_bad_salt():
    with pytest.raises(InvalidSaltError):
        derive_guid(b"pk", bytes(15), 1)
    with pytest.raises(InvalidSaltError):
        derive_guid(b"pk", bytes(17), 1)


def test_derive_guid_rejects_empty_key():
    with pytest.raises(InvalidKeyError):
        derive_guid(b"", bytes(16), 1)


def test_generate_identity_deterministic_under_seed():
    a = generate_identity(1, iterations=1)
    b = generate_identity(1, iterations=1)
    assert a.guid == b.guid
    assert a.salt == b.salt
    assert a.public_key == b.public_key


def test_generate_identity_guid_binding():
    ident = generate_identity(7, iterations=1)
    assert ident.guid == derive_guid(ident.public_key, ident.salt, 1)
    assert len(ident.salt) == SALT_BYTES
    assert ident.public_key[0] == 0x04 and len(ident.public_key) == 65


def test_distinct_seeds_distinct_guids():
    guids = {generate_identity(seed, iterations=1).guid for seed in range(1000)}
    assert len(guids) == 1000


def test_distinct_keys_same_salt_distinct_guids():
    salt = bytes(16)
    rng = random.Random(42)
    guids = {derive_guid(rng.randbytes(65), salt, 1) for _ in range(1000)}
    assert len(guids) == 1000


def test_entropy_exhaustion():
    short = lambda n: b"\x01" * (n - 1)
    with pytest.raises(GenerationError):
        generate_identity(short, iterations=1)

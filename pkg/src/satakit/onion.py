"""v3 onion address encoding/decoding and the ed25519 operations used elsewhere.

An onion address label is::

    label = base32(PUBKEY | CHECKSUM | VERSION)          # 56 chars, lowercase
    CHECKSUM = SHA3-256(".onion checksum" | PUBKEY | VERSION)[:2]

where PUBKEY is a 32-byte ed25519 public key and VERSION is the single
byte 0x03.  All values are immutable after construction and every
operation here is a pure function, so concurrent use needs no locking.
"""

from __future__ import annotations

import base64
import hashlib
import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import BadAlphabet, BadChecksum, BadLength, BadVersion, MalformedSignature

ONION_SUFFIX = ".onion"
LABEL_LENGTH = 56
ONION_VERSION = 3
CHECKSUM_PREFIX = b".onion checksum"
BASE32_ALPHABET = "abcdefghijklmnopqrstuvwxyz234567"

_ALPHABET_SET = frozenset(BASE32_ALPHABET)


def _checksum(pubkey: bytes, version: int = ONION_VERSION) -> bytes:
    return hashlib.sha3_256(CHECKSUM_PREFIX + pubkey + bytes([version])).digest()[:2]


@dataclass(frozen=True)
class OnionAddress:
    """Decoded v3 onion identity.

    ``label`` is the bare 56-character lowercase form; the ``.onion``
    suffix is never stored.  Construction re-derives the checksum, so an
    inconsistent instance cannot exist.
    """

    pubkey: bytes
    checksum: bytes
    version: int
    label: str

    def __post_init__(self) -> None:
        if len(self.pubkey) != 32:
            raise BadLength(f"pubkey must be 32 bytes, got {len(self.pubkey)}", len(self.pubkey))
        if self.version != ONION_VERSION:
            raise BadVersion(f"unsupported onion address version {self.version}", self.version)
        expected = _checksum(self.pubkey, self.version)
        if self.checksum != expected:
            raise BadChecksum(
                f"checksum {self.checksum.hex()} does not match derived {expected.hex()}"
            )
        object.__setattr__(self, "label", self.label.lower())
        if self.label != encode_onion(self.pubkey):
            raise BadChecksum("label does not re-encode from its own public key")

    @property
    def onion_name(self) -> str:
        """The label with the ``.onion`` suffix, e.g. for SAN comparison."""
        return self.label + ONION_SUFFIX

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class KeyPair:
    """ed25519 keypair; ``secret`` is the 32-byte seed."""

    secret: bytes
    public: bytes

    def __post_init__(self) -> None:
        if len(self.secret) != 32:
            raise BadLength(f"secret seed must be 32 bytes, got {len(self.secret)}")
        derived = _public_from_seed(self.secret)
        if self.public != derived:
            raise KeyError("public key is not derivable from the secret seed")

    @property
    def address(self) -> OnionAddress:
        """Onion address owned by this keypair."""
        return address_for(self.public)


def _public_from_seed(seed: bytes) -> bytes:
    key = Ed25519PrivateKey.from_private_bytes(seed)
    return key.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )


def encode_onion(pubkey: bytes) -> str:
    """Encode a 32-byte ed25519 public key as a 56-character onion label.

    Total over 32-byte inputs; checksum and version byte are computed here.
    """
    if len(pubkey) != 32:
        raise BadLength(f"pubkey must be 32 bytes, got {len(pubkey)}", len(pubkey))
    raw = pubkey + _checksum(pubkey) + bytes([ONION_VERSION])
    return base64.b32encode(raw).decode("ascii").lower()


def address_for(pubkey: bytes) -> OnionAddress:
    """OnionAddress for a public key without going through string parsing."""
    return OnionAddress(
        pubkey=pubkey,
        checksum=_checksum(pubkey),
        version=ONION_VERSION,
        label=encode_onion(pubkey),
    )


def parse_onion(label: str) -> OnionAddress:
    """Parse and fully validate an onion label.

    Accepts the bare 56-character label or the label with a ``.onion``
    suffix; uppercase input is normalized.  Raises, in check order:

    * :class:`BadLength`   wrong label length,
    * :class:`BadAlphabet` character outside RFC 4648 lowercase base32
      (position reported),
    * :class:`BadChecksum` embedded checksum does not match the one
      derived from the decoded public key and version byte,
    * :class:`BadVersion`  decoded version byte is not 3.

    The checksum is verified over the *decoded* version byte, so a flip
    inside the version characters surfaces as :class:`BadChecksum`.
    """
    text = label.strip().lower()
    if text.endswith(ONION_SUFFIX):
        text = text[: -len(ONION_SUFFIX)]
    if len(text) != LABEL_LENGTH:
        raise BadLength(
            f"onion label must be {LABEL_LENGTH} characters, got {len(text)}", len(text)
        )
    for pos, ch in enumerate(text):
        if ch not in _ALPHABET_SET:
            raise BadAlphabet(
                f"character {ch!r} at position {pos} is not in the base32 alphabet", pos
            )
    raw = base64.b32decode(text.upper())
    assert len(raw) == 35  # 56 base32 chars decode to exactly 35 bytes
    pubkey, checksum, version = raw[:32], raw[32:34], raw[34]
    expected = _checksum(pubkey, version)
    if checksum != expected:
        raise BadChecksum(
            f"checksum {checksum.hex()} does not match derived {expected.hex()}"
        )
    if version != ONION_VERSION:
        raise BadVersion(f"unsupported onion address version {version}", version)
    return OnionAddress(pubkey=pubkey, checksum=checksum, version=version, label=text)


def keygen(seed: bytes | None = None) -> KeyPair:
    """Deterministic ed25519 keypair from a 32-byte seed (random if omitted)."""
    if seed is None:
        seed = os.urandom(32)
    if len(seed) != 32:
        raise BadLength(f"seed must be 32 bytes, got {len(seed)}")
    return KeyPair(secret=seed, public=_public_from_seed(seed))


def sign(secret: bytes, message: bytes) -> bytes:
    """ed25519 signature (64 bytes) over ``message`` with the 32-byte seed."""
    if len(secret) != 32:
        raise BadLength(f"secret seed must be 32 bytes, got {len(secret)}")
    return Ed25519PrivateKey.from_private_bytes(secret).sign(message)


def verify(pubkey: bytes, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` is a valid ed25519 signature by ``pubkey``.

    Raises :class:`MalformedSignature` for a wrong-length signature rather
    than silently returning False: length errors are caller bugs.
    """
    if len(pubkey) != 32:
        raise BadLength(f"pubkey must be 32 bytes, got {len(pubkey)}")
    if len(signature) != 64:
        raise MalformedSignature(f"signature must be 64 bytes, got {len(signature)}")
    try:
        Ed25519PublicKey.from_public_bytes(pubkey).verify(signature, message)
    except InvalidSignature:
        return False
    return True

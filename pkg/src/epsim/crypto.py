"""Hash-chain PRNG, participant masking, key derivation, and AEAD.

Byte widths are load-bearing everywhere in this module: digests and
salts are 32 bytes, addresses 20, AEAD nonces 12.  Callers get typed
errors rather than silent truncation when they pass anything else.
"""

from __future__ import annotations

from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import InvalidKeyError, InvalidSeedError, MalformedInputError, TamperDetectedError
from .keccak import keccak256

__all__ = [
    "DIGEST_LEN",
    "ADDRESS_LEN",
    "NONCE_LEN",
    "ZERO_DIGEST",
    "PrngState",
    "SidechainKey",
    "keccak256",
    "prng_seed",
    "prng_next",
    "mask_participant",
    "verify_unmask",
    "derive_sidechain_key",
    "aead_encrypt",
    "aead_decrypt",
]

DIGEST_LEN = 32
ADDRESS_LEN = 20
NONCE_LEN = 12
TAG_LEN = 16

ZERO_DIGEST = b"\x00" * DIGEST_LEN

# Domain-separation suffixes; UTF-8, no terminator.
PRNG_DOMAIN = b"EPS-PIN-PRNG-V1"
STATE_KEY_DOMAIN = b"EPS-STATE-KEY-V1"


def _require(data: bytes, width: int, what: str) -> bytes:
    if not isinstance(data, (bytes, bytearray)) or len(data) != width:
        raise MalformedInputError(f"{what} must be {width} bytes")
    return bytes(data)


@dataclass(frozen=True)
class PrngState:
    """One position in a keccak hash chain; advancing is one-way."""

    state: bytes
    counter: int


@dataclass(frozen=True)
class SidechainKey:
    """AEAD key bound to the sidechain it was derived for."""

    key: bytes
    sidechain_id: bytes


def prng_seed(secret: bytes) -> PrngState:
    """Derive the chain start from a shared secret of any positive length."""
    if len(secret) == 0:
        raise InvalidSeedError("prng secret must be non-empty")
    return PrngState(state=keccak256(bytes(secret) + PRNG_DOMAIN), counter=0)


def prng_next(state: PrngState) -> tuple[bytes, PrngState]:
    """Emit the current 32-byte value and the advanced state."""
    value = state.state
    return value, PrngState(state=keccak256(value), counter=state.counter + 1)


def mask_participant(address: bytes, salt: bytes) -> bytes:
    """Commit to an address under a salt: keccak256(address || salt)."""
    address = _require(address, ADDRESS_LEN, "address")
    salt = _require(salt, DIGEST_LEN, "salt")
    return keccak256(address + salt)


def verify_unmask(address: bytes, salt: bytes, mask: bytes) -> bool:
    """True iff (address, salt) is the pair committed in `mask`."""
    mask = _require(mask, DIGEST_LEN, "mask")
    return mask_participant(address, salt) == mask


def derive_sidechain_key(root_key: bytes, sidechain_id: bytes) -> SidechainKey:
    """Derive the per-sidechain state key from an operator root key."""
    if len(root_key) != DIGEST_LEN:
        raise InvalidKeyError("root key must be 32 bytes")
    if len(sidechain_id) != DIGEST_LEN:
        raise InvalidKeyError("sidechain id must be 32 bytes")
    key = keccak256(bytes(root_key) + bytes(sidechain_id) + STATE_KEY_DOMAIN)
    return SidechainKey(key=key, sidechain_id=bytes(sidechain_id))


def aead_encrypt(key: bytes, nonce: bytes, plaintext: bytes, aad: bytes) -> bytes:
    """AES-256-GCM seal; returns ciphertext with the 16-byte tag appended."""
    key = _require(key, DIGEST_LEN, "aead key")
    nonce = _require(nonce, NONCE_LEN, "nonce")
    return AESGCM(key).encrypt(nonce, bytes(plaintext), bytes(aad))


def aead_decrypt(key: bytes, nonce: bytes, ciphertext: bytes, aad: bytes) -> bytes:
    """Open a sealed box; tampering and wrong keys raise, truncation is malformed."""
    key = _require(key, DIGEST_LEN, "aead key")
    nonce = _require(nonce, NONCE_LEN, "nonce")
    if len(ciphertext) < TAG_LEN:
        raise MalformedInputError("ciphertext shorter than the authentication tag")
    try:
        return AESGCM(key).decrypt(nonce, bytes(ciphertext), bytes(aad))
    except InvalidTag:
        raise TamperDetectedError("authentication failed") from None

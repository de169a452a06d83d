"""Per-participant sidechain runtime: state, permissions, persistence.

A sidechain here is a named-contract key-value ledger replicated among
member nodes.  Plaintext members hold the derived state key and can
read and extend the state; ciphertext-only members store the sealed
blobs other members produce, which is enough to persist and pin but
reveals nothing.

Persisted state files are sealed with AES-GCM under a nonce derived
from (sidechain id, block number) so every plaintext member produces
byte-identical blobs for the same block - the property that lets
ciphertext-only guardians pin a canonical representation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .crypto import (
    DIGEST_LEN,
    NONCE_LEN,
    SidechainKey,
    aead_decrypt,
    aead_encrypt,
    keccak256,
)
from .encoding import blob, encode_kv, read_blob, read_u16be, u16be, u64be
from .era import validate_domain
from .errors import (
    ArchivedError,
    ContractExistsError,
    GuardFailedError,
    MalformedInputError,
    PendingTransactionsError,
    SimError,
    UnknownContractError,
    WrongSidechainError,
)

STATE_MAGIC = b"EPSS"
STATE_VERSION = 1

MODE_PLAINTEXT = "plaintext"
MODE_CIPHERTEXT_ONLY = "ciphertext-only"

CALL_CLASSES = ("admin", "view", "transact", "deploy", "transfer")
TX_TYPES = ("deploy", "update", "transfer")

# contract that caches values fetched from other sidechains
XCHAIN_CACHE = "oracle-cache"


def make_sidechain_id(domains: list[str], creation_nonce: int) -> bytes:
    """Identifier all members agree on: hash of sorted domains plus a nonce."""
    if not domains:
        raise MalformedInputError("a sidechain needs at least one member domain")
    canonical = ",".join(sorted(validate_domain(d) for d in domains))
    return keccak256(canonical.encode() + u64be(creation_nonce))


# -- permissions ---------------------------------------------------------------


@dataclass
class PermissionPolicy:
    """Everything a node enforces locally.  Empty means deny."""

    api_acl: dict[str, set[str]] = field(default_factory=dict)
    account_whitelist: set[bytes] = field(default_factory=set)
    account_perms: dict[bytes, set[str]] = field(default_factory=dict)
    establish_org_whitelist: set[str] = field(default_factory=set)
    establish_org_blacklist: set[str] = field(default_factory=set)
    establish_api_whitelist: set[str] = field(default_factory=set)
    establish_api_blacklist: set[str] = field(default_factory=set)
    pinning_masked: bool = False  # register as a salted mask rather than an address


def check_api_permission(policy: PermissionPolicy, participant: str, call_class: str) -> bool:
    """May this local caller use this class of node API?"""
    if call_class not in CALL_CLASSES:
        raise MalformedInputError(f"unknown call class {call_class!r}")
    return call_class in policy.api_acl.get(participant, set())


def check_tx_permission(policy: PermissionPolicy, sender: bytes, tx_type: str) -> bool:
    """May this account submit this type of sidechain transaction?"""
    if tx_type not in TX_TYPES:
        raise MalformedInputError(f"unknown tx type {tx_type!r}")
    return sender in policy.account_whitelist and tx_type in policy.account_perms.get(sender, set())


def may_establish(policy: PermissionPolicy, participant: str) -> bool:
    """Initiator-side gate for the establishment API."""
    if participant in policy.establish_api_blacklist:
        return False
    return participant in policy.establish_api_whitelist


def evaluate_establishment_request(
    policy: PermissionPolicy, requester_org: str, requester_participant: str
) -> bool:
    """Responder-side gate for a sidechain invitation.

    The requester's organisation must be whitelisted and not
    blacklisted; an empty whitelist admits nobody.  A specifically
    blacklisted remote participant is refused even when its org passes.
    """
    if requester_org in policy.establish_org_blacklist:
        return False
    if requester_org not in policy.establish_org_whitelist:
        return False
    return requester_participant not in policy.establish_api_blacklist


# -- state ---------------------------------------------------------------------


@dataclass
class SidechainTx:
    sender: bytes
    op: str  # deploy | put | guarded-put | read | cross-read
    contract: str
    args: tuple[bytes, ...]


@dataclass(frozen=True)
class SidechainReceipt:
    status: str
    result: bytes = b""
    reason: str = ""


@dataclass
class SidechainState:
    block_number: int = 0
    contracts: dict[str, dict[bytes, bytes]] = field(default_factory=dict)

    def serialize(self) -> bytes:
        out = bytearray(u64be(self.block_number))
        for name in sorted(self.contracts):
            out += blob(name.encode())
            out += blob(encode_kv(self.contracts[name]))
        return bytes(out)

    def state_root(self) -> bytes:
        return keccak256(self.serialize())

    def copy(self) -> "SidechainState":
        return SidechainState(
            block_number=self.block_number,
            contracts={name: dict(cells) for name, cells in self.contracts.items()},
        )

    @classmethod
    def parse(cls, data: bytes) -> "SidechainState":
        if len(data) < 8:
            raise MalformedInputError("state serialization too short")
        block_number = struct.unpack_from(">Q", data)[0]
        contracts: dict[str, dict[bytes, bytes]] = {}
        off = 8
        while off < len(data):
            name, off = read_blob(data, off)
            body, off = read_blob(data, off)
            cells: dict[bytes, bytes] = {}
            boff = 0
            while boff < len(body):
                key, boff = read_blob(body, boff)
                value, boff = read_blob(body, boff)
                cells[key] = value
            contracts[name.decode()] = cells
        return cls(block_number=block_number, contracts=contracts)


def apply_sidechain_tx(state: SidechainState, tx: SidechainTx, resolve_xread=None) -> SidechainReceipt:
    """Execute one transaction; failures revert without touching state."""
    try:
        return SidechainReceipt("ok", result=_execute(state, tx, resolve_xread))
    except SimError as err:
        return SidechainReceipt("reverted", reason=type(err).__name__)


def _execute(state: SidechainState, tx: SidechainTx, resolve_xread) -> bytes:
    if tx.op == "deploy":
        if tx.contract in state.contracts:
            raise ContractExistsError(tx.contract)
        if len(tx.args) % 2:
            raise MalformedInputError("deploy takes key/value pairs")
        state.contracts[tx.contract] = {
            tx.args[i]: tx.args[i + 1] for i in range(0, len(tx.args), 2)
        }
        return b""
    if tx.op == "cross-read":
        if resolve_xread is None:
            raise MalformedInputError("no cross-chain resolver available")
        value = resolve_xread(tx.sender, tx.args)
        cache = state.contracts.setdefault(XCHAIN_CACHE, {})
        target_id, block_raw, query = tx.args[0], tx.args[1], tx.args[2]
        cache[query + b"@" + block_raw] = value
        return value
    store = state.contracts.get(tx.contract)
    if store is None:
        raise UnknownContractError(tx.contract)
    if tx.op == "put":
        key, value = tx.args
        store[key] = value
        return b""
    if tx.op == "guarded-put":
        key, expected, value = tx.args
        current = store.get(key, b"")
        if current != expected:
            raise GuardFailedError(f"guard mismatch on {key!r}")
        store[key] = value
        return b""
    if tx.op == "read":
        (key,) = tx.args
        return store.get(key, b"")
    raise MalformedInputError(f"unknown sidechain op {tx.op!r}")


# -- encrypted persistence -------------------------------------------------------


def state_nonce(sidechain_id: bytes, block_number: int) -> bytes:
    """Deterministic AEAD nonce: all members seal a block identically."""
    return keccak256(sidechain_id + u64be(block_number))[:NONCE_LEN]


def encrypt_state(state: SidechainState, key: SidechainKey) -> bytes:
    nonce = state_nonce(key.sidechain_id, state.block_number)
    sealed = aead_encrypt(key.key, nonce, state.serialize(), aad=key.sidechain_id)
    return STATE_MAGIC + u16be(STATE_VERSION) + key.sidechain_id + nonce + sealed


def decrypt_state(data: bytes, key: SidechainKey, expected_sidechain_id: bytes) -> SidechainState:
    header_len = 4 + 2 + DIGEST_LEN + NONCE_LEN
    if len(data) < header_len or data[:4] != STATE_MAGIC:
        raise MalformedInputError("not a sealed sidechain state")
    version, off = read_u16be(data, 4)
    if version != STATE_VERSION:
        raise MalformedInputError(f"unsupported state version {version}")
    sidechain_id = data[off:off + DIGEST_LEN]
    if sidechain_id != expected_sidechain_id:
        raise WrongSidechainError("state file belongs to a different sidechain")
    nonce = data[off + DIGEST_LEN:header_len]
    plaintext = aead_decrypt(key.key, nonce, data[header_len:], aad=sidechain_id)
    return SidechainState.parse(plaintext)


def persist_state(state: SidechainState, key: SidechainKey, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(encrypt_state(state, key))


def load_state(expected_sidechain_id: bytes, key: SidechainKey, path: str) -> SidechainState:
    with open(path, "rb") as fh:
        return decrypt_state(fh.read(), key, expected_sidechain_id)


# -- runtime -----------------------------------------------------------------------


@dataclass
class SidechainRuntime:
    """One member node's replica of one sidechain."""

    sidechain_id: bytes
    member_domains: tuple[str, ...]
    mode: str = MODE_PLAINTEXT
    key: SidechainKey | None = None  # absent on ciphertext-only replicas
    secret: bytes = b""  # pin chain secret, shared by every member
    state: SidechainState | None = None
    pending: list[SidechainTx] = field(default_factory=list)
    archived: bool = False
    history: dict[int, SidechainState] = field(default_factory=dict)
    cipher_blobs: dict[int, bytes] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode == MODE_CIPHERTEXT_ONLY:
            self.key = None
        elif self.state is None:
            self.state = SidechainState()
            self.history[0] = self.state.copy()

    def observed_state_bytes(self, block_number: int) -> bytes:
        """What this node would commit to in a pin for the given block."""
        if self.mode == MODE_CIPHERTEXT_ONLY:
            return self.cipher_blobs[block_number]
        return self.history[block_number].state_root()

    def queue(self, tx: SidechainTx) -> None:
        if self.archived:
            raise ArchivedError("sidechain runtime is archived")
        self.pending.append(tx)

    def archive(self, path: str) -> None:
        if self.archived:
            raise ArchivedError("already archived")
        if self.pending:
            raise PendingTransactionsError("drain queued transactions before archiving")
        if self.mode == MODE_CIPHERTEXT_ONLY:
            latest = max(self.cipher_blobs) if self.cipher_blobs else None
            if latest is None:
                raise MalformedInputError("nothing received to archive")
            with open(path, "wb") as fh:
                fh.write(self.cipher_blobs[latest])
        else:
            persist_state(self.state, self.key, path)
        self.state = None
        self.archived = True

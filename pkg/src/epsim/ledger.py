"""Simulated management chain: contracts, transactions, blocks.

The ledger is a deterministic state machine, not a consensus system.
Contracts are flat byte key-value stores driven by registered handler
kinds; a transaction either commits its handler's writes or reverts
with no observable trace beyond its receipt.  State roots are keccak
digests of the canonical serialisation, so two ledgers that executed
the same transactions byte-match.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .crypto import ZERO_DIGEST, keccak256
from .encoding import blob, decode_kv, encode_kv, read_blob, read_u16be, u16be, u32be, u64be
from .errors import (
    NonceGapError,
    Revert,
    SimError,
    SnapshotFormatError,
    UnknownTargetError,
    UnsupportedContractError,
)

SNAPSHOT_MAGIC = b"EPSL"
SNAPSHOT_VERSION = 1

# Internal cell holding the handler kind; handlers never write \x00-prefixed keys.
KIND_CELL = b"\x00kind"


@dataclass(frozen=True)
class Transaction:
    sender: bytes
    target: bytes
    call_name: str
    args: tuple[bytes, ...]
    nonce: int


@dataclass(frozen=True)
class Receipt:
    status: str  # "ok" | "reverted"
    result: bytes = b""
    reason: str = ""


@dataclass(frozen=True)
class Block:
    number: int
    parent_hash: bytes
    transactions: tuple[Transaction, ...]
    state_root: bytes


@dataclass
class Contract:
    kind: str
    cells: dict[bytes, bytes] = field(default_factory=dict)


@dataclass
class ExecContext:
    """What a handler may see beyond its own cells."""

    block_number: int


def _handlers():
    # imported lazily so era/pinning can depend on this module's types
    from . import era, pinning

    return {
        "root-era": (era.init_era_contract, era.handle_era_call),
        "delegate-era": (era.init_era_contract, era.handle_era_call),
        "orginfo": (era.init_orginfo_contract, era.handle_orginfo_call),
        "mgmt-pinning": (pinning.init_pinning_contract, pinning.handle_pinning_call),
    }


def encode_tx(tx: Transaction) -> bytes:
    parts = [tx.sender, tx.target, blob(tx.call_name.encode()), u32be(len(tx.args))]
    parts += [blob(a) for a in tx.args]
    parts.append(u64be(tx.nonce))
    return b"".join(parts)


def block_hash(block: Block) -> bytes:
    txs = keccak256(b"".join(encode_tx(t) for t in block.transactions))
    return keccak256(u64be(block.number) + block.parent_hash + block.state_root + txs)


class Ledger:
    """One management chain instance shared by every simulated node."""

    def __init__(self) -> None:
        self.contracts: dict[bytes, Contract] = {}
        self.pending: list[Transaction] = []
        self.nonces: dict[bytes, int] = {}
        self.deploy_counts: dict[bytes, int] = {}
        self.receipts: dict[int, list[Receipt]] = {}
        genesis = Block(0, ZERO_DIGEST, (), self.state_root())
        self.blocks: list[Block] = [genesis]

    # -- state digest -----------------------------------------------------

    def serialize_state(self) -> bytes:
        out = bytearray()
        for cid in sorted(self.contracts):
            out += cid
            out += blob(encode_kv(self.contracts[cid].cells))
        return bytes(out)

    def state_root(self) -> bytes:
        return keccak256(self.serialize_state())

    # -- contract lifecycle -------------------------------------------------

    def deploy_contract(self, handler_kind: str, init_args: tuple[bytes, ...], deployer: bytes) -> bytes:
        handlers = _handlers()
        if handler_kind not in handlers:
            raise UnsupportedContractError(f"no handler for kind {handler_kind!r}")
        count = self.deploy_counts.get(deployer, 0)
        cid = keccak256(deployer + u64be(count))
        self.deploy_counts[deployer] = count + 1
        contract = Contract(kind=handler_kind, cells={KIND_CELL: handler_kind.encode()})
        handlers[handler_kind][0](contract.cells, deployer, init_args)
        self.contracts[cid] = contract
        return cid

    def read_contract(self, cid: bytes, query: bytes) -> bytes | None:
        if cid not in self.contracts:
            raise UnknownTargetError("no contract at target")
        return self.contracts[cid].cells.get(bytes(query))

    # -- transactions -------------------------------------------------------

    def submit_tx(self, tx: Transaction) -> None:
        if tx.target not in self.contracts:
            raise UnknownTargetError("no contract at target")
        expected = self.nonces.get(tx.sender, 0)
        if tx.nonce != expected:
            raise NonceGapError(f"expected nonce {expected}, got {tx.nonce}")
        self.nonces[tx.sender] = expected + 1
        self.pending.append(tx)

    def call(self, sender: bytes, target: bytes, call_name: str, args: tuple[bytes, ...]) -> None:
        """Queue a call with the sender's next nonce."""
        self.submit_tx(Transaction(sender, target, call_name, tuple(args), self.nonces.get(sender, 0)))

    def produce_block(self) -> Block:
        handlers = _handlers()
        number = len(self.blocks)
        txs = tuple(self.pending)
        self.pending = []
        ctx = ExecContext(block_number=number)
        receipts = []
        for tx in txs:
            contract = self.contracts[tx.target]
            work = dict(contract.cells)
            try:
                result = handlers[contract.kind][1](work, tx.sender, tx.call_name, tx.args, ctx)
            except Revert as rv:
                receipts.append(Receipt("reverted", reason=rv.reason))
            except SimError as err:
                receipts.append(Receipt("reverted", reason=type(err).__name__))
            else:
                contract.cells = work
                receipts.append(Receipt("ok", result=result or b""))
        block = Block(number, block_hash(self.blocks[-1]), txs, self.state_root())
        self.blocks.append(block)
        self.receipts[number] = receipts
        return block

    def head(self) -> Block:
        return self.blocks[-1]

    def contracts_of_kind(self, kind: str) -> list[bytes]:
        return sorted(cid for cid, c in self.contracts.items() if c.kind == kind)


# -- snapshots ---------------------------------------------------------------


def write_snapshot(ledger: Ledger, path: str) -> None:
    data = SNAPSHOT_MAGIC + u16be(SNAPSHOT_VERSION) + ledger.serialize_state()
    with open(path, "wb") as fh:
        fh.write(data)


def parse_snapshot(data: bytes) -> dict[bytes, Contract]:
    if data[:4] != SNAPSHOT_MAGIC:
        raise SnapshotFormatError("bad snapshot magic")
    version, off = read_u16be(data, 4)
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    contracts: dict[bytes, Contract] = {}
    while off < len(data):
        if off + 32 > len(data):
            raise SnapshotFormatError("truncated contract id")
        cid = data[off:off + 32]
        off += 32
        body, off = read_blob(data, off)
        cells = decode_kv(body)
        kind = cells.get(KIND_CELL, b"").decode()
        contracts[cid] = Contract(kind=kind, cells=cells)
    return contracts


def load_snapshot(path: str) -> dict[bytes, Contract]:
    with open(path, "rb") as fh:
        return parse_snapshot(fh.read())

"""Management and pinning contract: anonymous checkpoints plus voting.

Pins are stored under map keys derived from (sidechain id, previous
pin, PRNG value), so the contract - and anyone reading it - sees an
unordered set of opaque 32-byte slots with no sidechain attribution.
Holders of the sidechain secret can replay the key chain; nobody else
can even tell which pins belong together.

Contests reveal one link of one chain and hand the decision to the
sidechain's unmasked participants.  Masked participants are salted
commitments to addresses; presenting the salt converts one to a voter.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .crypto import ADDRESS_LEN, DIGEST_LEN, ZERO_DIGEST, keccak256, prng_next, prng_seed, verify_unmask
from .encoding import blob, read_blob, u32be, u64be
from .errors import (
    AlreadyContestedError,
    AlreadyFinalizedError,
    CallerNotMemberError,
    ChainBrokenError,
    DeadlinePassedError,
    DerivedKeyNotFoundError,
    DuplicateSidechainError,
    EmptyParticipantsError,
    KeyOccupiedError,
    MalformedInputError,
    NoMatchingMaskError,
    NotUnmaskedError,
    Revert,
    SidechainNotRegisteredError,
    UnknownPreviousKeyError,
    UnknownProposalError,
    VotingOpenError,
)

STATUS_NORMAL = "normal"
STATUS_CONTESTED = "contested"
STATUS_VOTED_INVALID = "voted-invalid"
STATUS_VOTED_VALID = "voted-valid"

_STATUS_BYTES = {
    STATUS_NORMAL: b"\x00",
    STATUS_CONTESTED: b"\x01",
    STATUS_VOTED_INVALID: b"\x02",
    STATUS_VOTED_VALID: b"\x03",
}
_STATUS_NAMES = {v: k for k, v in _STATUS_BYTES.items()}

KIND_ADD_UNMASKED = "add-unmasked"
KIND_ADD_MASKED = "add-masked"
KIND_REMOVE_PARTICIPANT = "remove-participant"
KIND_CHANGE_VOTING_CONFIG = "change-voting-config"
KIND_PIN_VALIDITY = "pin-validity"

OUTCOME_OPEN = "open"
OUTCOME_APPROVED = "approved"
OUTCOME_REJECTED = "rejected"

_OUTCOME_BYTES = {OUTCOME_OPEN: b"\x00", OUTCOME_APPROVED: b"\x01", OUTCOME_REJECTED: b"\x02"}
_OUTCOME_NAMES = {v: k for k, v in _OUTCOME_BYTES.items()}


@dataclass(frozen=True)
class VotingConfig:
    period_blocks: int
    threshold_num: int
    threshold_den: int


@dataclass(frozen=True)
class SidechainRegistration:
    sidechain_id: bytes
    unmasked: frozenset[bytes]
    masked: frozenset[bytes]
    voting: VotingConfig
    registered_at_block: int


@dataclass(frozen=True)
class PinEntry:
    pin: bytes
    posted_at_block: int
    status: str


@dataclass(frozen=True)
class Proposal:
    proposal_id: int
    sidechain_id: bytes
    kind: str
    subject: bytes
    deadline: int
    outcome: str
    yes: frozenset[bytes]
    no: frozenset[bytes]


def compute_map_key(sidechain_id: bytes, previous_pin: bytes, prng_value: bytes) -> bytes:
    """Slot for the next pin: keccak256(id || previous pin || prng value)."""
    for what, value in (("sidechain id", sidechain_id), ("previous pin", previous_pin), ("prng value", prng_value)):
        if len(value) != DIGEST_LEN:
            raise MalformedInputError(f"{what} must be {DIGEST_LEN} bytes")
    return keccak256(bytes(sidechain_id) + bytes(previous_pin) + bytes(prng_value))


# -- cell codecs --------------------------------------------------------------


def _pack_set(items, width: int) -> bytes:
    return b"".join(sorted(items))


def _unpack_set(data: bytes, width: int) -> frozenset[bytes]:
    return frozenset(data[i:i + width] for i in range(0, len(data), width))


def _pack_voting(cfg: VotingConfig) -> bytes:
    return u64be(cfg.period_blocks) + u32be(cfg.threshold_num) + u32be(cfg.threshold_den)


def _unpack_voting(data: bytes) -> VotingConfig:
    period, num, den = struct.unpack(">QII", data)
    return VotingConfig(period, num, den)


def _pin_cell(map_key: bytes) -> bytes:
    return b"pin:" + map_key


def _pack_pin(entry: PinEntry) -> bytes:
    return entry.pin + u64be(entry.posted_at_block) + _STATUS_BYTES[entry.status]


def _unpack_pin(data: bytes) -> PinEntry:
    pin, at = data[:32], struct.unpack(">Q", data[32:40])[0]
    return PinEntry(pin=pin, posted_at_block=at, status=_STATUS_NAMES[data[40:41]])


def _pack_proposal(p: Proposal) -> bytes:
    return (
        p.sidechain_id
        + blob(p.kind.encode())
        + blob(p.subject)
        + u64be(p.deadline)
        + _OUTCOME_BYTES[p.outcome]
        + blob(_pack_set(p.yes, ADDRESS_LEN))
        + blob(_pack_set(p.no, ADDRESS_LEN))
    )


def _unpack_proposal(pid: int, data: bytes) -> Proposal:
    sidechain_id = data[:32]
    kind, off = read_blob(data, 32)
    subject, off = read_blob(data, off)
    deadline = struct.unpack_from(">Q", data, off)[0]
    outcome = _OUTCOME_NAMES[data[off + 8:off + 9]]
    yes, off2 = read_blob(data, off + 9)
    no, _ = read_blob(data, off2)
    return Proposal(
        proposal_id=pid,
        sidechain_id=sidechain_id,
        kind=kind.decode(),
        subject=subject,
        deadline=deadline,
        outcome=outcome,
        yes=_unpack_set(yes, ADDRESS_LEN),
        no=_unpack_set(no, ADDRESS_LEN),
    )


# -- registrations -------------------------------------------------------------


def get_registration(cells: dict[bytes, bytes], sidechain_id: bytes) -> SidechainRegistration | None:
    at = cells.get(b"sc:" + sidechain_id + b":r")
    if at is None:
        return None
    return SidechainRegistration(
        sidechain_id=sidechain_id,
        unmasked=_unpack_set(cells.get(b"sc:" + sidechain_id + b":u", b""), ADDRESS_LEN),
        masked=_unpack_set(cells.get(b"sc:" + sidechain_id + b":m", b""), DIGEST_LEN),
        voting=_unpack_voting(cells[b"sc:" + sidechain_id + b":v"]),
        registered_at_block=struct.unpack(">Q", at)[0],
    )


def _store_sets(cells, sidechain_id, unmasked, masked) -> None:
    cells[b"sc:" + sidechain_id + b":u"] = _pack_set(unmasked, ADDRESS_LEN)
    cells[b"sc:" + sidechain_id + b":m"] = _pack_set(masked, DIGEST_LEN)


def register_sidechain(
    cells: dict[bytes, bytes],
    caller: bytes,
    sidechain_id: bytes,
    unmasked: list[bytes],
    masked: list[bytes],
    voting: VotingConfig,
    block_number: int,
) -> None:
    if len(sidechain_id) != DIGEST_LEN:
        raise MalformedInputError("sidechain id must be 32 bytes")
    if b"sc:" + sidechain_id + b":r" in cells:
        raise DuplicateSidechainError("sidechain already registered")
    if not unmasked and not masked:
        raise EmptyParticipantsError("a sidechain needs at least one participant")
    if any(len(a) != ADDRESS_LEN for a in unmasked) or any(len(m) != DIGEST_LEN for m in masked):
        raise MalformedInputError("participant entries have fixed widths")
    if caller not in unmasked:
        raise CallerNotMemberError("registering caller must be an unmasked participant")
    if voting.period_blocks < 1 or voting.threshold_den < 1:
        raise MalformedInputError("voting config must have a period and denominator")
    cells[b"sc:" + sidechain_id + b":r"] = u64be(block_number)
    cells[b"sc:" + sidechain_id + b":v"] = _pack_voting(voting)
    _store_sets(cells, sidechain_id, set(unmasked), set(masked))


# -- pins ----------------------------------------------------------------------


def get_pin_entry(cells: dict[bytes, bytes], map_key: bytes) -> PinEntry | None:
    raw = cells.get(_pin_cell(map_key))
    return None if raw is None else _unpack_pin(raw)


def post_pin(cells: dict[bytes, bytes], caller: bytes, map_key: bytes, pin: bytes, block_number: int) -> None:
    """Drop a pin into its slot.  Deliberately records nothing about who or what for."""
    if len(map_key) != DIGEST_LEN or len(pin) != DIGEST_LEN:
        raise MalformedInputError("map key and pin must be 32 bytes")
    cell = _pin_cell(map_key)
    if cell in cells:
        raise KeyOccupiedError("a pin already occupies this map key")
    cells[cell] = _pack_pin(PinEntry(pin=bytes(pin), posted_at_block=block_number, status=STATUS_NORMAL))


def _set_pin_status(cells, map_key: bytes, status: str) -> None:
    entry = get_pin_entry(cells, map_key)
    cells[_pin_cell(map_key)] = _pack_pin(PinEntry(entry.pin, entry.posted_at_block, status))


def contest_pin(
    cells: dict[bytes, bytes],
    caller: bytes,
    previous_map_key: bytes,
    prng_value: bytes,
    sidechain_id: bytes,
    block_number: int,
) -> int:
    """Point at a suspect pin by revealing one link of the key chain.

    Knowing (previous key, prng value, sidechain id) is itself evidence
    of membership: only secret holders can derive them.  The contested
    entry is frozen and a pin-validity vote is opened for the
    sidechain's unmasked participants.
    """
    previous = get_pin_entry(cells, previous_map_key)
    if previous is None:
        raise UnknownPreviousKeyError("no pin at the claimed previous key")
    contested_key = compute_map_key(sidechain_id, previous.pin, prng_value)
    contested = get_pin_entry(cells, contested_key)
    if contested is None:
        raise DerivedKeyNotFoundError("derived map key holds no pin")
    if contested.status != STATUS_NORMAL:
        raise AlreadyContestedError(f"pin is already {contested.status}")
    registration = get_registration(cells, sidechain_id)
    if registration is None:
        raise SidechainNotRegisteredError("cannot open a vote for an unregistered sidechain")
    _set_pin_status(cells, contested_key, STATUS_CONTESTED)
    return _open_proposal(
        cells,
        sidechain_id=sidechain_id,
        kind=KIND_PIN_VALIDITY,
        subject=contested_key,
        deadline=block_number + registration.voting.period_blocks,
    )


# -- masks ---------------------------------------------------------------------


def unmask(cells: dict[bytes, bytes], caller: bytes, sidechain_id: bytes, salt: bytes) -> None:
    """Trade a matching mask for a seat among the unmasked participants."""
    registration = get_registration(cells, sidechain_id)
    if registration is None:
        raise SidechainNotRegisteredError("unknown sidechain")
    if len(caller) != ADDRESS_LEN or len(salt) != DIGEST_LEN:
        raise MalformedInputError("caller address and salt have fixed widths")
    matching = next((m for m in registration.masked if verify_unmask(caller, salt, m)), None)
    if matching is None:
        raise NoMatchingMaskError("no registered mask opens with this salt")
    _store_sets(
        cells,
        sidechain_id,
        set(registration.unmasked) | {bytes(caller)},
        set(registration.masked) - {matching},
    )


# -- proposals and voting --------------------------------------------------------

_SUBJECT_WIDTHS = {
    KIND_ADD_UNMASKED: (ADDRESS_LEN,),
    KIND_ADD_MASKED: (DIGEST_LEN,),
    KIND_REMOVE_PARTICIPANT: (ADDRESS_LEN, DIGEST_LEN),
    KIND_CHANGE_VOTING_CONFIG: (16,),
    KIND_PIN_VALIDITY: (DIGEST_LEN,),
}


def _open_proposal(cells, sidechain_id: bytes, kind: str, subject: bytes, deadline: int) -> int:
    pid = struct.unpack(">Q", cells.get(b"nprop", b"\x00" * 8))[0]
    cells[b"nprop"] = u64be(pid + 1)
    proposal = Proposal(
        proposal_id=pid,
        sidechain_id=sidechain_id,
        kind=kind,
        subject=bytes(subject),
        deadline=deadline,
        outcome=OUTCOME_OPEN,
        yes=frozenset(),
        no=frozenset(),
    )
    cells[b"prop:" + u64be(pid)] = _pack_proposal(proposal)
    return pid


def get_proposal(cells: dict[bytes, bytes], proposal_id: int) -> Proposal | None:
    raw = cells.get(b"prop:" + u64be(proposal_id))
    return None if raw is None else _unpack_proposal(proposal_id, raw)


def _require_unmasked(cells, caller: bytes, sidechain_id: bytes) -> SidechainRegistration:
    registration = get_registration(cells, sidechain_id)
    if registration is None:
        raise SidechainNotRegisteredError("unknown sidechain")
    if caller not in registration.unmasked:
        raise NotUnmaskedError("caller is not an unmasked participant")
    return registration


def propose(
    cells: dict[bytes, bytes],
    caller: bytes,
    sidechain_id: bytes,
    kind: str,
    subject: bytes,
    block_number: int,
) -> int:
    if kind not in _SUBJECT_WIDTHS:
        raise MalformedInputError(f"unknown proposal kind {kind!r}")
    if kind == KIND_PIN_VALIDITY:
        raise MalformedInputError("pin-validity proposals are opened by contest")
    if len(subject) not in _SUBJECT_WIDTHS[kind]:
        raise MalformedInputError(f"bad subject width for {kind}")
    registration = _require_unmasked(cells, caller, sidechain_id)
    return _open_proposal(
        cells, sidechain_id, kind, subject, block_number + registration.voting.period_blocks
    )


def cast_vote(cells: dict[bytes, bytes], caller: bytes, proposal_id: int, approve: bool, block_number: int) -> None:
    proposal = get_proposal(cells, proposal_id)
    if proposal is None:
        raise UnknownProposalError(f"no proposal {proposal_id}")
    _require_unmasked(cells, caller, proposal.sidechain_id)
    if proposal.outcome != OUTCOME_OPEN:
        raise AlreadyFinalizedError("voting is closed")
    if block_number > proposal.deadline:
        raise DeadlinePassedError("voting deadline has passed")
    yes = set(proposal.yes) - {caller}
    no = set(proposal.no) - {caller}
    (yes if approve else no).add(bytes(caller))
    updated = Proposal(
        proposal.proposal_id, proposal.sidechain_id, proposal.kind, proposal.subject,
        proposal.deadline, proposal.outcome, frozenset(yes), frozenset(no),
    )
    cells[b"prop:" + u64be(proposal_id)] = _pack_proposal(updated)


def _apply_outcome(cells, proposal: Proposal) -> None:
    registration = get_registration(cells, proposal.sidechain_id)
    unmasked, masked = set(registration.unmasked), set(registration.masked)
    if proposal.kind == KIND_PIN_VALIDITY:
        entry = get_pin_entry(cells, proposal.subject)
        if entry is not None and entry.status == STATUS_CONTESTED:
            _set_pin_status(cells, proposal.subject, STATUS_VOTED_INVALID)
        return
    if proposal.kind == KIND_ADD_UNMASKED:
        unmasked.add(proposal.subject)
    elif proposal.kind == KIND_ADD_MASKED:
        masked.add(proposal.subject)
    elif proposal.kind == KIND_REMOVE_PARTICIPANT:
        if len(proposal.subject) == ADDRESS_LEN:
            unmasked.discard(proposal.subject)
        else:
            masked.discard(proposal.subject)
    elif proposal.kind == KIND_CHANGE_VOTING_CONFIG:
        cells[b"sc:" + proposal.sidechain_id + b":v"] = proposal.subject
    _store_sets(cells, proposal.sidechain_id, unmasked, masked)


def finalize(cells: dict[bytes, bytes], caller: bytes, proposal_id: int, block_number: int) -> str:
    """Close a matured proposal; approval needs a strict supermajority.

    The electorate is the unmasked set at finalize time, so votes cast
    by since-removed participants stop counting and late unmaskings
    enlarge the denominator.
    """
    proposal = get_proposal(cells, proposal_id)
    if proposal is None:
        raise UnknownProposalError(f"no proposal {proposal_id}")
    if proposal.outcome != OUTCOME_OPEN:
        raise AlreadyFinalizedError("proposal already finalized")
    if block_number <= proposal.deadline:
        raise VotingOpenError("voting period still open")
    registration = get_registration(cells, proposal.sidechain_id)
    electorate = registration.unmasked
    cfg = registration.voting
    yes_count = len(proposal.yes & electorate)
    approved = yes_count * cfg.threshold_den > cfg.threshold_num * len(electorate)
    outcome = OUTCOME_APPROVED if approved else OUTCOME_REJECTED
    if approved:
        _apply_outcome(cells, proposal)
    elif proposal.kind == KIND_PIN_VALIDITY:
        entry = get_pin_entry(cells, proposal.subject)
        if entry is not None and entry.status == STATUS_CONTESTED:
            _set_pin_status(cells, proposal.subject, STATUS_VOTED_VALID)
    updated = Proposal(
        proposal.proposal_id, proposal.sidechain_id, proposal.kind, proposal.subject,
        proposal.deadline, outcome, proposal.yes, proposal.no,
    )
    cells[b"prop:" + u64be(proposal_id)] = _pack_proposal(updated)
    return outcome


# -- chain verification -----------------------------------------------------------


def pin_chain_verify(
    cells: dict[bytes, bytes], sidechain_id: bytes, secret: bytes, expected_count: int
) -> list[tuple[bytes, PinEntry]]:
    """Replay the key chain for a secret holder.

    Entries voted invalid are still located (their slot was consumed)
    but do not feed the previous-pin linkage; the chain continues from
    the last valid pin.  A missing slot raises with its chain index.
    """
    if len(sidechain_id) != DIGEST_LEN:
        raise MalformedInputError("sidechain id must be 32 bytes")
    found: list[tuple[bytes, PinEntry]] = []
    if expected_count <= 0:
        return found
    previous = ZERO_DIGEST
    state = prng_seed(secret)
    for index in range(expected_count):
        value, state = prng_next(state)
        key = compute_map_key(sidechain_id, previous, value)
        entry = get_pin_entry(cells, key)
        if entry is None:
            raise ChainBrokenError(index, key)
        found.append((key, entry))
        if entry.status != STATUS_VOTED_INVALID:
            previous = entry.pin
    return found


# -- ledger handler ----------------------------------------------------------------


def init_pinning_contract(cells: dict[bytes, bytes], deployer: bytes, init_args: tuple[bytes, ...]) -> None:
    cells[b"nprop"] = u64be(0)


def handle_pinning_call(cells, sender, call_name, args, ctx) -> bytes:
    block = ctx.block_number
    if call_name == "registerSidechain":
        sidechain_id, unmasked_raw, masked_raw, cfg_raw = args
        register_sidechain(
            cells, sender, sidechain_id,
            unmasked=sorted(_unpack_set(unmasked_raw, ADDRESS_LEN)),
            masked=sorted(_unpack_set(masked_raw, DIGEST_LEN)),
            voting=_unpack_voting(cfg_raw),
            block_number=block,
        )
        return b""
    if call_name == "postPin":
        map_key, pin = args
        post_pin(cells, sender, map_key, pin, block)
        return b""
    if call_name == "contestPin":
        previous_key, prng_value, sidechain_id = args
        return u64be(contest_pin(cells, sender, previous_key, prng_value, sidechain_id, block))
    if call_name == "unmask":
        sidechain_id, salt = args
        unmask(cells, sender, sidechain_id, salt)
        return b""
    if call_name == "propose":
        sidechain_id, kind, subject = args
        return u64be(propose(cells, sender, sidechain_id, kind.decode(), subject, block))
    if call_name == "vote":
        pid_raw, approve_raw = args
        cast_vote(cells, sender, struct.unpack(">Q", pid_raw)[0], approve_raw == b"\x01", block)
        return b""
    if call_name == "finalize":
        (pid_raw,) = args
        return finalize(cells, sender, struct.unpack(">Q", pid_raw)[0], block).encode()
    raise Revert(f"unknown pinning call {call_name!r}")

"""Exception types shared across the simulator.

Every failure that a contract, node, or network flow can signal is a
distinct class so tests and callers can match on the condition rather
than on message text.  All of them derive from :class:`SimError`.
"""

from __future__ import annotations


class SimError(Exception):
    """Base class for every simulator-defined failure."""


# --- crypto ---------------------------------------------------------------


class InvalidSeedError(SimError):
    """PRNG seeding material was empty."""


class InvalidKeyError(SimError):
    """Key material had the wrong length."""


class MalformedInputError(SimError):
    """Ciphertext or envelope bytes are structurally unusable."""


class TamperDetectedError(SimError):
    """Authenticated decryption failed; data or context was modified."""


# --- management ledger ----------------------------------------------------


class UnsupportedContractError(SimError):
    """Requested handler kind is not available on this ledger."""


class NonceGapError(SimError):
    """Transaction nonce does not extend the sender's sequence."""


class UnknownTargetError(SimError):
    """Transaction target is not a deployed contract."""


class SnapshotFormatError(SimError):
    """Ledger snapshot bytes do not parse."""


class Revert(SimError):
    """Raised inside a contract handler to abort the transaction.

    The ledger catches it, rolls the contract state back, and records
    the reason on the receipt.  `cause` keeps the original typed error.
    """

    def __init__(self, reason: str, cause: Exception | None = None):
        super().__init__(reason)
        self.reason = reason
        self.cause = cause


# --- ERA / org info -------------------------------------------------------


class InvalidDomainError(SimError):
    """Domain name violates the label rules."""


class InvalidNameError(SimError):
    """Attribute name is empty or malformed."""


class UnauthorizedCallerError(SimError):
    """Caller may not modify this record or contract."""


class InvalidRecordError(SimError):
    """Record carries neither a delegate nor an org-info reference."""


class ConfigurationError(SimError):
    """Resolver was invoked without any trusted root."""


class DomainNotFoundError(SimError):
    """No trusted root (nor delegate) lists the domain or any parent."""


# --- pinning contract -----------------------------------------------------


class DuplicateSidechainError(SimError):
    pass


class EmptyParticipantsError(SimError):
    pass


class CallerNotMemberError(SimError):
    pass


class KeyOccupiedError(SimError):
    """A pin already sits at this map key."""


class UnknownPreviousKeyError(SimError):
    pass


class DerivedKeyNotFoundError(SimError):
    """Contest arithmetic produced a key with no posted pin."""


class AlreadyContestedError(SimError):
    pass


class SidechainNotRegisteredError(SimError):
    pass


class NoMatchingMaskError(SimError):
    """Presented salt does not open any registered mask."""


class NotUnmaskedError(SimError):
    """Caller is not an unmasked participant of the sidechain."""


class DeadlinePassedError(SimError):
    pass


class VotingOpenError(SimError):
    """Finalize was attempted before the voting deadline elapsed."""


class AlreadyFinalizedError(SimError):
    pass


class UnknownProposalError(SimError):
    pass


class ChainBrokenError(SimError):
    """Pin chain verification found no entry at a derived key.

    `index` is the zero-based position of the first missing pin.
    """

    def __init__(self, index: int, map_key: bytes):
        super().__init__(f"pin chain broken at index {index}")
        self.index = index
        self.map_key = map_key


# --- sidechain node -------------------------------------------------------


class PermissionDeniedError(SimError):
    """API caller lacks the required call-class permission."""


class TxRejectedError(SimError):
    """Transaction sender or type fails the node's transaction policy."""


class UnknownContractError(SimError):
    pass


class ContractExistsError(SimError):
    pass


class GuardFailedError(SimError):
    """Guarded write found a different current value."""


class UnknownSidechainError(SimError):
    pass


class WrongSidechainError(SimError):
    """Persisted state belongs to a different sidechain than expected."""


class PendingTransactionsError(SimError):
    """Archive requested while transactions are still queued."""


class ArchivedError(SimError):
    """Operation addressed to an archived sidechain runtime."""


# --- network simulation ---------------------------------------------------


class UnresolvedDomainError(SimError):
    """One or more domains had no usable bootstrap entries."""

    def __init__(self, domains: list[str]):
        super().__init__("unresolved domains: " + ", ".join(sorted(domains)))
        self.domains = sorted(domains)


class EstablishmentRejectedError(SimError):
    """At least one invited organisation declined the sidechain."""

    def __init__(self, orgs: list[str]):
        super().__init__("establishment rejected by: " + ", ".join(sorted(orgs)))
        self.orgs = sorted(orgs)


class InitiatorNotAuthorizedError(SimError):
    """Local policy does not allow the initiator to establish sidechains."""


class NodeNotListedError(SimError):
    """Join indication for a node absent from the org's published info."""


class StaleBlockReferenceError(SimError):
    """Anchored block is older than the configured recency window."""


class UnauthorizedReaderError(SimError):
    """Reader's address is not permitted on the target sidechain."""


class LivelockError(SimError):
    """Delivery cap exceeded while draining the message queue."""


class UnknownNodeError(SimError):
    pass


# --- conformance ----------------------------------------------------------


class MissingRequirementError(SimError):
    """Registry lacks an entry for a catalogued requirement id."""


# --- scenario scripts -----------------------------------------------------


class ScriptError(SimError):
    """Scenario script failed to parse; carries the line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class AssertionFailure(SimError):
    """An assert action in a scenario script did not hold."""

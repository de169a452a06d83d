"""Registration authorities: domain records and organisation info.

Two contract kinds live here.  An ERA contract maps domain hashes to
records that point at either a delegate ERA (the org runs its own
authority for its subdomains) or an org-info contract holding the
actual bootstrap attributes.  Resolution walks a domain's suffixes from
most specific to least against every trusted root, follows delegates
for the original name, and keeps one provenance trail per hit so
answers from different roots stay distinguishable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .crypto import ADDRESS_LEN, DIGEST_LEN, keccak256
from .errors import (
    ConfigurationError,
    DomainNotFoundError,
    InvalidDomainError,
    InvalidNameError,
    InvalidRecordError,
    Revert,
    UnauthorizedCallerError,
)

# Attribute names every org is expected to publish, reverse-domain ordered.
NAME_ENODE = "org.ethereum.enode"
NAME_ENC_PUBKEY = "org.ethereum.enc-pubkey"
NAME_CREATOR_ENDPOINT = "org.ethereum.sidechain-creator-endpoint"
STANDARD_NAMES = (NAME_ENODE, NAME_ENC_PUBKEY, NAME_CREATOR_ENDPOINT)

MAX_DELEGATE_DEPTH = 8

_LABEL = re.compile(r"^[a-z0-9-]{1,63}$")

_OWNER_CELL = b"owner"


def validate_domain(domain: str) -> str:
    if not isinstance(domain, str) or not domain:
        raise InvalidDomainError("empty domain")
    for label in domain.split("."):
        if not _LABEL.match(label):
            raise InvalidDomainError(f"bad label {label!r} in {domain!r}")
    return domain


def domain_hash(domain: str) -> bytes:
    """Identifier of a domain in an ERA: keccak256 of its dotted form."""
    return keccak256(validate_domain(domain).encode())


def orginfo_name_key(name: str) -> bytes:
    """Storage key of an org-info attribute: keccak256 of the name."""
    if not isinstance(name, str) or not name:
        raise InvalidNameError("empty attribute name")
    return keccak256(name.encode())


@dataclass(frozen=True)
class EraRecord:
    domain_hash: bytes
    owner: bytes
    delegate_era: bytes | None = None
    org_info: bytes | None = None


# -- contract state, cell level ---------------------------------------------
#
# ERA:      rec:<dh>:w -> record owner (presence marker)
#           rec:<dh>:d -> delegate era contract id
#           rec:<dh>:o -> org-info contract id
# OrgInfo:  kv:<namekey> -> value


def init_era_contract(cells: dict[bytes, bytes], deployer: bytes, init_args: tuple[bytes, ...]) -> None:
    owner = init_args[0] if init_args else deployer
    if len(owner) != ADDRESS_LEN:
        raise UnauthorizedCallerError("era owner must be an address")
    cells[_OWNER_CELL] = owner


def era_set_record(cells: dict[bytes, bytes], caller: bytes, record: EraRecord) -> None:
    if len(record.domain_hash) != DIGEST_LEN:
        raise InvalidRecordError("domain hash must be 32 bytes")
    if record.delegate_era is None and record.org_info is None:
        raise InvalidRecordError("record needs a delegate or an org-info reference")
    existing_owner = cells.get(b"rec:" + record.domain_hash + b":w")
    if existing_owner is None:
        if caller != cells[_OWNER_CELL]:
            raise UnauthorizedCallerError("only the authority owner lists new domains")
    elif caller not in (cells[_OWNER_CELL], existing_owner):
        raise UnauthorizedCallerError("only the authority or record owner may update")
    prefix = b"rec:" + record.domain_hash
    cells[prefix + b":w"] = record.owner
    for suffix, value in ((b":d", record.delegate_era), (b":o", record.org_info)):
        if value is None:
            cells.pop(prefix + suffix, None)
        else:
            cells[prefix + suffix] = value


def era_get_record(cells: dict[bytes, bytes], dh: bytes) -> EraRecord | None:
    owner = cells.get(b"rec:" + dh + b":w")
    if owner is None:
        return None
    return EraRecord(
        domain_hash=dh,
        owner=owner,
        delegate_era=cells.get(b"rec:" + dh + b":d"),
        org_info=cells.get(b"rec:" + dh + b":o"),
    )


def handle_era_call(cells, sender, call_name, args, ctx) -> bytes:
    if call_name == "setRecord":
        dh, delegate, orginfo, owner = args
        record = EraRecord(
            domain_hash=dh,
            owner=owner,
            delegate_era=delegate or None,
            org_info=orginfo or None,
        )
        era_set_record(cells, sender, record)
        return b""
    raise Revert(f"unknown era call {call_name!r}")


def init_orginfo_contract(cells: dict[bytes, bytes], deployer: bytes, init_args: tuple[bytes, ...]) -> None:
    owner = init_args[0] if init_args else deployer
    if len(owner) != ADDRESS_LEN:
        raise UnauthorizedCallerError("org-info owner must be an address")
    cells[_OWNER_CELL] = owner


def orginfo_set(cells: dict[bytes, bytes], caller: bytes, name_key: bytes, value: bytes) -> None:
    if caller != cells[_OWNER_CELL]:
        raise UnauthorizedCallerError("only the org-info owner may publish")
    if len(name_key) != DIGEST_LEN:
        raise InvalidNameError("attribute key must be 32 bytes")
    cells[b"kv:" + name_key] = value


def orginfo_get(cells: dict[bytes, bytes], name_key: bytes) -> bytes | None:
    return cells.get(b"kv:" + name_key)


def handle_orginfo_call(cells, sender, call_name, args, ctx) -> bytes:
    if call_name == "set":
        name_key, value = args
        orginfo_set(cells, sender, name_key, value)
        return b""
    raise Revert(f"unknown org-info call {call_name!r}")


# -- resolution ---------------------------------------------------------------


@dataclass(frozen=True)
class Hit:
    name: str
    value: bytes
    root: bytes
    path: tuple[bytes, ...]  # eras traversed, root first


@dataclass
class ResolvedBootstrap:
    domain: str
    entries: dict[str, bytes] = field(default_factory=dict)
    hits: list[Hit] = field(default_factory=list)


def fallback_chain(domain: str) -> list[str]:
    """Lookup order for a k-label domain: all k suffixes, longest first."""
    labels = validate_domain(domain).split(".")
    return [".".join(labels[i:]) for i in range(len(labels))]


def _find_orginfo(ledger, era_cid: bytes, domain: str, depth: int, path: tuple[bytes, ...], seen: list):
    """Walk suffixes of `domain` in one ERA, following delegates.

    Appends to `seen` whenever any record exists, even a dead end; the
    caller uses that to tell an unlisted domain from an unhelpful one.
    """
    for candidate in fallback_chain(domain):
        dh = domain_hash(candidate)
        owner = ledger.read_contract(era_cid, b"rec:" + dh + b":w")
        if owner is None:
            continue
        seen.append(dh)
        delegate = ledger.read_contract(era_cid, b"rec:" + dh + b":d")
        if delegate is not None and depth < MAX_DELEGATE_DEPTH:
            found = _find_orginfo(ledger, delegate, domain, depth + 1, path + (delegate,), seen)
            if found is not None:
                return found
        orginfo = ledger.read_contract(era_cid, b"rec:" + dh + b":o")
        if orginfo is not None:
            return orginfo, path
    return None


def resolve(ledger, trusted_roots: list[bytes], domain: str, names: list[str]) -> ResolvedBootstrap:
    """Collect attribute values for `domain` from every trusted root.

    Values found under different roots are all retained in `hits` with
    their provenance; `entries` keeps the first hit per name in trusted
    root order.  A domain no root knows (even via parents) is an error.
    """
    if not trusted_roots:
        raise ConfigurationError("no trusted root authorities configured")
    validate_domain(domain)
    keys = {name: orginfo_name_key(name) for name in names}

    result = ResolvedBootstrap(domain=domain)
    seen: list[bytes] = []
    for root in trusted_roots:
        located = _find_orginfo(ledger, root, domain, 0, (root,), seen)
        if located is None:
            continue
        org_cid, path = located
        for name in names:
            value = ledger.read_contract(org_cid, b"kv:" + keys[name])
            if value is None:
                continue
            result.hits.append(Hit(name=name, value=value, root=root, path=path))
            result.entries.setdefault(name, value)
    if not seen:
        raise DomainNotFoundError(f"{domain} is not listed by any trusted root")
    return result

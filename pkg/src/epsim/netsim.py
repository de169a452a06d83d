"""Deterministic message-passing harness for multi-node scenarios.

Everything observable is a pure function of the scenario and the seed:
the queue is FIFO, every fan-out iterates in sorted order, and all key
material (secrets, salts, root keys) derives from the seed by hashing.
The trace log records one line per delivered message.

The management chain is modeled as a shared object every node can call
synchronously, like a public network; node-to-node protocol steps go
through the message queue.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from . import era, pinning, sidechain
from .crypto import ZERO_DIGEST, PrngState, derive_sidechain_key, keccak256, mask_participant, prng_next, prng_seed
from .encoding import u64be
from .errors import (
    ArchivedError,
    CallerNotMemberError,
    EstablishmentRejectedError,
    InitiatorNotAuthorizedError,
    LivelockError,
    MalformedInputError,
    NodeNotListedError,
    PermissionDeniedError,
    SimError,
    StaleBlockReferenceError,
    TxRejectedError,
    UnauthorizedReaderError,
    UnknownNodeError,
    UnknownSidechainError,
    UnresolvedDomainError,
)
from .ledger import Ledger
from .sidechain import (
    MODE_CIPHERTEXT_ONLY,
    MODE_PLAINTEXT,
    PermissionPolicy,
    SidechainRuntime,
    SidechainTx,
    check_api_permission,
    check_tx_permission,
    evaluate_establishment_request,
    make_sidechain_id,
    may_establish,
)

DEFAULT_DELIVERY_CAP = 1_000_000
ENQUEUE_CAP_PER_DELIVERY = 64

_OP_API_CLASS = {"deploy": "deploy", "put": "transact", "guarded-put": "transact", "cross-read": "transact"}
_OP_TX_TYPE = {"deploy": "deploy", "put": "update", "guarded-put": "update", "cross-read": "update"}


def org_address(domain: str) -> bytes:
    """Chain-level identity of an organisation; stable across seeds."""
    return keccak256(b"EPS-ADDR-V1" + domain.encode())[:20]


def _org_root_key(seed: int, domain: str) -> bytes:
    return keccak256(b"EPS-ROOT-V1" + u64be(seed) + domain.encode())


def _org_salt(seed: int, domain: str, sidechain_id: bytes) -> bytes:
    return keccak256(b"EPS-SALT-V1" + u64be(seed) + domain.encode() + sidechain_id)


def _sidechain_secret(seed: int, creation_nonce: int) -> bytes:
    return keccak256(b"EPS-SECRET-V1" + u64be(seed) + u64be(creation_nonce))


OPERATOR = org_address("network-operator.invalid")


@dataclass(frozen=True)
class Message:
    kind: str
    sender: str
    recipient: str
    payload: dict


@dataclass
class Node:
    node_id: str
    org: str
    address: bytes
    mode: str = MODE_PLAINTEXT
    policy: PermissionPolicy = field(default_factory=PermissionPolicy)
    online: bool = True
    runtimes: dict[bytes, SidechainRuntime] = field(default_factory=dict)
    salts: dict[bytes, bytes] = field(default_factory=dict)
    api_check_count: int = 0

    def _authorize(self, participant: str, call_class: str) -> None:
        # single funnel for every externally invokable node API
        self.api_check_count += 1
        if not check_api_permission(self.policy, participant, call_class):
            raise PermissionDeniedError(f"{participant} lacks {call_class!r} on {self.node_id}")

    def runtime(self, sidechain_id: bytes) -> SidechainRuntime:
        rt = self.runtimes.get(sidechain_id)
        if rt is None:
            raise UnknownSidechainError(f"{self.node_id} does not host this sidechain")
        return rt

    def submit_sidechain_tx(self, participant: str, sidechain_id: bytes, tx: SidechainTx) -> None:
        if tx.op not in _OP_API_CLASS:
            raise MalformedInputError(f"{tx.op!r} is not a submittable operation")
        self._authorize(participant, _OP_API_CLASS[tx.op])
        if not check_tx_permission(self.policy, tx.sender, _OP_TX_TYPE[tx.op]):
            raise TxRejectedError(f"account not permitted for {tx.op}")
        self.runtime(sidechain_id).queue(tx)

    def read_sidechain(self, participant: str, sidechain_id: bytes, contract: str, key: bytes) -> bytes:
        self._authorize(participant, "view")
        rt = self.runtime(sidechain_id)
        if rt.mode == MODE_CIPHERTEXT_ONLY or rt.state is None:
            raise PermissionDeniedError("no plaintext view on this replica")
        return rt.state.contracts.get(contract, {}).get(key, b"")

    def archive_sidechain(self, participant: str, sidechain_id: bytes, path: str) -> None:
        self._authorize(participant, "admin")
        self.runtime(sidechain_id).archive(path)


@dataclass
class SidechainMeta:
    domains: list[str]
    secret: bytes
    initiator: str
    creation_nonce: int


@dataclass
class _GuardianChain:
    prng: PrngState
    posted: list[tuple[bytes, bytes]] = field(default_factory=list)
    last_pinned_block: int = 0


class SimNetwork:
    def __init__(self, seed: int = 0):
        self.seed = seed
        self.nodes: dict[str, Node] = {}
        self.orgs: dict[str, list[str]] = {}
        self.mgmt = Ledger()
        self.pinning_cid = self.mgmt.deploy_contract("mgmt-pinning", (), OPERATOR)
        self.mgmt.produce_block()
        self.trusted_roots: list[bytes] = []
        self.orginfo_cids: dict[str, bytes] = {}
        self.queue: deque[Message] = deque()
        self.trace: list[str] = []
        self.step_count = 0
        self.sidechains: dict[bytes, SidechainMeta] = {}
        self._establish_nonce = 0
        self._pending_replies: dict[bytes, dict] = {}
        self.pin_policies: dict[tuple[str, bytes], int] = {}
        self._guardians: dict[tuple[str, bytes], _GuardianChain] = {}
        self._handlers = {
            "establish-request": self._on_establish_request,
            "establish-accept": self._on_establish_reply,
            "establish-deny": self._on_establish_reply,
            "join-confirm": self._on_join_confirm,
            "node-indication": self._on_node_indication,
            "node-accept": self._on_node_reply,
            "node-reject": self._on_node_reply,
            "block-proposal": self._on_block_proposal,
            "block-ack": self._on_block_ack,
            "cipher-state": self._on_cipher_state,
            "state-sync": self._on_state_sync,
        }

    # -- topology ----------------------------------------------------------

    def add_org(self, domain: str) -> None:
        era.validate_domain(domain)
        self.orgs.setdefault(domain, [])

    def add_node(self, org: str, node_id: str, mode: str = MODE_PLAINTEXT) -> Node:
        if org not in self.orgs:
            raise UnknownNodeError(f"org {org} not declared")
        if node_id in self.nodes:
            raise UnknownNodeError(f"node {node_id} already exists")
        node = Node(node_id=node_id, org=org, address=org_address(org), mode=mode)
        self.nodes[node_id] = node
        self.orgs[org].append(node_id)
        return node

    def node(self, node_id: str) -> Node:
        if node_id not in self.nodes:
            raise UnknownNodeError(node_id)
        return self.nodes[node_id]

    def set_online(self, node_id: str, online: bool) -> None:
        self.node(node_id).online = online

    # -- management-chain fixtures ------------------------------------------

    def add_root_era(self) -> bytes:
        cid = self.mgmt.deploy_contract("root-era", (OPERATOR,), OPERATOR)
        self.trusted_roots.append(cid)
        self.mgmt.produce_block()
        return cid

    def add_delegate_era(self) -> bytes:
        cid = self.mgmt.deploy_contract("delegate-era", (OPERATOR,), OPERATOR)
        self.mgmt.produce_block()
        return cid

    def org_info_contract(self, org: str) -> bytes:
        if org not in self.orginfo_cids:
            owner = org_address(org)
            self.orginfo_cids[org] = self.mgmt.deploy_contract("orginfo", (owner,), owner)
            self.mgmt.produce_block()
        return self.orginfo_cids[org]

    def list_domain(self, container_cid: bytes, domain: str, delegate: bytes | None = None) -> None:
        """Record `domain` in a registry contract.

        Points either straight at the domain's org-info or at a delegate
        registry that carries the authoritative record.
        """
        dh = era.domain_hash(domain)
        if delegate is not None:
            self.mgmt.call(OPERATOR, container_cid, "setRecord", (dh, delegate, b"", OPERATOR))
        else:
            cid = self.org_info_contract(domain)
            self.mgmt.call(OPERATOR, container_cid, "setRecord", (dh, b"", cid, org_address(domain)))
        self.mgmt.produce_block()

    def publish_orginfo(self, org: str, name: str, value: bytes) -> None:
        cid = self.org_info_contract(org)
        self.mgmt.call(org_address(org), cid, "set", (era.orginfo_name_key(name), value))
        self.mgmt.produce_block()

    def resolve_bootstrap(self, domain: str, names=era.STANDARD_NAMES):
        return era.resolve(self.mgmt, self.trusted_roots, domain, list(names))

    def _route_org(self, org: str, endpoint_name: str = era.NAME_CREATOR_ENDPOINT) -> str:
        """First online node an org advertises under an endpoint attribute."""
        got = self.resolve_bootstrap(org, [endpoint_name])
        value = got.entries.get(endpoint_name)
        if value is None:
            raise UnresolvedDomainError([org])
        for token in value.decode().split(","):
            node_id = token.strip().removeprefix("enode://").split("@")[0]
            node = self.nodes.get(node_id)
            if node is not None and node.online:
                return node_id
        raise UnresolvedDomainError([org])

    def _org_listed_nodes(self, org: str) -> list[str]:
        got = self.resolve_bootstrap(org, [era.NAME_ENODE])
        value = got.entries.get(era.NAME_ENODE, b"")
        out = []
        for token in value.decode().split(","):
            node_id = token.strip().removeprefix("enode://").split("@")[0]
            if node_id in self.nodes:
                out.append(node_id)
        return out

    # -- queue -------------------------------------------------------------

    def enqueue(self, sender: str, recipient: str, kind: str, payload: dict) -> None:
        self.queue.append(Message(kind, sender, recipient, payload))
        if self._deliver_budget is not None:
            self._deliver_budget -= 1
            if self._deliver_budget < 0:
                raise LivelockError("handler exceeded per-delivery enqueue cap")

    _deliver_budget: int | None = None

    def step(self) -> int:
        """Deliver exactly the messages already queued; returns how many."""
        count = len(self.queue)
        if count == 0:
            return 0
        self.step_count += 1
        for _ in range(count):
            message = self.queue.popleft()
            self._deliver(message)
        return count

    def run_until_idle(self, max_deliveries: int = DEFAULT_DELIVERY_CAP) -> int:
        delivered = 0
        while self.queue:
            delivered += self.step()
            if delivered > max_deliveries:
                raise LivelockError(f"exceeded {max_deliveries} deliveries in one run")
        return delivered

    def _deliver(self, message: Message) -> None:
        node = self.nodes.get(message.recipient)
        if node is None or not node.online:
            return  # explicit offline marking is the one sanctioned loss
        self.trace.append(
            f"step={self.step_count} from={message.sender} to={message.recipient} kind={message.kind}"
        )
        handler = self._handlers.get(message.kind)
        if handler is None:
            return
        self._deliver_budget = ENQUEUE_CAP_PER_DELIVERY
        try:
            handler(node, message)
        finally:
            self._deliver_budget = None

    def _mgmt_call_block(self, sender: bytes, call_name: str, args: tuple) -> "object":
        """Submit one management tx and settle it in its own block."""
        self.mgmt.call(sender, self.pinning_cid, call_name, args)
        block = self.mgmt.produce_block()
        return self.mgmt.receipts[block.number][-1]

    def _pin_cells(self) -> dict[bytes, bytes]:
        # always re-fetch: block commits swap the cell dict wholesale
        return self.mgmt.contracts[self.pinning_cid].cells

    # -- establishment -------------------------------------------------------

    def find_or_establish(self, initiator_node_id: str, domains: list[str]) -> bytes:
        initiator = self.node(initiator_node_id)
        if not may_establish(initiator.policy, initiator_node_id):
            raise InitiatorNotAuthorizedError(f"{initiator_node_id} may not establish sidechains")
        wanted = sorted(set(domains))
        for rt in initiator.runtimes.values():
            if sorted(rt.member_domains) == wanted and not rt.archived:
                return rt.sidechain_id

        unresolved = []
        endpoints: dict[str, str] = {}
        for domain in wanted:
            try:
                got = self.resolve_bootstrap(domain)
            except SimError:
                unresolved.append(domain)
                continue
            if any(name not in got.entries for name in era.STANDARD_NAMES):
                unresolved.append(domain)
                continue
            endpoints[domain] = self._route_org(domain)
        if unresolved:
            raise UnresolvedDomainError(unresolved)

        nonce = self._establish_nonce
        self._establish_nonce += 1
        sid = make_sidechain_id(wanted, nonce)
        self._pending_replies[sid] = {"accepts": {}, "denies": []}
        for domain in wanted:
            self.enqueue(
                initiator_node_id,
                endpoints[domain],
                "establish-request",
                {
                    "sidechain_id": sid,
                    "domains": wanted,
                    "initiator_org": initiator.org,
                    "initiator_node": initiator_node_id,
                },
            )
        self.run_until_idle()

        replies = self._pending_replies.pop(sid)
        if replies["denies"]:
            raise EstablishmentRejectedError(replies["denies"])

        secret = _sidechain_secret(self.seed, nonce)
        state_key = derive_sidechain_key(_org_root_key(self.seed, initiator.org), sid)
        unmasked, masked = [], []
        for org in wanted:
            accept = replies["accepts"][org]
            if accept["masked"]:
                masked.append(accept["mask"])
            else:
                unmasked.append(accept["address"])
        receipt = self._mgmt_call_block(
            initiator.address,
            "registerSidechain",
            (sid, b"".join(sorted(unmasked)), b"".join(sorted(masked)), pinning._pack_voting(
                pinning.VotingConfig(period_blocks=3, threshold_num=1, threshold_den=2)
            )),
        )
        if receipt.status != "ok":
            raise TxRejectedError(f"registration reverted: {receipt.reason}")

        for domain in wanted:
            self.enqueue(
                initiator_node_id,
                endpoints[domain],
                "join-confirm",
                {
                    "sidechain_id": sid,
                    "domains": wanted,
                    "secret": secret,
                    "state_key": state_key,
                },
            )
        self.run_until_idle()
        self.sidechains[sid] = SidechainMeta(
            domains=list(wanted), secret=secret, initiator=initiator_node_id, creation_nonce=nonce
        )
        return sid

    def handle_join_invite(self, node: Node, invite: dict) -> bool:
        """Responder-side policy decision for an establishment request."""
        return evaluate_establishment_request(
            node.policy, invite["initiator_org"], invite["initiator_node"]
        )

    def _on_establish_request(self, node: Node, message: Message) -> None:
        payload = message.payload
        sid = payload["sidechain_id"]
        if self.handle_join_invite(node, payload):
            is_initiator_org = node.org == payload["initiator_org"]
            masked = node.policy.pinning_masked and not is_initiator_org
            mask = None
            if masked:
                salt = _org_salt(self.seed, node.org, sid)
                mask = mask_participant(node.address, salt)
                for peer_id in self.orgs[node.org]:
                    self.nodes[peer_id].salts[sid] = salt
            self.enqueue(
                node.node_id,
                message.sender,
                "establish-accept",
                {"sidechain_id": sid, "org": node.org, "address": node.address,
                 "masked": masked, "mask": mask},
            )
        else:
            self.enqueue(
                node.node_id, message.sender, "establish-deny",
                {"sidechain_id": sid, "org": node.org},
            )

    def _on_establish_reply(self, node: Node, message: Message) -> None:
        pending = self._pending_replies.get(message.payload["sidechain_id"])
        if pending is None:
            return
        if message.kind == "establish-accept":
            pending["accepts"][message.payload["org"]] = message.payload
        else:
            pending["denies"].append(message.payload["org"])

    def _on_join_confirm(self, node: Node, message: Message) -> None:
        payload = message.payload
        sid = payload["sidechain_id"]
        for node_id in self._org_listed_nodes(node.org):
            peer = self.nodes[node_id]
            if not peer.online or sid in peer.runtimes:
                continue
            peer.runtimes[sid] = SidechainRuntime(
                sidechain_id=sid,
                member_domains=tuple(payload["domains"]),
                mode=peer.mode,
                key=payload["state_key"] if peer.mode == MODE_PLAINTEXT else None,
                secret=payload["secret"],
            )

    # -- node addition ----------------------------------------------------------

    def add_node_flow(self, org: str, new_node_id: str, sidechain_id: bytes) -> None:
        """Connect an org's additional node to a sidechain it belongs to.

        The org must have published the node in its org-info first;
        every member verifies the listing against the registry before
        opening a link, and one member replays state to the newcomer.
        """
        meta = self.sidechains.get(sidechain_id)
        if meta is None:
            raise UnknownSidechainError("no such sidechain established")
        if org not in meta.domains:
            raise CallerNotMemberError(f"{org} is not a member organisation")
        new_node = self.node(new_node_id)
        sender = self._route_org(org)
        key = b"flow:" + sidechain_id + new_node_id.encode()
        self._pending_replies[key] = {"accepts": [], "rejects": []}
        for member_node_id in self._member_nodes(sidechain_id):
            self.enqueue(
                sender, member_node_id, "node-indication",
                {"org": org, "node_id": new_node_id, "sidechain_id": sidechain_id, "flow": key},
            )
        self.run_until_idle()
        replies = self._pending_replies.pop(key)
        if replies["rejects"] or not replies["accepts"]:
            raise NodeNotListedError(f"{new_node_id} is not listed in {org}'s org-info")

        donor_id = next(
            (n for n in self._member_nodes(sidechain_id)
             if self.nodes[n].org == org and n != new_node_id),
            meta.initiator,
        )
        donor_rt = self.nodes[donor_id].runtime(sidechain_id)
        self.enqueue(
            donor_id, new_node_id, "state-sync",
            {
                "sidechain_id": sidechain_id,
                "domains": tuple(meta.domains),
                "secret": meta.secret,
                "state_key": donor_rt.key,
                "state": donor_rt.state.copy() if donor_rt.state else None,
                "history": {b: s.copy() for b, s in donor_rt.history.items()},
            },
        )
        self.run_until_idle()

    def _on_node_indication(self, node: Node, message: Message) -> None:
        payload = message.payload
        listed = payload["node_id"] in self._org_listed_nodes(payload["org"])
        kind = "node-accept" if listed else "node-reject"
        self.enqueue(node.node_id, message.sender, kind, dict(payload))

    def _on_node_reply(self, node: Node, message: Message) -> None:
        pending = self._pending_replies.get(message.payload["flow"])
        if pending is None:
            return
        bucket = "accepts" if message.kind == "node-accept" else "rejects"
        pending[bucket].append(message.sender)

    def _on_state_sync(self, node: Node, message: Message) -> None:
        payload = message.payload
        sid = payload["sidechain_id"]
        if sid in node.runtimes:
            return
        rt = SidechainRuntime(
            sidechain_id=sid,
            member_domains=payload["domains"],
            mode=node.mode,
            key=payload["state_key"] if node.mode == MODE_PLAINTEXT else None,
            secret=payload["secret"],
        )
        if node.mode == MODE_PLAINTEXT and payload["state"] is not None:
            rt.state = payload["state"]
            rt.history = payload["history"]
        node.runtimes[sid] = rt

    # -- block production ----------------------------------------------------------

    def _member_nodes(self, sidechain_id: bytes) -> list[str]:
        return sorted(
            node_id
            for node_id, node in self.nodes.items()
            if node.online and sidechain_id in node.runtimes and not node.runtimes[sidechain_id].archived
        )

    def _plaintext_members(self, sidechain_id: bytes) -> list[str]:
        return [n for n in self._member_nodes(sidechain_id) if self.nodes[n].mode == MODE_PLAINTEXT]

    def produce_sidechain_blocks(self, sidechain_id: bytes, count: int = 1) -> None:
        for _ in range(count):
            self._produce_one_block(sidechain_id)

    def _produce_one_block(self, sidechain_id: bytes) -> None:
        plaintext = self._plaintext_members(sidechain_id)
        if not plaintext:
            raise UnknownSidechainError("no online plaintext member can propose")
        members = self._member_nodes(sidechain_id)
        txs: list[SidechainTx] = []
        for node_id in members:
            rt = self.nodes[node_id].runtimes[sidechain_id]
            txs.extend(rt.pending)
            rt.pending = []
        proposer_id = plaintext[self.nodes[plaintext[0]].runtimes[sidechain_id].state.block_number % len(plaintext)]
        proposer_rt = self.nodes[proposer_id].runtimes[sidechain_id]
        block_number = proposer_rt.state.block_number + 1

        self._apply_block(proposer_id, sidechain_id, block_number, txs)
        for node_id in plaintext:
            if node_id != proposer_id:
                self.enqueue(
                    proposer_id, node_id, "block-proposal",
                    {"sidechain_id": sidechain_id, "block_number": block_number, "txs": list(txs)},
                )
        self.run_until_idle()

        blob = sidechain.encrypt_state(proposer_rt.state, proposer_rt.key)
        for node_id in members:
            if self.nodes[node_id].mode == MODE_CIPHERTEXT_ONLY:
                self.enqueue(
                    proposer_id, node_id, "cipher-state",
                    {"sidechain_id": sidechain_id, "block_number": block_number, "blob": blob},
                )
        self.run_until_idle()

        posted = False
        for (guardian_id, sid), every_n in sorted(self.pin_policies.items()):
            if sid != sidechain_id or block_number % every_n != 0:
                continue
            if guardian_id in self._member_nodes(sidechain_id):
                self._post_pin_for_block(guardian_id, sidechain_id, block_number)
                posted = True
        if posted:
            self.mgmt.produce_block()

    def _apply_block(self, node_id: str, sidechain_id: bytes, block_number: int, txs) -> None:
        rt = self.nodes[node_id].runtimes[sidechain_id]
        resolver = self._xread_resolver()
        for tx in txs:
            sidechain.apply_sidechain_tx(rt.state, tx, resolver)
        rt.state.block_number = block_number
        rt.history[block_number] = rt.state.copy()

    def _on_block_proposal(self, node: Node, message: Message) -> None:
        payload = message.payload
        sid = payload["sidechain_id"]
        rt = node.runtimes.get(sid)
        if rt is None or rt.archived or rt.state is None:
            return
        if rt.state.block_number + 1 != payload["block_number"]:
            return  # stale or duplicate proposal; desk-scale nodes never fork
        self._apply_block(node.node_id, sid, payload["block_number"], payload["txs"])
        self.enqueue(
            node.node_id, message.sender, "block-ack",
            {"sidechain_id": sid, "block_number": payload["block_number"]},
        )

    def _on_block_ack(self, node: Node, message: Message) -> None:
        pass  # commit is implicit once every reachable member has applied

    def _on_cipher_state(self, node: Node, message: Message) -> None:
        payload = message.payload
        rt = node.runtimes.get(payload["sidechain_id"])
        if rt is not None and not rt.archived:
            rt.cipher_blobs[payload["block_number"]] = payload["blob"]

    # -- pinning ----------------------------------------------------------------

    def guardian_pin_cycle(self, guardian_node_id: str, sidechain_id: bytes, every_n: int) -> list[bytes]:
        """Install a pin-every-N policy and post any pins already due.

        Returns the map keys posted by the catch-up sweep.  Later block
        production keeps pinning at the same cadence automatically.
        """
        if every_n < 1:
            raise MalformedInputError("pin cadence must be at least 1 block")
        guardian = self.node(guardian_node_id)
        rt = guardian.runtime(sidechain_id)
        self.pin_policies[(guardian_node_id, sidechain_id)] = every_n
        observed = rt.cipher_blobs if guardian.mode == MODE_CIPHERTEXT_ONLY else rt.history
        chain = self._guardian_chain(guardian_node_id, sidechain_id)
        due = [
            b for b in sorted(observed)
            if b >= 1 and b % every_n == 0 and b > chain.last_pinned_block
        ]
        keys = [self._post_pin_for_block(guardian_node_id, sidechain_id, b) for b in due]
        if keys:
            self.mgmt.produce_block()
        return keys

    def _guardian_chain(self, guardian_node_id: str, sidechain_id: bytes) -> _GuardianChain:
        key = (guardian_node_id, sidechain_id)
        if key not in self._guardians:
            secret = self.node(guardian_node_id).runtime(sidechain_id).secret
            self._guardians[key] = _GuardianChain(prng=prng_seed(secret))
        return self._guardians[key]

    def _post_pin_for_block(self, guardian_node_id: str, sidechain_id: bytes, block_number: int) -> bytes:
        guardian = self.node(guardian_node_id)
        rt = guardian.runtime(sidechain_id)
        chain = self._guardian_chain(guardian_node_id, sidechain_id)
        cells = self._pin_cells()
        previous = ZERO_DIGEST
        for posted_key, posted_pin in chain.posted:
            entry = pinning.get_pin_entry(cells, posted_key)
            if entry is not None and entry.status == pinning.STATUS_VOTED_INVALID:
                continue
            previous = posted_pin
        value, chain.prng = prng_next(chain.prng)
        map_key = pinning.compute_map_key(sidechain_id, previous, value)
        pin = keccak256(rt.observed_state_bytes(block_number))
        self.mgmt.call(guardian.address, self.pinning_cid, "postPin", (map_key, pin))
        chain.posted.append((map_key, pin))
        chain.last_pinned_block = block_number
        return map_key

    # -- cross-chain reads ----------------------------------------------------------

    def _xread_resolver(self):
        def resolve(sender: bytes, args: tuple[bytes, ...]) -> bytes:
            target_id, block_raw, query, window_raw = args
            return self._cross_chain_read_by_address(
                sender, target_id, int.from_bytes(block_raw, "big"),
                query.decode(), int.from_bytes(window_raw, "big"),
            )

        return resolve

    def cross_chain_read(
        self, origin_node_id: str, target_sidechain_id: bytes,
        target_block_number: int, query: str, recency_window: int,
    ) -> bytes:
        return self._cross_chain_read_by_address(
            self.node(origin_node_id).address, target_sidechain_id,
            target_block_number, query, recency_window,
        )

    def _cross_chain_read_by_address(
        self, reader: bytes, target_sidechain_id: bytes,
        target_block_number: int, query: str, recency_window: int,
    ) -> bytes:
        answerers = self._plaintext_members(target_sidechain_id)
        if not answerers:
            raise UnknownSidechainError("target sidechain has no reachable member")
        answerer = self.nodes[answerers[0]]
        if reader not in answerer.policy.account_whitelist:
            raise UnauthorizedReaderError("reader address is not permitted on the target")
        rt = answerer.runtimes[target_sidechain_id]
        head = rt.state.block_number
        if target_block_number > head:
            raise MalformedInputError("anchored block not yet produced")
        if head - target_block_number > recency_window:
            raise StaleBlockReferenceError(
                f"anchor {target_block_number} is outside window {recency_window} of head {head}"
            )
        contract, _, key = query.partition("/")
        snapshot = rt.history[target_block_number]
        return snapshot.contracts.get(contract, {}).get(key.encode(), b"")

    # -- organisation addition by vote ------------------------------------------------

    def add_org_by_vote(self, sidechain_id: bytes, org: str, new_node_id: str) -> int:
        """Admit a new organisation: propose, per-policy votes, finalize, sync.

        Each current unmasked participant votes according to its own
        establishment policy, mirroring how it would have answered at
        establishment time.  Returns the proposal id.
        """
        meta = self.sidechains.get(sidechain_id)
        if meta is None:
            raise UnknownSidechainError("no such sidechain established")
        if org in meta.domains:
            self.add_node_flow(org, new_node_id, sidechain_id)
            return -1
        initiator = self.node(meta.initiator)
        subject = org_address(org)
        receipt = self._mgmt_call_block(
            initiator.address, "propose",
            (sidechain_id, pinning.KIND_ADD_UNMASKED.encode(), subject),
        )
        if receipt.status != "ok":
            raise EstablishmentRejectedError([org])
        pid = int.from_bytes(receipt.result, "big")

        registration = pinning.get_registration(self._pin_cells(), sidechain_id)
        for member_org in sorted(meta.domains):
            if org_address(member_org) not in registration.unmasked:
                continue
            voter = self.nodes[self._route_org(member_org)]
            approve = evaluate_establishment_request(voter.policy, org, new_node_id)
            self.mgmt.call(
                voter.address, self.pinning_cid, "vote",
                (u64be(pid), b"\x01" if approve else b"\x00"),
            )
        self.mgmt.produce_block()
        deadline = pinning.get_proposal(self._pin_cells(), pid).deadline
        while self.mgmt.head().number <= deadline:
            self.mgmt.produce_block()
        receipt = self._mgmt_call_block(initiator.address, "finalize", (u64be(pid),))
        if receipt.status != "ok" or receipt.result != b"approved":
            raise EstablishmentRejectedError([org])

        meta.domains = sorted(meta.domains + [org])
        for node_id in self._member_nodes(sidechain_id):
            self.nodes[node_id].runtimes[sidechain_id].member_domains = tuple(meta.domains)
        self.add_node_flow(org, new_node_id, sidechain_id)
        return pid

    # -- roots for assertions ------------------------------------------------------

    def sidechain_root(self, sidechain_id: bytes) -> bytes:
        members = self._plaintext_members(sidechain_id)
        if not members:
            raise UnknownSidechainError("no plaintext member to report a root")
        return self.nodes[members[0]].runtimes[sidechain_id].state.state_root()

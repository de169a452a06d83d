"""Line-oriented scenario scripts: parse first, then drive a network.

A script declares topology (orgs, nodes, registry fixtures, policies)
and runs an ordered action list against it.  Parsing is strict: every
reference must point at an entity declared on an earlier line, so a
script that parses cannot trip over a missing name halfway through a
run.  Argument tokens starting with `0x` decode as hex bytes (`0x`
alone is the empty byte string); `@org` stands for that org's chain
address.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import era, pinning
from .crypto import prng_next, prng_seed
from .encoding import u64be
from .errors import AssertionFailure, ScriptError, SimError
from .netsim import SimNetwork, org_address
from .sidechain import (
    CALL_CLASSES,
    MODE_CIPHERTEXT_ONLY,
    MODE_PLAINTEXT,
    TX_TYPES,
    PermissionPolicy,
    SidechainTx,
)

_TX_OPS = ("deploy", "put", "guarded-put", "read")
_TX_ARG_COUNTS = {"put": 3, "guarded-put": 4, "read": 2}

_POLICY_LIST_KEYS = (
    "account.whitelist",
    "establish.org.whitelist",
    "establish.org.blacklist",
    "establish.api.whitelist",
    "establish.api.blacklist",
)


@dataclass(frozen=True)
class Statement:
    line_no: int
    kind: str
    args: tuple = ()


@dataclass
class _Symbols:
    orgs: set = field(default_factory=set)
    nodes: dict = field(default_factory=dict)  # node id -> org
    registries: set = field(default_factory=set)  # era-root and era-delegate ids
    aliases: set = field(default_factory=set)


def _fail(line_no: int, message: str) -> ScriptError:
    return ScriptError(line_no, message)


def _want(line_no: int, tokens, count: int, usage: str):
    if len(tokens) != count:
        raise _fail(line_no, f"expected `{usage}`")


def _need_org(line_no: int, sym: _Symbols, domain: str) -> str:
    if domain not in sym.orgs:
        raise _fail(line_no, f"org {domain!r} not declared yet")
    return domain


def _need_node(line_no: int, sym: _Symbols, node_id: str) -> str:
    if node_id not in sym.nodes:
        raise _fail(line_no, f"node {node_id!r} not declared yet")
    return node_id


def _need_alias(line_no: int, sym: _Symbols, alias: str) -> str:
    if alias not in sym.aliases:
        raise _fail(line_no, f"sidechain alias {alias!r} not established yet")
    return alias


def _need_chain(line_no: int, sym: _Symbols, token: str) -> str:
    if token == "mgmt":
        return token
    return _need_alias(line_no, sym, token)


def _uint(line_no: int, token: str, what: str) -> int:
    try:
        value = int(token, 10)
    except ValueError:
        raise _fail(line_no, f"{what} must be a non-negative integer, got {token!r}") from None
    if value < 0:
        raise _fail(line_no, f"{what} must be a non-negative integer")
    return value


def _hex32(line_no: int, token: str, what: str) -> bytes:
    try:
        raw = bytes.fromhex(token)
    except ValueError:
        raise _fail(line_no, f"{what} must be lowercase hex") from None
    if len(raw) != 32 or token != token.lower():
        raise _fail(line_no, f"{what} must be 32 bytes of lowercase hex")
    return raw


def parse_script(text: str) -> list[Statement]:
    """Parse and cross-check a scenario; raises with the offending line."""
    sym = _Symbols()
    statements: list[Statement] = []
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind, rest = tokens[0], tokens[1:]
        parser = _PARSERS.get(kind)
        if parser is None:
            raise _fail(line_no, f"unknown directive {kind!r}")
        statements.append(Statement(line_no, kind, parser(line_no, rest, sym)))
    return statements


# -- per-directive parsers (argument checks plus symbol bookkeeping) --------------


def _p_org(line_no, rest, sym):
    _want(line_no, rest, 1, "org <domain>")
    domain = rest[0]
    try:
        era.validate_domain(domain)
    except SimError as err:
        raise _fail(line_no, str(err)) from None
    if domain in sym.orgs:
        raise _fail(line_no, f"org {domain!r} declared twice")
    sym.orgs.add(domain)
    return (domain,)


def _p_node(line_no, rest, sym):
    if len(rest) not in (2, 3) or (len(rest) == 3 and rest[2] != "ciphertext-only"):
        raise _fail(line_no, "expected `node <org> <nodeId> [ciphertext-only]`")
    org = _need_org(line_no, sym, rest[0])
    node_id = rest[1]
    if node_id in sym.nodes:
        raise _fail(line_no, f"node {node_id!r} declared twice")
    sym.nodes[node_id] = org
    mode = MODE_CIPHERTEXT_ONLY if len(rest) == 3 else MODE_PLAINTEXT
    return (org, node_id, mode)


def _p_era_root(line_no, rest, sym):
    _want(line_no, rest, 1, "era-root <id>")
    if rest[0] in sym.registries:
        raise _fail(line_no, f"registry {rest[0]!r} declared twice")
    sym.registries.add(rest[0])
    return (rest[0],)


def _p_era_delegate(line_no, rest, sym):
    _want(line_no, rest, 1, "era-delegate <id>")
    if rest[0] in sym.registries:
        raise _fail(line_no, f"registry {rest[0]!r} declared twice")
    sym.registries.add(rest[0])
    return (rest[0],)


def _p_era_list(line_no, rest, sym):
    if len(rest) == 3 and rest[2] == "orginfo":
        delegate = None
    elif len(rest) == 4 and rest[2] == "delegate":
        if rest[3] not in sym.registries:
            raise _fail(line_no, f"registry {rest[3]!r} not declared yet")
        delegate = rest[3]
    else:
        raise _fail(line_no, "expected `era-list <registry> <domain> orginfo` or `... delegate <id>`")
    if rest[0] not in sym.registries:
        raise _fail(line_no, f"registry {rest[0]!r} not declared yet")
    try:
        era.validate_domain(rest[1])
    except SimError as err:
        raise _fail(line_no, str(err)) from None
    return (rest[0], rest[1], delegate)


def _p_orginfo(line_no, rest, sym):
    _want(line_no, rest, 3, "orginfo <domain> <name> <value>")
    try:
        era.validate_domain(rest[0])
    except SimError as err:
        raise _fail(line_no, str(err)) from None
    return (rest[0], rest[1], rest[2])


def _p_policy(line_no, rest, sym):
    if len(rest) < 2:
        raise _fail(line_no, "expected `policy <node> <key> <value-list>`")
    node_id = _need_node(line_no, sym, rest[0])
    key = rest[1]
    values = tuple(rest[2].split(",")) if len(rest) == 3 else ()
    if len(rest) > 3:
        raise _fail(line_no, "policy takes one comma-separated value list")
    if key.startswith("api."):
        bad = [v for v in values if v not in CALL_CLASSES]
        if bad:
            raise _fail(line_no, f"unknown api call classes {bad}")
    elif key.startswith("account.perms."):
        _check_account_token(line_no, sym, key[len("account.perms."):])
        bad = [v for v in values if v not in TX_TYPES]
        if bad:
            raise _fail(line_no, f"unknown transaction types {bad}")
    elif key == "account.whitelist":
        for v in values:
            _check_account_token(line_no, sym, v)
    elif key == "masked":
        if values not in (("true",), ("false",)):
            raise _fail(line_no, "masked takes true or false")
    elif key not in _POLICY_LIST_KEYS:
        raise _fail(line_no, f"unknown policy key {key!r}")
    return (node_id, key, values)


def _check_account_token(line_no, sym, token: str) -> None:
    if token.startswith("@"):
        _need_org(line_no, sym, token[1:])
        return
    try:
        raw = bytes.fromhex(token)
    except ValueError:
        raise _fail(line_no, f"account {token!r} is neither hex nor @org") from None
    if len(raw) != 20:
        raise _fail(line_no, "account tokens are 20-byte hex or @org")


def _p_establish(line_no, rest, sym):
    if len(rest) < 4 or rest[-2] != "->":
        raise _fail(line_no, "expected `establish <node> <domain>+ -> <alias>`")
    node_id = _need_node(line_no, sym, rest[0])
    domains = tuple(_need_org(line_no, sym, d) for d in rest[1:-2])
    alias = rest[-1]
    if alias == "mgmt" or alias in sym.aliases:
        raise _fail(line_no, f"alias {alias!r} unavailable")
    sym.aliases.add(alias)
    return (node_id, domains, alias)


def _p_deploy(line_no, rest, sym):
    _want(line_no, rest, 3, "deploy <alias> <node> <contract>")
    return (_need_alias(line_no, sym, rest[0]), _need_node(line_no, sym, rest[1]), rest[2])


def _sender(line_no, sym, token: str) -> bytes:
    if token.startswith("@"):
        return org_address(_need_org(line_no, sym, token[1:]))
    try:
        raw = bytes.fromhex(token)
    except ValueError:
        raise _fail(line_no, f"sender {token!r} is neither hex nor @org") from None
    if len(raw) != 20:
        raise _fail(line_no, "sender must be 20 bytes")
    return raw


def _arg_bytes(line_no, token: str) -> bytes:
    if token.startswith("0x"):
        try:
            return bytes.fromhex(token[2:])
        except ValueError:
            raise _fail(line_no, f"bad hex token {token!r}") from None
    return token.encode()


def _p_tx(line_no, rest, sym):
    if len(rest) < 4:
        raise _fail(line_no, "expected `tx <alias> <node> <sender> <op> <args>...`")
    alias = _need_alias(line_no, sym, rest[0])
    node_id = _need_node(line_no, sym, rest[1])
    sender = _sender(line_no, sym, rest[2])
    op = rest[3]
    if op not in _TX_OPS:
        raise _fail(line_no, f"unknown tx op {op!r}")
    raw_args = rest[4:]
    if op == "deploy":
        if not raw_args or len(raw_args) % 2 == 0:
            raise _fail(line_no, "deploy takes <contract> plus key/value pairs")
    elif len(raw_args) != _TX_ARG_COUNTS[op]:
        raise _fail(line_no, f"{op} takes {_TX_ARG_COUNTS[op]} argument(s)")
    contract = raw_args[0]
    args = tuple(_arg_bytes(line_no, t) for t in raw_args[1:])
    return (alias, node_id, sender, op, contract, args)


def _p_cross_read(line_no, rest, sym):
    _want(line_no, rest, 6, "cross-read <alias> <node> <target-alias> <block> <query> <window>")
    return (
        _need_alias(line_no, sym, rest[0]),
        _need_node(line_no, sym, rest[1]),
        _need_alias(line_no, sym, rest[2]),
        _uint(line_no, rest[3], "block"),
        rest[4],
        _uint(line_no, rest[5], "window"),
    )


def _p_pin(line_no, rest, sym):
    if len(rest) != 4 or rest[2] != "every":
        raise _fail(line_no, "expected `pin <alias> <guardianNode> every <n>`")
    return (
        _need_alias(line_no, sym, rest[0]),
        _need_node(line_no, sym, rest[1]),
        _uint(line_no, rest[3], "pin cadence"),
    )


def _p_contest(line_no, rest, sym):
    _want(line_no, rest, 3, "contest <node> <alias> <pin-index>")
    index = _uint(line_no, rest[2], "pin index")
    if index < 2:
        raise _fail(line_no, "pin index counts from 1 and needs a predecessor to reveal")
    return (_need_node(line_no, sym, rest[0]), _need_alias(line_no, sym, rest[1]), index)


def _p_vote(line_no, rest, sym):
    _want(line_no, rest, 3, "vote <node> <proposal> <yes|no>")
    if rest[2] not in ("yes", "no"):
        raise _fail(line_no, "vote takes yes or no")
    return (
        _need_node(line_no, sym, rest[0]),
        _uint(line_no, rest[1], "proposal id"),
        rest[2] == "yes",
    )


def _p_finalize(line_no, rest, sym):
    _want(line_no, rest, 2, "finalize <node> <proposal>")
    return (_need_node(line_no, sym, rest[0]), _uint(line_no, rest[1], "proposal id"))


def _p_produce(line_no, rest, sym):
    _want(line_no, rest, 2, "produce-blocks <alias|mgmt> <n>")
    return (_need_chain(line_no, sym, rest[0]), _uint(line_no, rest[1], "block count"))


def _p_assert_root(line_no, rest, sym):
    _want(line_no, rest, 2, "assert-root <alias|mgmt> <hex32>")
    return (_need_chain(line_no, sym, rest[0]), _hex32(line_no, rest[1], "expected root"))


def _p_assert_state(line_no, rest, sym):
    _want(line_no, rest, 4, "assert-state <alias> <contract> <key> <value>")
    return (
        _need_alias(line_no, sym, rest[0]),
        rest[1],
        _arg_bytes(line_no, rest[2]),
        _arg_bytes(line_no, rest[3]),
    )


def _p_archive(line_no, rest, sym):
    _want(line_no, rest, 3, "archive <alias> <node> <path>")
    return (_need_alias(line_no, sym, rest[0]), _need_node(line_no, sym, rest[1]), rest[2])


def _p_add_node(line_no, rest, sym):
    _want(line_no, rest, 3, "add-node <alias> <org> <nodeId>")
    return (
        _need_alias(line_no, sym, rest[0]),
        _need_org(line_no, sym, rest[1]),
        _need_node(line_no, sym, rest[2]),
    )


_PARSERS = {
    "org": _p_org,
    "node": _p_node,
    "era-root": _p_era_root,
    "era-delegate": _p_era_delegate,
    "era-list": _p_era_list,
    "orginfo": _p_orginfo,
    "policy": _p_policy,
    "establish": _p_establish,
    "deploy": _p_deploy,
    "tx": _p_tx,
    "cross-read": _p_cross_read,
    "pin": _p_pin,
    "contest": _p_contest,
    "vote": _p_vote,
    "finalize": _p_finalize,
    "produce-blocks": _p_produce,
    "assert-root": _p_assert_root,
    "assert-state": _p_assert_state,
    "archive": _p_archive,
    "add-node": _p_add_node,
}


# -- execution ----------------------------------------------------------------------


@dataclass
class _PolicyBuilder:
    api_acl: dict = field(default_factory=dict)
    account_whitelist: set = field(default_factory=set)
    account_perms: dict = field(default_factory=dict)
    establish_org_whitelist: set = field(default_factory=set)
    establish_org_blacklist: set = field(default_factory=set)
    establish_api_whitelist: set = field(default_factory=set)
    establish_api_blacklist: set = field(default_factory=set)
    pinning_masked: bool = False

    def build(self) -> PermissionPolicy:
        # whitelisted accounts default to every transaction type unless
        # the script narrows them explicitly
        perms = {a: frozenset(TX_TYPES) for a in self.account_whitelist}
        perms.update({a: frozenset(v) for a, v in self.account_perms.items()})
        return PermissionPolicy(
            api_acl={p: frozenset(c) for p, c in self.api_acl.items()},
            account_whitelist=frozenset(self.account_whitelist),
            account_perms=perms,
            establish_org_whitelist=frozenset(self.establish_org_whitelist),
            establish_org_blacklist=frozenset(self.establish_org_blacklist),
            establish_api_whitelist=frozenset(self.establish_api_whitelist),
            establish_api_blacklist=frozenset(self.establish_api_blacklist),
            pinning_masked=self.pinning_masked,
        )


class ScenarioRunner:
    """Execute parsed statements against one deterministic network."""

    def __init__(self, seed: int = 0, out_dir: str | None = None):
        self.net = SimNetwork(seed=seed)
        self.out_dir = out_dir
        self.registries: dict[str, bytes] = {}
        self.aliases: dict[str, bytes] = {}
        self.alias_order: list[str] = []
        self._builders: dict[str, _PolicyBuilder] = {}

    def run(self, statements: list[Statement]) -> None:
        for st in statements:
            handler = getattr(self, "_x_" + st.kind.replace("-", "_"))
            try:
                handler(st.line_no, *st.args)
            except (ScriptError, AssertionFailure):
                raise
            except SimError as err:
                raise AssertionFailure(
                    f"line {st.line_no}: {st.kind} failed: {type(err).__name__}: {err}"
                ) from err

    # declarations

    def _x_org(self, line_no, domain):
        self.net.add_org(domain)

    def _x_node(self, line_no, org, node_id, mode):
        self.net.add_node(org, node_id, mode=mode)
        self._builders[node_id] = _PolicyBuilder()

    def _x_era_root(self, line_no, name):
        self.registries[name] = self.net.add_root_era()

    def _x_era_delegate(self, line_no, name):
        self.registries[name] = self.net.add_delegate_era()

    def _x_era_list(self, line_no, registry, domain, delegate):
        self.net.list_domain(
            self.registries[registry],
            domain,
            delegate=self.registries[delegate] if delegate else None,
        )

    def _x_orginfo(self, line_no, domain, name, value):
        self.net.publish_orginfo(domain, name, value.encode())

    def _x_policy(self, line_no, node_id, key, values):
        builder = self._builders[node_id]
        if key.startswith("api."):
            builder.api_acl[key[len("api."):]] = set(values)
        elif key == "account.whitelist":
            builder.account_whitelist = {self._account(line_no, v) for v in values}
        elif key.startswith("account.perms."):
            builder.account_perms[self._account(line_no, key[len("account.perms."):])] = set(values)
        elif key == "masked":
            builder.pinning_masked = values[0] == "true"
        else:
            target = key.split(".")[1]  # org or api
            bucket = f"establish_{target}_{key.rsplit('.', 1)[1]}"
            setattr(builder, bucket, set(values))
        self.net.node(node_id).policy = builder.build()

    def _account(self, line_no, token: str) -> bytes:
        if token.startswith("@"):
            return org_address(token[1:])
        raw = bytes.fromhex(token)
        if len(raw) != 20:
            raise _fail(line_no, "account tokens are 20-byte hex or @org")
        return raw

    # actions

    def _x_establish(self, line_no, node_id, domains, alias):
        self.aliases[alias] = self.net.find_or_establish(node_id, list(domains))
        self.alias_order.append(alias)

    def _x_deploy(self, line_no, alias, node_id, contract):
        node = self.net.node(node_id)
        node.submit_sidechain_tx(
            node_id, self.aliases[alias], SidechainTx(node.address, "deploy", contract, ())
        )

    def _x_tx(self, line_no, alias, node_id, sender, op, contract, args):
        self.net.node(node_id).submit_sidechain_tx(
            node_id, self.aliases[alias], SidechainTx(sender, op, contract, args)
        )

    def _x_cross_read(self, line_no, alias, node_id, target, block, query, window):
        node = self.net.node(node_id)
        tx = SidechainTx(
            node.address, "cross-read", "",
            (self.aliases[target], u64be(block), query.encode(), u64be(window)),
        )
        node.submit_sidechain_tx(node_id, self.aliases[alias], tx)

    def _x_pin(self, line_no, alias, node_id, every_n):
        self.net.guardian_pin_cycle(node_id, self.aliases[alias], every_n)

    def _x_contest(self, line_no, node_id, alias, index):
        sid = self.aliases[alias]
        node = self.net.node(node_id)
        secret = node.runtime(sid).secret
        previous_key = pinning.pin_chain_verify(self.net._pin_cells(), sid, secret, index - 1)[-1][0]
        state = prng_seed(secret)
        for _ in range(index):
            value, state = prng_next(state)
        receipt = self.net._mgmt_call_block(node.address, "contestPin", (previous_key, value, sid))
        if receipt.status != "ok":
            raise AssertionFailure(f"line {line_no}: contest reverted: {receipt.reason}")

    def _x_vote(self, line_no, node_id, proposal_id, approve):
        node = self.net.node(node_id)
        receipt = self.net._mgmt_call_block(
            node.address, "vote", (u64be(proposal_id), b"\x01" if approve else b"\x00")
        )
        if receipt.status != "ok":
            raise AssertionFailure(f"line {line_no}: vote reverted: {receipt.reason}")

    def _x_finalize(self, line_no, node_id, proposal_id):
        node = self.net.node(node_id)
        receipt = self.net._mgmt_call_block(node.address, "finalize", (u64be(proposal_id),))
        if receipt.status != "ok":
            raise AssertionFailure(f"line {line_no}: finalize reverted: {receipt.reason}")

    def _x_produce_blocks(self, line_no, chain, count):
        if chain == "mgmt":
            for _ in range(count):
                self.net.mgmt.produce_block()
        else:
            self.net.produce_sidechain_blocks(self.aliases[chain], count)

    def _x_assert_root(self, line_no, chain, expected):
        actual = self.net.mgmt.state_root() if chain == "mgmt" else self.net.sidechain_root(self.aliases[chain])
        if actual != expected:
            raise AssertionFailure(
                f"line {line_no}: {chain} root is {actual.hex()}, expected {expected.hex()}"
            )

    def _x_assert_state(self, line_no, alias, contract, key, expected):
        sid = self.aliases[alias]
        members = self.net._plaintext_members(sid)
        if not members:
            raise AssertionFailure(f"line {line_no}: no plaintext member holds {alias}")
        state = self.net.nodes[members[0]].runtimes[sid].state
        actual = state.contracts.get(contract, {}).get(key, b"")
        if actual != expected:
            raise AssertionFailure(
                f"line {line_no}: {alias}/{contract}[{key!r}] is {actual!r}, expected {expected!r}"
            )

    def _x_archive(self, line_no, alias, node_id, path):
        import os

        if self.out_dir is not None and not os.path.isabs(path):
            path = os.path.join(self.out_dir, path)
        self.net.node(node_id).archive_sidechain(node_id, self.aliases[alias], path)

    def _x_add_node(self, line_no, alias, org, node_id):
        self.net.add_org_by_vote(self.aliases[alias], org, node_id)

    # reporting

    def roots_lines(self) -> list[str]:
        lines = [f"mgmt {self.net.mgmt.state_root().hex()}"]
        for alias in self.alias_order:
            sid = self.aliases[alias]
            runtime_root = self.net.sidechain_root(sid)
            lines.append(f"{alias} {runtime_root.hex()} id={sid.hex()}")
        return lines


def run_script_text(text: str, seed: int = 0, out_dir: str | None = None) -> ScenarioRunner:
    statements = parse_script(text)
    runner = ScenarioRunner(seed=seed, out_dir=out_dir)
    runner.run(statements)
    return runner

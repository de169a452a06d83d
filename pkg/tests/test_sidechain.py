import pytest
from hypothesis import given
from hypothesis import strategies as st

from epsim import sidechain as sc
from epsim.crypto import derive_sidechain_key
from epsim.errors import (
    ArchivedError,
    InvalidDomainError,
    MalformedInputError,
    PendingTransactionsError,
    TamperDetectedError,
    WrongSidechainError,
)
from reference_keccak import keccak256_reference

ROOT_KEY = b"\x07" * 32
ACCT_A = b"\xa1" * 20
ACCT_B = b"\xb2" * 20


def _sid(n=0):
    return sc.make_sidechain_id(["a.example.com", "b.example.com"], n)


def test_sidechain_id_is_order_insensitive_and_nonce_bound():
    import struct

    forward = sc.make_sidechain_id(["a.example.com", "b.example.com"], 7)
    reverse = sc.make_sidechain_id(["b.example.com", "a.example.com"], 7)
    assert forward == reverse
    assert forward == keccak256_reference(b"a.example.com,b.example.com" + struct.pack(">Q", 7))
    assert sc.make_sidechain_id(["a.example.com", "b.example.com"], 8) != forward


def test_sidechain_id_validates_input():
    with pytest.raises(MalformedInputError):
        sc.make_sidechain_id([], 0)
    with pytest.raises(InvalidDomainError):
        sc.make_sidechain_id(["UPPER.example.com"], 0)


# -- permissions -----------------------------------------------------------------


def test_api_permission_is_per_participant_class_set():
    policy = sc.PermissionPolicy(api_acl={"ops@a": {"view", "transact"}})
    assert sc.check_api_permission(policy, "ops@a", "view")
    assert sc.check_api_permission(policy, "ops@a", "transact")
    assert not sc.check_api_permission(policy, "ops@a", "admin")
    assert not sc.check_api_permission(policy, "stranger", "view")
    with pytest.raises(MalformedInputError):
        sc.check_api_permission(policy, "ops@a", "fly")


def test_tx_permission_needs_whitelist_and_type():
    policy = sc.PermissionPolicy(
        account_whitelist={ACCT_A}, account_perms={ACCT_A: {"update"}, ACCT_B: {"deploy"}}
    )
    assert sc.check_tx_permission(policy, ACCT_A, "update")
    assert not sc.check_tx_permission(policy, ACCT_A, "deploy")
    assert not sc.check_tx_permission(policy, ACCT_B, "deploy")  # perms without whitelist
    with pytest.raises(MalformedInputError):
        sc.check_tx_permission(policy, ACCT_A, "mint")


def test_establishment_gate_blacklist_beats_whitelist():
    policy = sc.PermissionPolicy(
        establish_org_whitelist={"a.example.com", "evil.example.com"},
        establish_org_blacklist={"evil.example.com"},
    )
    assert sc.evaluate_establishment_request(policy, "a.example.com", "n1")
    assert not sc.evaluate_establishment_request(policy, "evil.example.com", "n1")
    assert not sc.evaluate_establishment_request(policy, "unknown.example.com", "n1")


def test_establishment_gate_empty_whitelist_denies_all():
    assert not sc.evaluate_establishment_request(sc.PermissionPolicy(), "a.example.com", "n1")


def test_establishment_gate_can_ban_specific_participant():
    policy = sc.PermissionPolicy(
        establish_org_whitelist={"a.example.com"}, establish_api_blacklist={"rogue"}
    )
    assert sc.evaluate_establishment_request(policy, "a.example.com", "n1")
    assert not sc.evaluate_establishment_request(policy, "a.example.com", "rogue")


def test_initiator_gate():
    policy = sc.PermissionPolicy(establish_api_whitelist={"n1", "n2"}, establish_api_blacklist={"n2"})
    assert sc.may_establish(policy, "n1")
    assert not sc.may_establish(policy, "n2")
    assert not sc.may_establish(policy, "n3")
    assert not sc.may_establish(sc.PermissionPolicy(), "n1")


# -- transaction application ---------------------------------------------------------


def test_deploy_put_read_flow():
    state = sc.SidechainState()
    r = sc.apply_sidechain_tx(state, sc.SidechainTx(ACCT_A, "deploy", "house-purchase", (b"price", b"42")))
    assert r.status == "ok"
    r = sc.apply_sidechain_tx(state, sc.SidechainTx(ACCT_A, "put", "house-purchase", (b"buyer", b"B")))
    assert r.status == "ok"
    r = sc.apply_sidechain_tx(state, sc.SidechainTx(ACCT_B, "read", "house-purchase", (b"price",)))
    assert r.status == "ok" and r.result == b"42"
    r = sc.apply_sidechain_tx(state, sc.SidechainTx(ACCT_B, "read", "house-purchase", (b"missing",)))
    assert r.status == "ok" and r.result == b""


def test_deploy_twice_reverts():
    state = sc.SidechainState()
    sc.apply_sidechain_tx(state, sc.SidechainTx(ACCT_A, "deploy", "c", ()))
    r = sc.apply_sidechain_tx(state, sc.SidechainTx(ACCT_A, "deploy", "c", ()))
    assert r.status == "reverted" and "ContractExists" in r.reason


def test_unknown_contract_reverts():
    r = sc.apply_sidechain_tx(sc.SidechainState(), sc.SidechainTx(ACCT_A, "put", "ghost", (b"k", b"v")))
    assert r.status == "reverted" and "UnknownContract" in r.reason


def test_guarded_put_enforces_expected_value():
    state = sc.SidechainState()
    sc.apply_sidechain_tx(state, sc.SidechainTx(ACCT_A, "deploy", "c", (b"owner", b"alice")))
    before = state.serialize()
    r = sc.apply_sidechain_tx(
        state, sc.SidechainTx(ACCT_A, "guarded-put", "c", (b"owner", b"mallory", b"eve"))
    )
    assert r.status == "reverted" and "GuardFailed" in r.reason
    assert state.serialize() == before
    r = sc.apply_sidechain_tx(
        state, sc.SidechainTx(ACCT_A, "guarded-put", "c", (b"owner", b"alice", b"bob"))
    )
    assert r.status == "ok"
    assert state.contracts["c"][b"owner"] == b"bob"
    # guard against absence uses the empty value
    r = sc.apply_sidechain_tx(state, sc.SidechainTx(ACCT_A, "guarded-put", "c", (b"new", b"", b"v")))
    assert r.status == "ok"


kv = st.dictionaries(st.binary(min_size=1, max_size=8), st.binary(max_size=8), max_size=4)


@given(st.dictionaries(st.text("abcz", min_size=1, max_size=6), kv, max_size=3), st.integers(0, 2**40))
def test_state_serialization_roundtrip(contracts, block_number):
    state = sc.SidechainState(block_number=block_number, contracts=contracts)
    parsed = sc.SidechainState.parse(state.serialize())
    assert parsed.block_number == state.block_number
    assert parsed.contracts == state.contracts
    assert parsed.state_root() == state.state_root()


def test_state_root_is_keccak_of_serialization():
    state = sc.SidechainState(block_number=3, contracts={"c": {b"k": b"v"}})
    assert state.state_root() == keccak256_reference(state.serialize())


# -- sealed persistence ----------------------------------------------------------------


def _state():
    state = sc.SidechainState(block_number=5, contracts={"c": {b"k": b"v", b"k2": b"v2"}})
    return state


def test_persist_load_roundtrip(tmp_path):
    sid = _sid()
    key = derive_sidechain_key(ROOT_KEY, sid)
    state = _state()
    path = tmp_path / "state.epss"
    sc.persist_state(state, key, str(path))
    raw = path.read_bytes()
    assert raw[:4] == b"EPSS" and raw[4:6] == b"\x00\x01" and raw[6:38] == sid
    loaded = sc.load_state(sid, key, str(path))
    assert loaded.state_root() == state.state_root()
    assert loaded.block_number == 5


def test_sealing_is_deterministic_across_members():
    sid = _sid()
    key = derive_sidechain_key(ROOT_KEY, sid)
    assert sc.encrypt_state(_state(), key) == sc.encrypt_state(_state(), key)
    assert sc.state_nonce(sid, 5) == keccak256_reference(sid + (5).to_bytes(8, "big"))[:12]


def test_any_bit_flip_is_rejected(tmp_path):
    sid = _sid()
    key = derive_sidechain_key(ROOT_KEY, sid)
    blob = bytearray(sc.encrypt_state(_state(), key))
    # flip one bit in the nonce, ciphertext body, and tag regions
    for pos in (40, 60, len(blob) - 1):
        mutated = bytearray(blob)
        mutated[pos] ^= 0x01
        with pytest.raises(TamperDetectedError):
            sc.decrypt_state(bytes(mutated), key, sid)


def test_wrong_sidechain_file_detected_before_decryption():
    sid_a, sid_b = _sid(0), _sid(1)
    key_b = derive_sidechain_key(ROOT_KEY, sid_b)
    state_b = _state()
    blob_b = sc.encrypt_state(state_b, key_b)
    with pytest.raises(WrongSidechainError):
        sc.decrypt_state(blob_b, key_b, sid_a)


def test_cross_sidechain_key_fails_authentication():
    sid_a, sid_b = _sid(0), _sid(1)
    key_a = derive_sidechain_key(ROOT_KEY, sid_a)
    key_b = derive_sidechain_key(ROOT_KEY, sid_b)
    assert key_a.key != key_b.key  # one root key, separated per sidechain
    blob_a = sc.encrypt_state(_state(), key_a)
    with pytest.raises(TamperDetectedError):
        sc.decrypt_state(blob_a, sc.SidechainKey(key_b.key, sid_a), sid_a)


def test_malformed_envelope_rejected():
    sid = _sid()
    key = derive_sidechain_key(ROOT_KEY, sid)
    with pytest.raises(MalformedInputError):
        sc.decrypt_state(b"EPSS\x00\x01short", key, sid)
    good = sc.encrypt_state(_state(), key)
    with pytest.raises(MalformedInputError):
        sc.decrypt_state(b"NOPE" + good[4:], key, sid)
    with pytest.raises(MalformedInputError):
        sc.decrypt_state(good[:4] + b"\x00\x09" + good[6:], key, sid)


# -- runtime ------------------------------------------------------------------------


def test_runtime_archive_roundtrip(tmp_path):
    sid = _sid()
    key = derive_sidechain_key(ROOT_KEY, sid)
    rt = sc.SidechainRuntime(sid, ("a.example.com", "b.example.com"), key=key, secret=b"s")
    sc.apply_sidechain_tx(rt.state, sc.SidechainTx(ACCT_A, "deploy", "c", (b"k", b"v")))
    rt.state.block_number = 1
    root = rt.state.state_root()
    path = tmp_path / "archive.epss"
    rt.archive(str(path))
    assert rt.archived and rt.state is None
    with pytest.raises(ArchivedError):
        rt.queue(sc.SidechainTx(ACCT_A, "put", "c", (b"k", b"w")))
    restored = sc.load_state(sid, key, str(path))
    assert restored.state_root() == root


def test_archive_refuses_with_pending(tmp_path):
    sid = _sid()
    key = derive_sidechain_key(ROOT_KEY, sid)
    rt = sc.SidechainRuntime(sid, ("a.example.com",), key=key, secret=b"s")
    rt.queue(sc.SidechainTx(ACCT_A, "deploy", "c", ()))
    with pytest.raises(PendingTransactionsError):
        rt.archive(str(tmp_path / "x.epss"))


def test_ciphertext_only_runtime_holds_no_key(tmp_path):
    sid = _sid()
    key = derive_sidechain_key(ROOT_KEY, sid)
    rt = sc.SidechainRuntime(
        sid, ("a.example.com",), mode=sc.MODE_CIPHERTEXT_ONLY, key=key, secret=b"s"
    )
    assert rt.key is None  # mode wins over a mistakenly supplied key
    blob = sc.encrypt_state(_state(), key)
    rt.cipher_blobs[5] = blob
    assert rt.observed_state_bytes(5) == blob
    path = tmp_path / "guardian.epss"
    rt.archive(str(path))
    assert path.read_bytes() == blob


def test_plaintext_observed_state_is_the_root():
    sid = _sid()
    key = derive_sidechain_key(ROOT_KEY, sid)
    rt = sc.SidechainRuntime(sid, ("a.example.com",), key=key, secret=b"s")
    assert rt.observed_state_bytes(0) == rt.history[0].state_root()

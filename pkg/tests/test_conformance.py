"""Requirement registry shape and report rendering."""

import json
import re
from pathlib import Path

import pytest

from epsim.conformance import (
    BLOCKCHAIN_IDS,
    EXTERNAL_IDS,
    REGISTRY,
    SIDECHAIN_IDS,
    STATUS_COVERED,
    STATUS_OUT_OF_SCOPE,
    STATUS_PARTIAL,
    RequirementEntry,
    _symbol,
    emit_conformance_report,
    validate_registry,
    write_report,
)
from epsim.errors import MissingRequirementError

TESTS_DIR = Path(__file__).parent


def test_registry_is_complete_and_unique():
    validate_registry()
    ids = [e.req_id for e in REGISTRY]
    assert sorted(ids) == sorted(set(ids))
    assert set(ids) == set(BLOCKCHAIN_IDS + SIDECHAIN_IDS + EXTERNAL_IDS)


def test_catalogue_counts():
    # twelve blockchain-level and fifteen sidechain-level identifiers
    assert len(BLOCKCHAIN_IDS) == 12
    assert len(SIDECHAIN_IDS) == 15


def test_missing_identifier_is_detected():
    trimmed = tuple(e for e in REGISTRY if e.req_id != "SC-6a-SidechainArchive")
    with pytest.raises(MissingRequirementError, match="SC-6a"):
        validate_registry(trimmed)


def test_duplicate_identifier_is_detected():
    doubled = REGISTRY + (REGISTRY[0],)
    with pytest.raises(MissingRequirementError, match="appears 2"):
        validate_registry(doubled)


def test_out_of_scope_requires_rationale():
    with pytest.raises(MissingRequirementError):
        RequirementEntry("BC-5d-Whisper", "SHOULD", STATUS_OUT_OF_SCOPE)


def test_covered_requires_test_ids():
    with pytest.raises(MissingRequirementError):
        RequirementEntry("SC-4a-Pinning", "MUST", STATUS_COVERED)


def test_every_referenced_test_actually_exists():
    """Coverage claims must point at real test functions."""
    for entry in REGISTRY:
        for test_id in entry.test_ids:
            file_name, _, func = test_id.partition("::")
            source = (TESTS_DIR / file_name).read_text()
            assert re.search(rf"^def {func}\(", source, re.M), test_id


def test_report_symbols_follow_status():
    text, records = emit_conformance_report()
    by_id = {r["id"]: r for r in records}
    for req_id in ("SC-4a-Pinning", "SC-4d-PinningContesting", "BC-1d-PrivateStateAuthenticatedEncryption"):
        assert by_id[req_id]["symbol"] == "✓"
    for req_id in (
        "BC-2a-OrganisationallyAwareConsensus",
        "BC-5a-OffchainOrgToOrg",
        "BC-5b-OffchainAll",
        "BC-5c-OffchianAntiSpam",
        "BC-5d-Whisper",
    ):
        assert by_id[req_id]["symbol"] == "N-A"
        assert by_id[req_id]["rationale"]
    assert len(records) == len(REGISTRY)
    # the text table groups the three families
    assert "Blockchain requirements" in text
    assert "Sidechain requirements" in text
    assert "Enterprise client spec cross-references" in text


def test_failing_test_flips_row_to_cross():
    entry = next(e for e in REGISTRY if e.req_id == "SC-4a-Pinning")
    results = {tid: True for e in REGISTRY for tid in e.test_ids}
    results[entry.test_ids[0]] = False
    _, records = emit_conformance_report(test_results=results)
    by_id = {r["id"]: r for r in records}
    assert by_id["SC-4a-Pinning"]["symbol"] == "✗"
    assert by_id["SC-4b-PinningParticipantShielding"]["symbol"] == "✓"


def test_unknown_results_count_as_failures():
    _, records = emit_conformance_report(test_results={})
    assert all(r["symbol"] != "✓" for r in records if r["status"] == STATUS_COVERED)


def test_partial_status_renders_cross():
    entry = RequirementEntry("SC-4a-Pinning", "MUST", STATUS_PARTIAL, ("t",))
    assert _symbol(entry, None) == "✗"


def test_write_report_emits_text_and_json(tmp_path):
    text_path = tmp_path / "conformance.txt"
    json_path = tmp_path / "conformance.json"
    write_report(str(text_path), str(json_path))
    assert "SC-4g-MultipleSidechains" in text_path.read_text()
    records = json.loads(json_path.read_text())
    assert {r["id"] for r in records} == set(BLOCKCHAIN_IDS + SIDECHAIN_IDS + EXTERNAL_IDS)


def test_report_is_deterministic():
    assert emit_conformance_report() == emit_conformance_report()

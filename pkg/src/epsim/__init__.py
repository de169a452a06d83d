"""Desk-scale simulator for permissioned, encrypted sidechain networks.

The package models a public management chain (registries, pinning,
voting) plus private sidechains whose state never leaves the member
set unencrypted.  All behavior is deterministic given a scenario and
a seed.
"""

from .crypto import (
    derive_sidechain_key,
    keccak256,
    mask_participant,
    prng_next,
    prng_seed,
    verify_unmask,
)
from .errors import SimError
from .keccak import active_backend, available_backends, set_backend
from .ledger import Ledger
from .netsim import SimNetwork
from .pinning import compute_map_key, pin_chain_verify
from .sidechain import SidechainRuntime, SidechainState, SidechainTx, make_sidechain_id

__version__ = "0.1.0"

__all__ = [
    "Ledger",
    "SimError",
    "SimNetwork",
    "SidechainRuntime",
    "SidechainState",
    "SidechainTx",
    "active_backend",
    "available_backends",
    "compute_map_key",
    "derive_sidechain_key",
    "keccak256",
    "make_sidechain_id",
    "mask_participant",
    "pin_chain_verify",
    "prng_next",
    "prng_seed",
    "set_backend",
    "verify_unmask",
]

"""Keccak-256 with original (pre-standardisation) padding.

This is the Ethereum flavour of Keccak: rate 1088, capacity 512, and the
0x01 multi-rate padding byte rather than the 0x06 domain byte the later
FIPS 202 standard added.  Every digest, commitment, and derived key in
the simulator funnels through :func:`keccak256`, so the f[1600]
permutation is the one genuinely hot kernel in the package.

Two interchangeable permutation backends are provided:

* ``numba`` - scalar loops compiled with ``@njit`` (default when numba
  imports cleanly),
* ``numpy`` - a vectorised fallback with no compilation step.

Selection: set ``EPSIM_KECCAK_BACKEND=numpy`` (or ``numba``) before
import, or call :func:`set_backend` at runtime.  ``benchmarks/keccak_bench.py``
compares the two.
"""

from __future__ import annotations

import os

import numpy as np

ENV_BACKEND = "EPSIM_KECCAK_BACKEND"

_RATE = 136  # bytes absorbed per permutation at 256-bit security

_RC = np.array(
    [
        0x0000000000000001, 0x0000000000008082, 0x800000000000808A,
        0x8000000080008000, 0x000000000000808B, 0x0000000080000001,
        0x8000000080008081, 0x8000000000008009, 0x000000000000008A,
        0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
        0x000000008000808B, 0x800000000000008B, 0x8000000000008089,
        0x8000000000008003, 0x8000000000008002, 0x8000000000000080,
        0x000000000000800A, 0x800000008000000A, 0x8000000080008081,
        0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
    ],
    dtype=np.uint64,
)

# Lane (x, y) lives at flat index x + 5y.  Rotation offsets are laid out
# the same way; the pi step sends flat index f to _PI_DST[f].
_ROT = np.array(
    [
        0, 1, 62, 28, 27,
        36, 44, 6, 55, 20,
        3, 10, 43, 25, 39,
        41, 45, 15, 21, 8,
        18, 2, 61, 56, 14,
    ],
    dtype=np.uint64,
)
_ROT_INV = (np.uint64(64) - _ROT) % np.uint64(64)
_PI_DST = np.array(
    [(f // 5) + 5 * ((2 * (f % 5) + 3 * (f // 5)) % 5) for f in range(25)],
    dtype=np.int64,
)

_ONE = np.uint64(1)
_SIXTY_THREE = np.uint64(63)


def _permute_numpy(lanes: np.ndarray) -> None:
    """Vectorised Keccak-f[1600]; mutates the 25-lane uint64 state."""
    for rc in _RC:
        grid = lanes.reshape(5, 5)  # grid[y][x]
        c = np.bitwise_xor.reduce(grid, axis=0)
        c1 = np.roll(c, -1)
        d = np.roll(c, 1) ^ ((c1 << _ONE) | (c1 >> _SIXTY_THREE))
        grid ^= d[None, :]
        b = np.empty_like(lanes)
        b[_PI_DST] = (lanes << _ROT) | (lanes >> _ROT_INV)
        bg = b.reshape(5, 5)
        lanes[:] = (bg ^ (~np.roll(bg, -1, axis=1) & np.roll(bg, -2, axis=1))).reshape(25)
        lanes[0] ^= rc


def _permute_loops(lanes):  # pragma: no cover - exercised via numba
    c = np.empty(5, np.uint64)
    d = np.empty(5, np.uint64)
    b = np.empty(25, np.uint64)
    one = np.uint64(1)
    sixty_three = np.uint64(63)
    sixty_four = np.uint64(64)
    for r in range(24):
        for x in range(5):
            c[x] = lanes[x] ^ lanes[x + 5] ^ lanes[x + 10] ^ lanes[x + 15] ^ lanes[x + 20]
        for x in range(5):
            t = c[(x + 1) % 5]
            d[x] = c[(x + 4) % 5] ^ ((t << one) | (t >> sixty_three))
        for f in range(25):
            lanes[f] ^= d[f % 5]
        for f in range(25):
            rot = _ROT[f]
            v = lanes[f]
            if rot == 0:
                b[_PI_DST[f]] = v
            else:
                b[_PI_DST[f]] = (v << rot) | (v >> (sixty_four - rot))
        for y in range(5):
            o = 5 * y
            for x in range(5):
                lanes[o + x] = b[o + x] ^ (~b[o + (x + 1) % 5] & b[o + (x + 2) % 5])
        lanes[0] ^= _RC[r]


_BACKENDS: dict[str, object] = {"numpy": _permute_numpy}
_active = "numpy"
_permute = _permute_numpy


def _load_numba() -> None:
    if "numba" in _BACKENDS:
        return
    from numba import njit

    _BACKENDS["numba"] = njit(cache=True)(_permute_loops)


def set_backend(name: str) -> str:
    """Activate a permutation backend; returns the previously active one."""
    global _active, _permute
    if name == "numba":
        _load_numba()
    if name not in _BACKENDS:
        raise ValueError(f"unknown keccak backend: {name!r}")
    previous = _active
    _active, _permute = name, _BACKENDS[name]
    return previous


def active_backend() -> str:
    return _active


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def keccak_f1600(lanes: np.ndarray) -> None:
    """Run the permutation in place on a (25,) uint64 lane array."""
    _permute(lanes)


def keccak256(data: bytes) -> bytes:
    """Digest `data` to 32 bytes using original Keccak padding."""
    lanes = np.zeros(25, dtype=np.uint64)
    pad = _RATE - (len(data) % _RATE)
    if pad == 1:
        padded = data + b"\x81"
    else:
        padded = data + b"\x01" + b"\x00" * (pad - 2) + b"\x80"
    for off in range(0, len(padded), _RATE):
        lanes[:17] ^= np.frombuffer(padded, dtype="<u8", count=17, offset=off)
        _permute(lanes)
    return lanes[:4].astype("<u8").tobytes()


def _init_from_env() -> None:
    choice = os.environ.get(ENV_BACKEND, "").strip().lower()
    if choice == "numpy":
        return
    if choice not in ("", "numba"):
        raise ValueError(f"{ENV_BACKEND} must be 'numba' or 'numpy', got {choice!r}")
    try:
        set_backend("numba")
    except ImportError:
        if choice == "numba":
            raise
        # numba missing entirely: stay on the numpy fallback


_init_from_env()

"""Counter-based random streams (Philox4x64-10) for the simulators.

Every draw is a pure function of ``(key, counter)``. The key is
``(seed, replica)``; the counter is ``(draw_index + 1, stream_code, 0, 0)``,
where the stream code names one Poisson family and its edge or site index.
Fixing the skeleton streams while redrawing the bulk streams is therefore a
matter of changing the key used for the bulk families only.

The block function reproduces numpy's ``Philox`` bit generator bit-for-bit;
the tests compare the two.
"""

from __future__ import annotations

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# Stream families.
LEFT = 1          # boundary clock at site 1
RIGHT = 2         # boundary clock at site N
GREEN = 3         # edge clocks acting when a green individual is involved
BULK = 4          # edge clocks acting on two non-green individuals
EDGE = 5          # edge clocks of the plain exclusion process
LEFT_MARK = 6     # Bernoulli(p) marks of the site-1 resamplings
RIGHT_MARK = 7    # Bernoulli(q) marks of the site-N resamplings
FIELD_B = 8       # Bernoulli(p) field for blue sites of the pushforward
FIELD_G = 9       # Bernoulli(q) field for green sites of the pushforward
WALK = 10         # single random walk of the hitting experiment

_MASK64 = (1 << 64) - 1


def stream_code(family: int, index: int = 0) -> int:
    return (family << 32) | index


def seed_key(seed: int) -> np.uint64:
    """Reduce an arbitrary integer seed to the 64-bit key word."""
    return np.uint64(int(seed) & _MASK64)


@nb.njit(inline="always")
def _mulhilo(a, b):
    a_lo = a & _LO32
    a_hi = a >> _S32
    b_lo = b & _LO32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _LO32) + (hl & _LO32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


@nb.njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox block on a 256-bit counter and 128-bit key."""
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@nb.njit(cache=True)
def uniform(k0, k1, code, idx):
    """The ``idx``-th uniform on [0, 1) of stream ``code`` under key (k0, k1)."""
    x0, _, _, _ = philox4x64(np.uint64(idx + 1), np.uint64(code), np.uint64(0), np.uint64(0), k0, k1)
    return np.float64(x0 >> _S11) * _INV53


@nb.njit(cache=True)
def exponential(k0, k1, code, idx, rate):
    return -np.log1p(-uniform(k0, k1, code, idx)) / rate


@nb.njit(cache=True)
def stream_times(k0, k1, code, rate, horizon):
    """Points of a rate-``rate`` Poisson process on [0, horizon], sorted."""
    if rate <= 0.0 or horizon <= 0.0:
        return np.empty(0, np.float64)
    cap = 16
    out = np.empty(cap, np.float64)
    n = 0
    t = 0.0
    while True:
        t += exponential(k0, k1, code, n, rate)
        if t > horizon:
            break
        if n == cap:
            cap *= 2
            grown = np.empty(cap, np.float64)
            grown[:n] = out[:n]
            out = grown
        out[n] = t
        n += 1
    return out[:n].copy()


def uniforms(seed: int, replica: int, family: int, index: int, count: int) -> np.ndarray:
    """First ``count`` uniforms of a named stream (convenience for Python callers)."""
    k0, k1 = seed_key(seed), np.uint64(replica)
    code = stream_code(family, index)
    return np.array([uniform(k0, k1, code, i) for i in range(count)])


def philox_raw(key: tuple[int, int], counter: tuple[int, int, int, int]) -> tuple[int, ...]:
    """Raw 64-bit outputs of one Philox block, for cross-checks."""
    c = [np.uint64(v) for v in counter]
    k = [np.uint64(v) for v in key]
    return tuple(int(v) for v in philox4x64(c[0], c[1], c[2], c[3], k[0], k[1]))

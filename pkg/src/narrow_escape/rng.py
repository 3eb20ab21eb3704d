"""Counter-keyed random streams for the Monte Carlo kernels.

Each path owns an xoshiro256** generator whose 256-bit state is derived by
Philox4x32-10 from the pair (seed, path index). The stream of a path is
therefore a pure function of (seed, path) and never depends on scheduling.
Philox alone costs ~17 ns per block on the reference machine; the derived
xoshiro stream costs ~1 ns per 64-bit word.

Normals come from the 128-layer ziggurat of Marsaglia and Tsang.

The generator state is carried as four uint64 scalars and threaded through
every draw (``x, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)``). Passing
arrays into jitted helpers costs reference-count traffic that dominates the
draw itself, so the kernels never do that on the hot path.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

__all__ = [
    "philox4x32",
    "path_state",
    "next_u64",
    "next_uniform",
    "to_uniform",
    "next_normal",
    "uniform_stream",
    "normal_stream",
    "ZIG_KN",
    "ZIG_WN",
    "ZIG_FN",
]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)


@nb.njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten rounds of Philox4x32 on one counter block (uint32 words)."""
    c0 = np.uint32(c0)
    c1 = np.uint32(c1)
    c2 = np.uint32(c2)
    c3 = np.uint32(c3)
    k0 = np.uint32(k0)
    k1 = np.uint32(k1)
    for _ in range(10):
        p0 = _M0 * np.uint64(c0)
        p1 = _M1 * np.uint64(c2)
        hi0 = np.uint32(p0 >> _SH32)
        lo0 = np.uint32(p0 & _MASK32)
        hi1 = np.uint32(p1 >> _SH32)
        lo1 = np.uint32(p1 & _MASK32)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = np.uint32(k0 + _W0)
        k1 = np.uint32(k1 + _W1)
    return c0, c1, c2, c3


@nb.njit(cache=True)
def path_state(seed, path):
    """xoshiro256** state words for ``path`` under the 64-bit ``seed``."""
    seed = np.uint64(seed)
    path = np.uint64(path)
    k0 = np.uint32(seed & _MASK32)
    k1 = np.uint32(seed >> _SH32)
    p0 = np.uint32(path & _MASK32)
    p1 = np.uint32(path >> _SH32)
    a, b, c, d = philox4x32(np.uint32(0), np.uint32(0x6E657363), p0, p1, k0, k1)
    s0 = (np.uint64(a) << _SH32) | np.uint64(b)
    s1 = (np.uint64(c) << _SH32) | np.uint64(d)
    a, b, c, d = philox4x32(np.uint32(1), np.uint32(0x6E657363), p0, p1, k0, k1)
    s2 = (np.uint64(a) << _SH32) | np.uint64(b)
    s3 = (np.uint64(c) << _SH32) | np.uint64(d)
    if s0 == 0 and s1 == 0 and s2 == 0 and s3 == 0:
        s0 = np.uint64(1)
    return s0, s1, s2, s3


@nb.njit(inline="always", cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@nb.njit(inline="always", cache=True)
def next_u64(s0, s1, s2, s3):
    r = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
    t = s1 << np.uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    return r, s0, s1, s2, s3


@nb.njit(inline="always", cache=True)
def to_uniform(w):
    """Map a 64-bit word to the open interval (0, 1) with 53 random bits."""
    return (np.float64(w >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16


@nb.njit(inline="always", cache=True)
def next_uniform(s0, s1, s2, s3):
    w, s0, s1, s2, s3 = next_u64(s0, s1, s2, s3)
    return to_uniform(w), s0, s1, s2, s3


def _zig_tables():
    # 128 layers for 32-bit signed draws
    m1 = 2147483648.0
    dn = 3.442619855899
    tn = dn
    vn = 9.91256303526217e-3
    kn = np.zeros(128, dtype=np.int64)
    wn = np.zeros(128)
    fn = np.zeros(128)
    q = vn / math.exp(-0.5 * dn * dn)
    kn[0] = int((dn / q) * m1)
    kn[1] = 0
    wn[0] = q / m1
    wn[127] = dn / m1
    fn[0] = 1.0
    fn[127] = math.exp(-0.5 * dn * dn)
    for i in range(126, 0, -1):
        dn = math.sqrt(-2.0 * math.log(vn / dn + math.exp(-0.5 * dn * dn)))
        kn[i + 1] = int((dn / tn) * m1)
        tn = dn
        fn[i] = math.exp(-0.5 * dn * dn)
        wn[i] = dn / m1
    return kn, wn, fn


ZIG_KN, ZIG_WN, ZIG_FN = _zig_tables()
_ZIG_R = 3.442619855899


@nb.njit(cache=True)
def _normal_tail(hz, iz, s0, s1, s2, s3):
    while True:
        x = hz * ZIG_WN[iz]
        if iz == 0:
            while True:
                w, s0, s1, s2, s3 = next_u64(s0, s1, s2, s3)
                xx = -math.log(to_uniform(w)) / _ZIG_R
                w, s0, s1, s2, s3 = next_u64(s0, s1, s2, s3)
                yy = -math.log(to_uniform(w))
                if yy + yy >= xx * xx:
                    break
            return (_ZIG_R + xx if hz > 0 else -_ZIG_R - xx), s0, s1, s2, s3
        w, s0, s1, s2, s3 = next_u64(s0, s1, s2, s3)
        if ZIG_FN[iz] + to_uniform(w) * (ZIG_FN[iz - 1] - ZIG_FN[iz]) < math.exp(-0.5 * x * x):
            return x, s0, s1, s2, s3
        w, s0, s1, s2, s3 = next_u64(s0, s1, s2, s3)
        hz = np.int64(np.int32(np.uint32(w >> _SH32)))
        iz = hz & 127
        if abs(hz) < ZIG_KN[iz]:
            return hz * ZIG_WN[iz], s0, s1, s2, s3


@nb.njit(cache=True)
def next_normal(s0, s1, s2, s3):
    """Standard normal draw; returns (x, s0, s1, s2, s3)."""
    w, s0, s1, s2, s3 = next_u64(s0, s1, s2, s3)
    hz = np.int64(np.int32(np.uint32(w >> _SH32)))
    iz = hz & 127
    if abs(hz) < ZIG_KN[iz]:
        return hz * ZIG_WN[iz], s0, s1, s2, s3
    return _normal_tail(hz, iz, s0, s1, s2, s3)


@nb.njit(cache=True)
def uniform_stream(seed, path, n):
    """First ``n`` uniforms of the stream (seed, path)."""
    s0, s1, s2, s3 = path_state(seed, path)
    out = np.empty(n)
    for i in range(n):
        out[i], s0, s1, s2, s3 = next_uniform(s0, s1, s2, s3)
    return out


@nb.njit(cache=True)
def normal_stream(seed, path, n):
    """First ``n`` standard normals of the stream (seed, path)."""
    s0, s1, s2, s3 = path_state(seed, path)
    out = np.empty(n)
    for i in range(n):
        out[i], s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
    return out

"""Pure-Python reference kernels.

Used when the compiled ``_ckernels`` extension is unavailable, and as the
cross-check for it in the test suite. Every function here has an identical
signature and identical results (bit-for-bit for the integer streams) in the
compiled module.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
TWO_PI = 2.0 * math.pi
INV_2_53 = 1.0 / 9007199254740992.0


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64_seed(seed: int) -> np.ndarray:
    """Expand an integer seed into a 4-word xoshiro256** state via SplitMix64."""
    x = seed & MASK64
    out = np.empty(4, dtype=np.uint64)
    for i in range(4):
        x = (x + 0x9E3779B97F4A7C15) & MASK64
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        out[i] = z ^ (z >> 31)
    return out


def _load(state: np.ndarray) -> list[int]:
    return [int(v) for v in state]


def _store(state: np.ndarray, s: list[int]) -> None:
    for i in range(4):
        state[i] = s[i]


def fill_u64(state: np.ndarray, out: np.ndarray) -> None:
    s0, s1, s2, s3 = _load(state)
    for i in range(out.shape[0]):
        out[i] = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
    _store(state, [s0, s1, s2, s3])


def fill_uniform(state: np.ndarray, out: np.ndarray) -> None:
    s0, s1, s2, s3 = _load(state)
    for i in range(out.shape[0]):
        r = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        out[i] = (r >> 11) * INV_2_53
    _store(state, [s0, s1, s2, s3])


def fill_normal(state: np.ndarray, out: np.ndarray) -> None:
    """Standard normals by the basic Box-Muller transform.

    Each pair of outputs consumes two 53-bit uniforms ``u1, u2``; the radius
    uses ``1 - u1`` so the logarithm never sees zero. An odd-length request
    discards the sine half of the final pair.
    """
    n = out.shape[0]
    s0, s1, s2, s3 = _load(state)
    i = 0
    u = [0.0, 0.0]
    while i < n:
        for j in range(2):
            r = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
            t = (s1 << 17) & MASK64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = _rotl(s3, 45)
            u[j] = (r >> 11) * INV_2_53
        rad = math.sqrt(-2.0 * math.log(1.0 - u[0]))
        theta = TWO_PI * u[1]
        out[i] = rad * math.cos(theta)
        if i + 1 < n:
            out[i + 1] = rad * math.sin(theta)
        i += 2
    _store(state, [s0, s1, s2, s3])


def _median(vals: list[float]) -> float:
    v = sorted(vals)
    n = len(v)
    h = n // 2
    if n % 2:
        return v[h]
    return 0.5 * (v[h - 1] + v[h])


def robust_flags(
    x: np.ndarray,
    usable: np.ndarray,
    k: float,
    baseline: int,
    mad_scale: float,
    floor: float,
    flags: np.ndarray,
    center: np.ndarray,
    spread: np.ndarray,
) -> None:
    """Sequential trailing median/MAD test.

    A point is tested once ``baseline`` earlier usable, unflagged points exist;
    it is flagged when ``|x - median| > k * spread``. Flagged points never enter
    later baselines. ``center``/``spread`` receive the statistics used for each
    tested point and NaN elsewhere.
    """
    window: list[float] = []
    for i in range(x.shape[0]):
        flags[i] = 0
        center[i] = math.nan
        spread[i] = math.nan
        if not usable[i]:
            continue
        if len(window) >= baseline:
            med = _median(window)
            mad = _median([abs(v - med) for v in window]) * mad_scale
            if mad < floor:
                mad = floor
            center[i] = med
            spread[i] = mad
            if abs(x[i] - med) > k * mad:
                flags[i] = 1
                continue
        window.append(float(x[i]))
        if len(window) > baseline:
            window.pop(0)

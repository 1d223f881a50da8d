"""Hot numeric kernels.

Every kernel has a numba implementation and a pure-numpy twin with
identical results.  ``ANONLAB_DISABLE_JIT=1`` selects the numpy twins at
import time; ``use_jit()`` reports the active path.
"""

from __future__ import annotations

import os

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_DISABLED = os.environ.get("ANONLAB_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba
except ImportError:  # pragma: no cover - exercised via env flag
    numba = None


def use_jit() -> bool:
    return numba is not None


def mix64(z: int) -> int:
    """splitmix64 finalizer on a Python int (scalar key schedule)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


# --------------------------------------------------------------------------
# numpy twins
# --------------------------------------------------------------------------

def _np_mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def _np_counter(base: int, n: int) -> np.ndarray:
    idx = np.arange(1, n + 1, dtype=np.uint64)
    return np.uint64(base) + idx * np.uint64(GOLDEN)


def np_prg_words(base: int, n: int) -> np.ndarray:
    return _np_mix(_np_counter(base, n))


def np_xor_prg_words(bases: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=np.uint64)
    idx = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN)
    for b in bases:
        out ^= _np_mix(np.uint64(b) + idx)
    return out


def np_lagged_pearson(entry: np.ndarray, exit_: np.ndarray, max_lag: int, min_overlap: int):
    a, length = entry.shape
    b = exit_.shape[0]
    best = np.full((a, b), np.nan)
    best_lag = np.zeros((a, b), dtype=np.int64)
    for lag in range(-max_lag, max_lag + 1):
        if lag >= 0:
            e, x = entry[:, : length - lag], exit_[:, lag:]
        else:
            e, x = entry[:, -lag:], exit_[:, : length + lag]
        if e.shape[1] < min_overlap:
            continue
        ec = e - e.mean(axis=1, keepdims=True)
        xc = x - x.mean(axis=1, keepdims=True)
        en = np.sqrt((ec * ec).sum(axis=1))
        xn = np.sqrt((xc * xc).sum(axis=1))
        num = ec @ xc.T
        den = np.outer(en, xn)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
        better = ~np.isnan(r) & (np.isnan(best) | (r > best))
        best = np.where(better, r, best)
        best_lag = np.where(better, lag, best_lag)
    return best, best_lag


def np_cumulative_candidates(online: np.ndarray) -> np.ndarray:
    if online.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return np.logical_and.accumulate(online, axis=0).sum(axis=1).astype(np.int64)


def np_buddy_count(patterns: np.ndarray, owner: int) -> int:
    if patterns.shape[0] == 0:
        return int(patterns.shape[1])
    return int((patterns == patterns[:, owner : owner + 1]).all(axis=0).sum())


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------

if numba is not None:
    _G = np.uint64(GOLDEN)
    _U1 = np.uint64(_M1)
    _U2 = np.uint64(_M2)

    @numba.njit(cache=True, inline="always")
    def _nb_mix(z):
        z = (z ^ (z >> np.uint64(30))) * _U1
        z = (z ^ (z >> np.uint64(27))) * _U2
        return z ^ (z >> np.uint64(31))

    @numba.njit(cache=True)
    def nb_prg_words(base, n):
        out = np.empty(n, dtype=np.uint64)
        b = np.uint64(base)
        for i in range(n):
            out[i] = _nb_mix(b + np.uint64(i + 1) * _G)
        return out

    @numba.njit(cache=True)
    def nb_xor_prg_words(bases, n):
        out = np.zeros(n, dtype=np.uint64)
        for k in range(bases.shape[0]):
            b = bases[k]
            for i in range(n):
                out[i] ^= _nb_mix(b + np.uint64(i + 1) * _G)
        return out

    @numba.njit(cache=True)
    def _prefix(rows):
        n, length = rows.shape
        s1 = np.zeros((n, length + 1))
        s2 = np.zeros((n, length + 1))
        for i in range(n):
            for t in range(length):
                v = rows[i, t]
                s1[i, t + 1] = s1[i, t] + v
                s2[i, t + 1] = s2[i, t] + v * v
        return s1, s2

    @numba.njit(cache=True)
    def nb_lagged_pearson(entry, exit_, max_lag, min_overlap):
        a, length = entry.shape
        b = exit_.shape[0]
        best = np.full((a, b), np.nan)
        best_lag = np.zeros((a, b), dtype=np.int64)
        e1, e2 = _prefix(entry)
        x1, x2 = _prefix(exit_)
        for i in range(a):
            for j in range(b):
                for lag in range(-max_lag, max_lag + 1):
                    if lag >= 0:
                        e0, x0, m = 0, lag, length - lag
                    else:
                        e0, x0, m = -lag, 0, length + lag
                    if m < min_overlap:
                        continue
                    se = e1[i, e0 + m] - e1[i, e0]
                    sx = x1[j, x0 + m] - x1[j, x0]
                    me = se / m
                    mx = sx / m
                    ve = 0.0
                    vx = 0.0
                    num = 0.0
                    for t in range(m):
                        de = entry[i, e0 + t] - me
                        dx = exit_[j, x0 + t] - mx
                        num += de * dx
                        ve += de * de
                        vx += dx * dx
                    den = np.sqrt(ve) * np.sqrt(vx)
                    if den > 0.0:
                        r = num / den
                        if np.isnan(best[i, j]) or r > best[i, j]:
                            best[i, j] = r
                            best_lag[i, j] = lag
        return best, best_lag

    @numba.njit(cache=True)
    def nb_cumulative_candidates(online):
        t_count, n = online.shape
        alive = np.ones(n, dtype=np.bool_)
        out = np.zeros(t_count, dtype=np.int64)
        for t in range(t_count):
            c = 0
            for k in range(n):
                if alive[k] and not online[t, k]:
                    alive[k] = False
                if alive[k]:
                    c += 1
            out[t] = c
        return out

    @numba.njit(cache=True)
    def nb_buddy_count(patterns, owner):
        t_count, n = patterns.shape
        c = 0
        for k in range(n):
            same = True
            for t in range(t_count):
                if patterns[t, k] != patterns[t, owner]:
                    same = False
                    break
            if same:
                c += 1
        return c


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def prg_words(base: int, n: int) -> np.ndarray:
    if numba is not None:
        return nb_prg_words(np.uint64(base), n)
    return np_prg_words(base, n)


def xor_prg_words(bases, n: int) -> np.ndarray:
    bases = np.asarray(bases, dtype=np.uint64)
    if numba is not None:
        return nb_xor_prg_words(bases, n)
    return np_xor_prg_words(bases, n)


def lagged_pearson(entry, exit_, max_lag: int, min_overlap: int):
    """Best Pearson correlation over lags for every (entry, exit) row pair.

    Positive lag means the exit series trails the entry series.  Pairs
    where either side has zero variance at every lag come back as NaN.
    Both paths use the numpy twin here: its per-lag matrix product runs on
    BLAS and beats the scalar numba loop (see benchmarks/bench_kernels.py).
    """
    entry = np.ascontiguousarray(entry, dtype=np.float64)
    exit_ = np.ascontiguousarray(exit_, dtype=np.float64)
    return np_lagged_pearson(entry, exit_, max_lag, min_overlap)


def cumulative_candidates(online) -> np.ndarray:
    """Candidate-set size after each successive row of a (T, N) presence matrix."""
    online = np.ascontiguousarray(online, dtype=np.bool_)
    if numba is not None:
        return nb_cumulative_candidates(online)
    return np_cumulative_candidates(online)


def buddy_count(patterns, owner: int) -> int:
    patterns = np.ascontiguousarray(patterns, dtype=np.bool_)
    if numba is not None:
        return int(nb_buddy_count(patterns, owner))
    return np_buddy_count(patterns, owner)

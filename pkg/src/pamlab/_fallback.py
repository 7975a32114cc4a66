"""NumPy versions of the compiled kernels, bit-compatible in their random streams."""
from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
REPLICA_SALT = 0x632BE59BD9B4E019
_U64 = np.uint64


# --- scalar reference (plain Python integers) -------------------------------

def mix64(z):
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK


class Xoshiro256:
    """xoshiro256** with splitmix64 seeding from (seed, replica)."""

    def __init__(self, seed, replica):
        sm = mix64(int(seed)) ^ mix64((int(replica) + REPLICA_SALT) & MASK)
        s = []
        for _ in range(4):
            sm = (sm + GOLDEN) & MASK
            s.append(mix64(sm))
        self.s = s

    def next_u64(self):
        s = self.s
        result = (_rotl((s[1] * 5) & MASK, 7) * 9) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def next_unit(self):
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)


# --- vectorized streams --------------------------------------------------------

def _mix64_arr(z):
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return z ^ (z >> _U64(31))


def _rotl_arr(x, k):
    return (x << _U64(k)) | (x >> _U64(64 - k))


class XoshiroArray:
    """One xoshiro256** stream per replica, advanced in lockstep on a subset."""

    def __init__(self, seed, replicas):
        with np.errstate(over="ignore"):
            rep = np.asarray(replicas, dtype=np.uint64)
            sm = _mix64_arr(np.full(rep.shape, seed, dtype=np.uint64)) ^ _mix64_arr(rep + _U64(REPLICA_SALT))
            self.s = np.empty((4, rep.size), dtype=np.uint64)
            for i in range(4):
                sm = sm + _U64(GOLDEN)
                self.s[i] = _mix64_arr(sm)

    def next_unit(self, idx):
        s0, s1, s2, s3 = (self.s[i, idx] for i in range(4))
        with np.errstate(over="ignore"):
            result = _rotl_arr(s1 * _U64(5), 7) * _U64(9)
            t = s1 << _U64(17)
            s2 = s2 ^ s0
            s3 = s3 ^ s1
            s1 = s1 ^ s2
            s0 = s0 ^ s3
            s2 = s2 ^ t
            s3 = _rotl_arr(s3, 45)
        self.s[0, idx], self.s[1, idx], self.s[2, idx], self.s[3, idx] = s0, s1, s2, s3
        return (result >> _U64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def walk_log_weights(xi, d, radius, limit, t, seed, first, count):
    """Same contract as the compiled kernel, vectorized over replicas."""
    xi = np.ascontiguousarray(xi, dtype=np.float64)
    side = 2 * radius + 1
    rate = 2.0 * d
    stride = side ** np.arange(d - 1, -1, -1, dtype=np.int64)
    rng = XoshiroArray(seed, np.arange(first, first + count, dtype=np.uint64))
    pos = np.zeros((count, d), dtype=np.int64)
    elapsed = np.zeros(count)
    acc = np.zeros(count)
    jumps = np.zeros(count, dtype=np.int64)
    active = np.arange(count)
    while active.size:
        idx = (pos[active] + radius) @ stride
        u = rng.next_unit(active)
        hold = -np.log1p(-u) / rate
        val = xi[idx]
        done = elapsed[active] + hold >= t
        fin = active[done]
        acc[fin] = acc[fin] + val[done] * (t - elapsed[fin])
        go = active[~done]
        acc[go] = acc[go] + val[~done] * hold[~done]
        elapsed[go] = elapsed[go] + hold[~done]
        if go.size == 0:
            break
        k = (rng.next_unit(go) * rate).astype(np.int64)
        ax = k >> 1
        step = np.where(k & 1, -1, 1)
        pos[go, ax] += step
        jumps[go] += 1
        p = pos[go, ax]
        out = (p > limit) | (p < -limit)
        acc[go[out]] = -np.inf
        active = go[~out]
    return acc, jumps


def shift_l1_scan_1d(big, target, w, n_shift):
    from numpy.lib.stride_tricks import sliding_window_view
    win = sliding_window_view(np.asarray(big, dtype=float), len(target))[:n_shift]
    return np.abs(win - target) @ w


def shift_l1_scan_2d(big, target, w, n_shift):
    from numpy.lib.stride_tricks import sliding_window_view
    nw = target.shape[0]
    win = sliding_window_view(np.asarray(big, dtype=float), (nw, nw))[:n_shift, :n_shift]
    return np.einsum("abij,ij->ab", np.abs(win - target), w)

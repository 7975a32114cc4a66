# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: random-walk log-weights and the shift L1 scan.

The random stream per replica is xoshiro256** seeded through splitmix64
exactly as described in pamlab.kernels; the NumPy fallback reproduces it.
"""
import numpy as np
from libc.math cimport log1p, INFINITY, fabs
from libc.stdint cimport uint64_t, int64_t


cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t REPLICA_SALT = 0x632BE59BD9B4E019ULL


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t rotl(uint64_t x, int k) noexcept nogil:
    return (x << k) | (x >> (64 - k))


cdef inline void seed_state(uint64_t* s, uint64_t seed, uint64_t replica) noexcept nogil:
    cdef uint64_t sm = mix64(seed) ^ mix64(replica + REPLICA_SALT)
    cdef int i
    for i in range(4):
        sm = sm + GOLDEN
        s[i] = mix64(sm)


cdef inline uint64_t next_u64(uint64_t* s) noexcept nogil:
    cdef uint64_t result = rotl(s[1] * 5, 7) * 9
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = rotl(s[3], 45)
    return result


cdef inline double next_unit(uint64_t* s) noexcept nogil:
    return <double>(next_u64(s) >> 11) * (1.0 / 9007199254740992.0)


def walk_log_weights(const double[::1] xi, int d, int radius, int limit, double t,
                     uint64_t seed, int64_t first, int64_t count):
    """<l_t, xi> for replicas first .. first+count-1; -inf when the walk leaves B_limit.

    xi holds the field on B_radius in row-major order; the walk starts at the origin.
    Returns (log_weights, jump_counts).
    """
    cdef int64_t side = 2 * radius + 1
    cdef double rate = 2.0 * d
    out = np.empty(count, dtype=np.float64)
    jumps = np.empty(count, dtype=np.int64)
    cdef double[::1] ov = out
    cdef int64_t[::1] jv = jumps
    cdef uint64_t s[4]
    cdef int64_t pos[8]
    cdef int64_t stride[8]
    cdef int64_t r, idx, nj, k
    cdef int i, ax
    cdef double elapsed, acc, hold, u
    if d > 8:
        raise ValueError("dimension above 8 is not supported")
    stride[d - 1] = 1
    for i in range(d - 2, -1, -1):
        stride[i] = stride[i + 1] * side
    with nogil:
        for r in range(count):
            seed_state(s, seed, <uint64_t>(first + r))
            for i in range(d):
                pos[i] = 0
            elapsed = 0.0
            acc = 0.0
            nj = 0
            while True:
                idx = 0
                for i in range(d):
                    idx = idx + (pos[i] + radius) * stride[i]
                u = next_unit(s)
                hold = -log1p(-u) / rate
                if elapsed + hold >= t:
                    acc = acc + xi[idx] * (t - elapsed)
                    break
                acc = acc + xi[idx] * hold
                elapsed = elapsed + hold
                k = <int64_t>(next_unit(s) * rate)
                ax = <int>(k >> 1)
                if k & 1:
                    pos[ax] -= 1
                else:
                    pos[ax] += 1
                nj += 1
                if pos[ax] > limit or pos[ax] < -limit:
                    acc = -INFINITY
                    break
            ov[r] = acc
            jv[r] = nj
    return out, jumps


def shift_l1_scan_1d(const double[::1] big, const double[::1] target, const double[::1] w, int64_t n_shift):
    """out[s] = sum_j w[j] |big[s + j] - target[j]|."""
    cdef int64_t nw = target.shape[0]
    out = np.empty(n_shift, dtype=np.float64)
    cdef double[::1] ov = out
    cdef int64_t s, j
    cdef double acc
    with nogil:
        for s in range(n_shift):
            acc = 0.0
            for j in range(nw):
                acc = acc + w[j] * fabs(big[s + j] - target[j])
            ov[s] = acc
    return out


def shift_l1_scan_2d(const double[:, ::1] big, const double[:, ::1] target, const double[:, ::1] w,
                     int64_t n_shift):
    """out[s0, s1] = sum_{j0, j1} w[j0, j1] |big[s0 + j0, s1 + j1] - target[j0, j1]|."""
    cdef int64_t nw = target.shape[0]
    out = np.empty((n_shift, n_shift), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef int64_t s0, s1, j0, j1
    cdef double acc
    with nogil:
        for s0 in range(n_shift):
            for s1 in range(n_shift):
                acc = 0.0
                for j0 in range(nw):
                    for j1 in range(nw):
                        acc = acc + w[j0, j1] * fabs(big[s0 + j0, s1 + j1] - target[j0, j1])
                ov[s0, s1] = acc
    return out

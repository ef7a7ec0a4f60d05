# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: binomial log-space sums and bitset clique search.

Function-for-function twin of ``_pykernels.py``.
"""

from libc.math cimport lgamma, log, log1p, exp, floor, fabs, INFINITY
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy
from libc.stdint cimport uint64_t

import numpy as np

BACKEND = "cython"


cdef inline double _log_pmf(long k, long n, double r) noexcept nogil:
    if r == 0.0:
        return 0.0 if k == 0 else -INFINITY
    if r == 1.0:
        return 0.0 if k == n else -INFINITY
    return (lgamma(n + 1.0) - lgamma(k + 1.0) - lgamma(n - k + 1.0)
            + k * log(r) + (n - k) * log1p(-r))


cdef inline long _mode(long n, double r) noexcept nogil:
    cdef long m = <long>floor((n + 1) * r)
    if m < 0:
        return 0
    if m > n:
        return n
    return m


cdef double _log_sum_range(long lo, long hi, long n, double r) noexcept nogil:
    cdef long k, mk
    cdef double top, total, comp, x, t
    if lo < 0:
        lo = 0
    if hi > n:
        hi = n
    if lo > hi:
        return -INFINITY
    if lo == 0 and hi == n:
        return 0.0
    mk = _mode(n, r)
    if mk < lo:
        mk = lo
    if mk > hi:
        mk = hi
    top = _log_pmf(mk, n, r)
    if top == -INFINITY:
        return -INFINITY
    total = 0.0
    comp = 0.0
    for k in range(lo, hi + 1):
        x = exp(_log_pmf(k, n, r) - top)
        t = total + x
        if fabs(total) >= fabs(x):
            comp += (total - t) + x
        else:
            comp += (x - t) + total
        total = t
    t = top + log(total + comp)
    # a probability: clip the rounding excess above log(1) = 0
    return t if t < 0.0 else 0.0


cdef long _threshold(long n, double log_alpha, double q) noexcept nogil:
    cdef long lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if _log_sum_range(mid + 1, n, n, q) <= log_alpha:
            hi = mid
        else:
            lo = mid + 1
    return lo


def log_pmf(long k, long n, double r):
    return _log_pmf(k, n, r)


def log_sum_range(long lo, long hi, long n, double r):
    """log of sum_{k=lo}^{hi} pmf(k; n, r); -inf for an empty range."""
    return _log_sum_range(lo, hi, n, r)


def log_cdf(long k, long n, double r):
    return _log_sum_range(0, k, n, r)


def log_sf(long k, long n, double r):
    """log P[X > k]."""
    return _log_sum_range(k + 1, n, n, r)


def threshold(long n, double log_alpha, double q):
    """Smallest k in [0, n] with P_q[X > k] <= alpha."""
    return _threshold(n, log_alpha, q)


def log_beta(long n, double log_alpha, double q, double p):
    return _log_sum_range(0, _threshold(n, log_alpha, q), n, p)


def thresholds_many(long n, double log_alpha, qs):
    cdef double[::1] qv = np.ascontiguousarray(qs, dtype=np.float64)
    out = np.empty(qv.shape[0], dtype=np.int64)
    cdef long long[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(qv.shape[0]):
            ov[i] = _threshold(n, log_alpha, qv[i])
    return out


def log_cdf_many(long k, long n, rs):
    cdef double[::1] rv = np.ascontiguousarray(rs, dtype=np.float64)
    out = np.empty(rv.shape[0], dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(rv.shape[0]):
            ov[i] = _log_sum_range(0, k, n, rv[i])
    return out


# ---------------------------------------------------------------- cliques

cdef extern from *:
    int __builtin_ctzll(unsigned long long) nogil


cdef inline int _ctz(uint64_t x) noexcept nogil:
    return __builtin_ctzll(x)


cdef class BitGraph:
    """Adjacency bitsets over vertices ``0..m-1`` with clique search.

    Vertex sets cross the Python boundary as ints (bit ``i`` = vertex ``i``).
    """

    cdef uint64_t* adj
    cdef public int m
    cdef int W
    # search state
    cdef long long nodes
    cdef long long node_limit
    cdef int best
    cdef int stop
    cdef int* stack
    cdef int depth
    cdef int* best_members
    cdef int n_best_members

    def __cinit__(self, rows):
        rows = [int(x) for x in rows]
        self.m = len(rows)
        self.W = max(1, (self.m + 63) // 64)
        self.adj = <uint64_t*>malloc(self.m * self.W * sizeof(uint64_t) + 8)
        self.stack = <int*>malloc((self.m + 1) * sizeof(int))
        self.best_members = <int*>malloc((self.m + 1) * sizeof(int))
        if self.adj == NULL or self.stack == NULL or self.best_members == NULL:
            raise MemoryError()
        cdef int i
        for i in range(self.m):
            self._load(rows[i], &self.adj[i * self.W])
            # a vertex is never its own neighbour
            self.adj[i * self.W + (i >> 6)] &= ~((<uint64_t>1) << (i & 63))

    def __dealloc__(self):
        free(self.adj)
        free(self.stack)
        free(self.best_members)

    cdef void _load(self, object value, uint64_t* dst):
        cdef int j
        mask = (1 << 64) - 1
        for j in range(self.W):
            dst[j] = <uint64_t>((value >> (64 * j)) & mask)

    cdef int _color(self, uint64_t* P, int* order, int* colors) noexcept nogil:
        """Greedy sequential colouring; returns number of vertices written."""
        cdef int W = self.W
        cdef uint64_t* U = <uint64_t*>malloc(W * sizeof(uint64_t))
        cdef uint64_t* Q = <uint64_t*>malloc(W * sizeof(uint64_t))
        cdef int cnt = 0, k = 0, j, j2, v, any_left
        cdef uint64_t* row
        memcpy(U, P, W * sizeof(uint64_t))
        while True:
            any_left = 0
            for j in range(W):
                if U[j]:
                    any_left = 1
                    break
            if not any_left:
                break
            k += 1
            memcpy(Q, U, W * sizeof(uint64_t))
            j = 0
            while j < W:
                if Q[j] == 0:
                    j += 1
                    continue
                v = j * 64 + _ctz(Q[j])
                Q[j] &= Q[j] - 1
                U[v >> 6] &= ~((<uint64_t>1) << (v & 63))
                row = &self.adj[v * W]
                for j2 in range(j, W):
                    Q[j2] &= ~row[j2]
                order[cnt] = v
                colors[cnt] = k
                cnt += 1
        free(U)
        free(Q)
        return cnt

    cdef void _expand(self, uint64_t* P, int r) noexcept nogil:
        cdef int W = self.W
        cdef int* order
        cdef int* colors
        cdef uint64_t* NP
        cdef int cnt, i, j, v, nonempty, d
        cdef uint64_t* row
        self.nodes += 1
        if self.nodes > self.node_limit:
            self.stop = 1
            return
        order = <int*>malloc(self.m * sizeof(int))
        colors = <int*>malloc(self.m * sizeof(int))
        NP = <uint64_t*>malloc(W * sizeof(uint64_t))
        cnt = self._color(P, order, colors)
        d = r + self.depth
        for i in range(cnt - 1, -1, -1):
            if d + colors[i] <= self.best:
                break
            v = order[i]
            row = &self.adj[v * W]
            nonempty = 0
            for j in range(W):
                NP[j] = P[j] & row[j]
                if NP[j]:
                    nonempty = 1
            self.stack[self.depth] = v
            self.depth += 1
            if not nonempty:
                if d + 1 > self.best:
                    self.best = d + 1
                    memcpy(self.best_members, self.stack, self.depth * sizeof(int))
                    self.n_best_members = self.depth
            else:
                self._expand(NP, r)
            self.depth -= 1
            if self.stop:
                break
            P[v >> 6] &= ~((<uint64_t>1) << (v & 63))
        free(order)
        free(colors)
        free(NP)

    def coloring_bound(self, P):
        cdef uint64_t* buf = <uint64_t*>malloc(self.W * sizeof(uint64_t))
        cdef int* order = <int*>malloc(self.m * sizeof(int))
        cdef int* colors = <int*>malloc(self.m * sizeof(int))
        cdef int cnt
        self._load(P, buf)
        cnt = self._color(buf, order, colors)
        result = colors[cnt - 1] if cnt > 0 else 0
        free(buf)
        free(order)
        free(colors)
        return result

    def search(self, P, int r, int best, long long node_limit):
        """Branch and bound for a clique in ``P`` larger than ``best - r``.

        Returns ``(size, members, nodes, complete)``; see the Python twin.
        """
        cdef uint64_t* buf = <uint64_t*>malloc(self.W * sizeof(uint64_t))
        self._load(P, buf)
        self.nodes = 0
        self.node_limit = node_limit
        self.best = best
        self.stop = 0
        self.depth = 0
        self.n_best_members = 0
        if P:
            with nogil:
                self._expand(buf, r)
        elif r > best:
            self.best = r
        free(buf)
        members = [self.best_members[i] for i in range(self.n_best_members)]
        return self.best, members, self.nodes, not self.stop

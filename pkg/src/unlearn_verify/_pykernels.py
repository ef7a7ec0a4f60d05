"""Pure-Python hot kernels.

Mirrors ``_ckernels.pyx`` function by function. Loaded when the compiled
extension is unavailable or ``UNLEARN_VERIFY_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np

BACKEND = "python"


def log_pmf(k, n, r):
    if r == 0.0:
        return 0.0 if k == 0 else -math.inf
    if r == 1.0:
        return 0.0 if k == n else -math.inf
    return (math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)
            + k * math.log(r) + (n - k) * math.log1p(-r))


def _mode(n, r):
    m = int(math.floor((n + 1) * r))
    return min(max(m, 0), n)


def log_sum_range(lo, hi, n, r):
    """log of sum_{k=lo}^{hi} pmf(k; n, r); -inf for an empty range."""
    if lo < 0:
        lo = 0
    if hi > n:
        hi = n
    if lo > hi:
        return -math.inf
    if lo == 0 and hi == n:
        return 0.0
    # pmf is unimodal, so the range maximum sits at the clipped mode
    top = log_pmf(min(max(_mode(n, r), lo), hi), n, r)
    if top == -math.inf:
        return -math.inf
    total = 0.0
    comp = 0.0
    for k in range(lo, hi + 1):
        x = math.exp(log_pmf(k, n, r) - top)
        t = total + x
        if abs(total) >= abs(x):
            comp += (total - t) + x
        else:
            comp += (x - t) + total
        total = t
    # a probability: clip the rounding excess above log(1) = 0
    return min(top + math.log(total + comp), 0.0)


def log_cdf(k, n, r):
    return log_sum_range(0, k, n, r)


def log_sf(k, n, r):
    """log P[X > k]."""
    return log_sum_range(k + 1, n, n, r)


def threshold(n, log_alpha, q):
    """Smallest k in [0, n] with P_q[X > k] <= alpha."""
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if log_sf(mid, n, q) <= log_alpha:
            hi = mid
        else:
            lo = mid + 1
    return lo


def log_beta(n, log_alpha, q, p):
    return log_cdf(threshold(n, log_alpha, q), n, p)


def thresholds_many(n, log_alpha, qs):
    qs = np.asarray(qs, dtype=np.float64)
    return np.array([threshold(n, log_alpha, float(q)) for q in qs], dtype=np.int64)


def log_cdf_many(k, n, rs):
    rs = np.asarray(rs, dtype=np.float64)
    return np.array([log_cdf(k, n, float(r)) for r in rs], dtype=np.float64)


class BitGraph:
    """Adjacency bitsets over vertices ``0..m-1`` with clique search.

    Vertex sets are exchanged as Python ints (bit ``i`` = vertex ``i``).
    """

    def __init__(self, rows):
        # a vertex is never its own neighbour
        self.rows = [int(x) & ~(1 << i) for i, x in enumerate(rows)]
        self.m = len(self.rows)

    def _color_order(self, P):
        adj = self.rows
        order = []
        colors = []
        U = P
        k = 0
        while U:
            k += 1
            Q = U
            while Q:
                v = (Q & -Q).bit_length() - 1
                bit = 1 << v
                Q &= ~adj[v] & ~bit
                U &= ~bit
                order.append(v)
                colors.append(k)
        return order, colors

    def coloring_bound(self, P):
        _, colors = self._color_order(P)
        return colors[-1] if colors else 0

    def search(self, P, r, best, node_limit):
        """Branch and bound for a clique in ``P`` larger than ``best - r``.

        Returns ``(size, members, nodes, complete)`` where ``size`` is the
        best total clique size (``r`` + extension) found, ``members`` the
        extension vertices when it beats ``best`` (else ``[]``), and
        ``complete`` is False when ``node_limit`` ran out.
        """
        adj = self.rows
        state = {"best": best, "members": [], "nodes": 0, "stop": False}
        stack = []

        def expand(P):
            state["nodes"] += 1
            if state["nodes"] > node_limit:
                state["stop"] = True
                return
            order, colors = self._color_order(P)
            depth = r + len(stack)
            for i in range(len(order) - 1, -1, -1):
                if depth + colors[i] <= state["best"]:
                    return
                v = order[i]
                NP = P & adj[v]
                stack.append(v)
                if NP == 0:
                    if depth + 1 > state["best"]:
                        state["best"] = depth + 1
                        state["members"] = list(stack)
                else:
                    expand(NP)
                stack.pop()
                if state["stop"]:
                    return
                P &= ~(1 << v)

        if P:
            expand(P)
        elif r > best:
            state["best"] = r
        return state["best"], state["members"], state["nodes"], not state["stop"]

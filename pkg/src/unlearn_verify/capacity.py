"""How many sufficiently different backdoor triggers fit in an input space.

A trigger setting ``w`` of ``n`` binary positions is a constant-weight word;
two triggers stay distinguishable when their Hamming distance is at least
``d``. The number of such triggers is ``A(n, d, w)``, the size of the largest
constant-weight code, which is computed exactly when cheap and bracketed by
bounds otherwise. Birthday-style collision risk then caps the user count.
"""

from __future__ import annotations

import enum
import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError

DEFAULT_BRUTE_FORCE_CAP = 5000
DEFAULT_NODE_LIMIT = 20_000_000
GREEDY_CAP = 20_000
# orbit branching below this clique depth, plain branch and bound beneath it
SYMMETRY_DEPTH = 6


class CapacityMethod(str, enum.Enum):
    BRUTE_FORCE = "BruteForce"
    CLOSED_FORM = "ClosedForm"
    JOHNSON_BOUND = "JohnsonBound"


@dataclass(frozen=True)
class CodeParams:
    n: int
    d: int
    w: int

    def __post_init__(self):
        for name in ("n", "d", "w"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise DomainError(f"{name} must be an integer, got {value!r}")
        if not (1 <= self.w <= self.n):
            raise DomainError(f"need 1 <= w <= n, got w={self.w}, n={self.n}")
        if not (0 <= self.d <= 2 * self.w):
            raise DomainError(f"need 0 <= d <= 2w, got d={self.d}, w={self.w}")

    @property
    def even_d(self):
        """Distances between weight-``w`` words are even, so odd ``d`` rounds up."""
        return self.d + (self.d & 1)


@dataclass(frozen=True)
class CapacityResult:
    params: CodeParams
    lower_bound: int
    upper_bound: int
    method: CapacityMethod
    exact: int | None = None
    witness: tuple = field(default=(), repr=False)
    nodes: int = 0

    def __post_init__(self):
        if self.lower_bound > self.upper_bound:
            raise AssertionError("lower bound exceeds upper bound")

    @property
    def normalized_d(self):
        return self.params.even_d

    def to_dict(self):
        return {
            "n": self.params.n, "d": self.params.d, "w": self.params.w,
            "normalized_d": self.normalized_d,
            "exact": self.exact, "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound, "method": self.method.value,
        }


def _closed_form(n, d, w):
    if d > 2 * w:
        return 1
    if d <= 2:
        return math.comb(n, w)
    if d == 2 * w:
        return n // w
    return None


@functools.lru_cache(maxsize=None)
def johnson_upper(n, d, w):
    """Upper bound from ``A(n,d,w) <= floor(n/w * A(n-1,d,w-1))``.

    Applied to the lighter of ``w`` and its complement ``n - w`` (the code
    size is invariant under complementing every word).
    """
    d += d & 1
    w = min(w, n - w)
    exact = _closed_form(n, d, w) if w > 0 else 1
    if exact is not None:
        return exact
    return min(math.comb(n, w), (n * johnson_upper(n - 1, d, w - 1)) // w)


def _smallest_prime_at_least(x):
    def is_prime(m):
        if m < 2:
            return False
        if m % 2 == 0:
            return m == 2
        f = 3
        while f * f <= m:
            if m % f == 0:
                return False
            f += 2
        return True

    while not is_prime(x):
        x += 1
    return x


def graham_sloane_lower(n, d, w):
    """Pigeonhole lower bound ``ceil(C(n,w) / q^(d/2 - 1))`` with prime ``q >= n``.

    Words are binned by the power sums of their support modulo ``q``; each bin
    has minimum distance ``d``.
    """
    d += d & 1
    exact = _closed_form(n, d, w)
    if exact is not None:
        return exact
    q = _smallest_prime_at_least(n)
    denom = q ** (d // 2 - 1)
    return max(1, -(-math.comb(n, w) // denom))


def _words(n, w):
    return [sum(1 << i for i in c) for c in itertools.combinations(range(n), w)]


def greedy_lower(n, d, w):
    """Size of the lexicographic greedy code (lexicode)."""
    d += d & 1
    chosen = []
    for x in _words(n, w):
        if all((x ^ y).bit_count() >= d for y in chosen):
            chosen.append(x)
    return len(chosen), chosen


def _adjacency(words, n, d):
    """Bitset rows linking words at distance >= d, without self-loops."""
    if n <= 63:
        arr = np.array(words, dtype=np.uint64)
        rows = []
        for i in range(arr.size):
            mask = np.bitwise_count(arr ^ arr[i]) >= d
            row = int.from_bytes(np.packbits(mask, bitorder="little").tobytes(), "little")
            rows.append(row & ~(1 << i))
        return rows
    rows = [0] * len(words)
    for i, x in enumerate(words):
        row = 0
        for j, y in enumerate(words):
            if j != i and (x ^ y).bit_count() >= d:
                row |= 1 << j
        rows[i] = row
    return rows


def _refine(cells, word):
    out = []
    for c in cells:
        inside, outside = c & word, c & ~word
        if inside:
            out.append(inside)
        if outside:
            out.append(outside)
    return out


def max_clique_code(n, d, w, node_limit=DEFAULT_NODE_LIMIT, lower=0):
    """Exact ``A(n, d, w)`` by maximum-clique search over all weight-``w`` words.

    Near the root the search branches on orbits instead of single words: once
    words ``R`` are fixed, permutations of positions that fix every word of
    ``R`` map cliques through ``R`` to cliques through ``R``, so one
    representative per orbit suffices. Those permutations are the products
    of symmetric groups on the cells of the partition that ``R`` induces, and
    a word's orbit is given by its intersection sizes with the cells.

    Returns ``(size, witness_words, nodes, complete)``.
    """
    d += d & 1
    words = _words(n, w)
    rows = _adjacency(words, n, d)
    graph = kernels.BitGraph(rows)
    state = {"best": max(lower, 0), "clique": [], "nodes": 0, "complete": True}

    def record(clique):
        if len(clique) > state["best"]:
            state["best"] = len(clique)
            state["clique"] = list(clique)

    def expand(R, P, cells):
        if not state["complete"]:
            return
        state["nodes"] += 1
        if P == 0:
            record(R)
            return
        if len(R) >= SYMMETRY_DEPTH:
            budget = node_limit - state["nodes"]
            size, members, used, complete = graph.search(P, len(R), state["best"], budget)
            state["nodes"] += used
            if members:
                state["best"] = size
                state["clique"] = R + list(members)
            if not complete:
                state["complete"] = False
            return
        if state["nodes"] > node_limit:
            state["complete"] = False
            return
        orbits = {}
        rest = P
        while rest:
            v = (rest & -rest).bit_length() - 1
            rest &= rest - 1
            sig = tuple((words[v] & c).bit_count() for c in cells)
            orbits.setdefault(sig, []).append(v)
        reps = sorted(orbits.values(), key=lambda orb: -(P & rows[orb[0]]).bit_count())
        for orb in reps:
            if len(R) + graph.coloring_bound(P) <= state["best"]:
                return
            v = orb[0]
            expand(R + [v], P & rows[v], _refine(cells, words[v]))
            if not state["complete"]:
                return
            for u in orb:
                P &= ~(1 << u)

    expand([], (1 << len(words)) - 1, [(1 << n) - 1])
    witness = tuple(words[i] for i in state["clique"])
    return state["best"], witness, state["nodes"], state["complete"]


def _lower_bound(n, d, w):
    best = graham_sloane_lower(n, d, w)
    if math.comb(n, w) <= GREEDY_CAP:
        best = max(best, greedy_lower(n, d, w)[0])
    return best


def awd(params, brute_force_cap=DEFAULT_BRUTE_FORCE_CAP, node_limit=DEFAULT_NODE_LIMIT):
    """Largest constant-weight code ``A(n, d, w)``, exact or bracketed."""
    n, d, w = params.n, params.even_d, params.w
    exact = _closed_form(n, d, w)
    if exact is not None:
        return CapacityResult(params, exact, exact, CapacityMethod.CLOSED_FORM, exact)
    upper = johnson_upper(n, d, w)
    lower = _lower_bound(n, d, w)
    if math.comb(n, w) <= brute_force_cap:
        size, witness, nodes, complete = max_clique_code(n, d, w, node_limit, lower=0)
        if complete:
            return CapacityResult(params, size, size, CapacityMethod.BRUTE_FORCE, size,
                                  witness, nodes)
        lower = max(lower, size)
        return CapacityResult(params, lower, upper, CapacityMethod.JOHNSON_BOUND,
                              witness=witness, nodes=nodes)
    return CapacityResult(params, lower, upper, CapacityMethod.JOHNSON_BOUND)


@dataclass(frozen=True)
class BackdoorCount:
    """The trigger count summed over distances ``i = d .. n``.

    Terms with odd ``i`` or ``i > 2w`` contribute nothing. ``single_term`` is
    the conventional ``A(n, d, w)`` for comparison: that code already admits
    every distance of at least ``d``.
    """

    params: CodeParams
    lower_bound: int
    upper_bound: int
    terms: tuple
    single_term: CapacityResult

    @property
    def exact(self):
        return self.lower_bound if self.lower_bound == self.upper_bound else None

    def to_dict(self):
        return {
            "lower_bound": self.lower_bound, "upper_bound": self.upper_bound,
            "exact": self.exact,
            "terms": [{"i": t.params.d, **t.to_dict()} for t in self.terms],
            "single_term": self.single_term.to_dict(),
        }


def backdoor_count(params, **kwargs):
    n, w = params.n, params.w
    terms = []
    for i in range(params.d, n + 1):
        if i % 2 or i > 2 * w:
            continue
        terms.append(awd(CodeParams(n, i, w), **kwargs))
    lower = sum(t.lower_bound for t in terms)
    upper = sum(t.upper_bound for t in terms)
    return BackdoorCount(params, lower, upper, tuple(terms), awd(params, **kwargs))


def _log_no_collision(m, capacity):
    """log prod_{i<m} (1 - i/capacity) for m <= capacity."""
    if m <= 1:
        return 0.0
    if m <= 2_000_000:
        i = np.arange(1, m, dtype=np.float64)
        return math.fsum(np.log1p(-i / capacity))
    x = m / capacity
    if x < 1e-3:
        # -sum_j S_j / (j N^j) with power sums S_j = sum_{i<m} i^j
        s1 = m * (m - 1) / 2
        s2 = (m - 1) * m * (2 * m - 1) / 6
        s3 = s1 * s1
        return -(s1 / capacity + s2 / (2 * capacity ** 2) + s3 / (3 * capacity ** 3))
    return math.lgamma(capacity + 1) - math.lgamma(capacity - m + 1) - m * math.log(capacity)


def collision_probability(num_users, capacity):
    """Probability that some pair of ``num_users`` uniform triggers coincide."""
    if capacity < 1:
        raise DomainError("capacity must be >= 1")
    if num_users < 0:
        raise DomainError("num_users must be >= 0")
    if num_users > capacity:
        return 1.0
    return min(1.0, max(0.0, -math.expm1(_log_no_collision(num_users, capacity))))


def max_users(capacity, collision_budget):
    """Largest user count whose collision probability stays within budget."""
    if not (0.0 < collision_budget < 1.0):
        raise DomainError("collision_budget must lie in (0, 1)")
    lo, hi = 1, capacity
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if collision_probability(mid, capacity) <= collision_budget:
            lo = mid
        else:
            hi = mid - 1
    return lo

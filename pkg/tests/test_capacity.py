import math
import random
from fractions import Fraction

import pytest

from oracles import KNOWN_AWD, naive_max_code
from unlearn_verify.capacity import (
    CapacityMethod,
    CodeParams,
    awd,
    backdoor_count,
    collision_probability,
    graham_sloane_lower,
    greedy_lower,
    johnson_upper,
    max_clique_code,
    max_users,
)
from unlearn_verify.errors import DomainError


def exact_no_collision(m, capacity):
    out = Fraction(1)
    for i in range(m):
        out *= Fraction(capacity - i, capacity)
    return out


class TestAwd:
    def test_emnist_closed_form(self):
        res = awd(CodeParams(784, 2, 4))
        assert res.method is CapacityMethod.CLOSED_FORM
        assert res.exact == math.comb(784, 4) == 15_621_558_876

    def test_disjoint_supports(self):
        res = awd(CodeParams(6, 6, 3))
        assert res.exact == 2 and res.method is CapacityMethod.CLOSED_FORM

    def test_brute_force(self):
        res = awd(CodeParams(7, 4, 3))
        assert res.exact == 7 and res.method is CapacityMethod.BRUTE_FORCE
        assert len(res.witness) == 7
        assert all((a ^ b).bit_count() >= 4 for a in res.witness for b in res.witness if a != b)

    def test_odd_d_rounds_up(self):
        for n, d, w in [(7, 3, 3), (8, 5, 4), (9, 3, 4)]:
            assert awd(CodeParams(n, d, w)).exact == awd(CodeParams(n, d + 1, w)).exact
        assert awd(CodeParams(7, 3, 3)).normalized_d == 4

    def test_large_instance_is_bracketed(self):
        res = awd(CodeParams(784, 4, 4))
        assert res.method is CapacityMethod.JOHNSON_BOUND and res.exact is None
        assert res.lower_bound <= res.upper_bound
        assert res.upper_bound == johnson_upper(784, 4, 4)
        assert res.lower_bound == graham_sloane_lower(784, 4, 4)

    def test_budget_exhaustion_falls_back(self):
        res = awd(CodeParams(10, 4, 5), node_limit=20)
        assert res.exact is None
        assert res.lower_bound <= 36 <= res.upper_bound

    @pytest.mark.parametrize("key", sorted(KNOWN_AWD))
    def test_published_values(self, key):
        assert awd(CodeParams(*key)).exact == KNOWN_AWD[key]

    @pytest.mark.parametrize("n", range(1, 6))
    def test_naive_oracle(self, n):
        for w in range(1, n + 1):
            for d in range(0, 2 * w + 1, 2):
                assert max_clique_code(n, d, w)[0] == naive_max_code(n, d, w)

    def test_nonincreasing_in_d(self):
        for n in range(2, 10):
            for w in range(1, n + 1):
                sizes = [awd(CodeParams(n, d, w)).exact for d in range(0, 2 * w + 1, 2)]
                assert sizes == sorted(sizes, reverse=True)

    def test_bounds_on_medium_instance(self):
        assert greedy_lower(12, 4, 4)[0] <= johnson_upper(12, 4, 4)
        assert graham_sloane_lower(12, 4, 4) <= johnson_upper(12, 4, 4)

    @pytest.mark.parametrize("n,d,w", [(0, 2, 1), (5, 2, 6), (5, 7, 3), (5, -1, 2), (5, 2.0, 2)])
    def test_invalid(self, n, d, w):
        with pytest.raises(DomainError):
            CodeParams(n, d, w)


class TestBackdoorCount:
    def test_single_feasible_term(self):
        res = backdoor_count(CodeParams(6, 6, 3))
        assert res.exact == 2 and len(res.terms) == 1

    def test_term_by_term(self):
        res = backdoor_count(CodeParams(7, 4, 3))
        assert [t.params.d for t in res.terms] == [4, 6]
        assert res.exact == awd(CodeParams(7, 4, 3)).exact + awd(CodeParams(7, 6, 3)).exact
        assert res.single_term.exact == 7

    def test_emnist_dominated_by_first_term(self):
        res = backdoor_count(CodeParams(784, 2, 4))
        first = math.comb(784, 4)
        assert res.lower_bound >= first
        assert res.upper_bound - first < first // 100


class TestBirthday:
    def test_examples(self):
        assert collision_probability(1, 10 ** 9) == 0.0
        assert collision_probability(0, 5) == 0.0
        assert collision_probability(2, 2) == 0.5
        assert collision_probability(23, 365) == pytest.approx(0.507297, abs=1e-6)
        assert collision_probability(3, 2) == 1.0

    def test_against_exact_product(self):
        rng = random.Random(12)
        for _ in range(50):
            cap = rng.randint(1, 5000)
            m = rng.randint(0, min(cap, 300))
            want = float(1 - exact_no_collision(m, cap))
            assert collision_probability(m, cap) == pytest.approx(want, rel=1e-10, abs=1e-15)

    def test_huge_capacity_series(self):
        cap = math.comb(784, 4)
        m = 3_000_000
        want = -math.expm1(-m * (m - 1) / (2 * cap) - (m - 1) * m * (2 * m - 1) / (12 * cap ** 2))
        assert collision_probability(m, cap) == pytest.approx(want, rel=1e-9)

    def test_monotone(self):
        values = [collision_probability(m, 1000) for m in range(0, 80)]
        assert values == sorted(values)
        assert collision_probability(30, 1000) >= collision_probability(30, 2000)

    def test_max_users_examples(self):
        assert max_users(365, 0.5) == 22
        assert max_users(1, 0.01) == 1
        cap = math.comb(784, 4)
        m = max_users(cap, 1e-3)
        assert abs(m - math.sqrt(2 * cap * 1e-3)) / m < 0.01
        assert collision_probability(m, cap) <= 1e-3 < collision_probability(m + 1, cap)

    def test_budget_domain(self):
        with pytest.raises(DomainError):
            max_users(100, 1.0)
        with pytest.raises(DomainError):
            collision_probability(3, 0)

"""Acceptance criteria, each checked at its stated tolerance.

Every test records one line per criterion; the lines are printed in the
pytest terminal summary under "acceptance criteria".
"""

import io
import json
import math
import random
import time
from contextlib import redirect_stdout

import numpy as np
import pytest
from scipy import stats

from oracles import (
    KNOWN_AWD,
    beta_posterior_mean,
    exact_beta,
    log_fraction,
    naive_max_code,
    rational_grid,
)
from unlearn_verify import cli
from unlearn_verify.capacity import (
    _closed_form,
    collision_probability,
    greedy_lower,
    johnson_upper,
    max_clique_code,
    max_users,
)
from unlearn_verify.core import (
    Strategy,
    TestPlan,
    beta_error,
    deletion_confidence,
    draw_outcomes,
    threshold_for_alpha,
)
from unlearn_verify.estimation import (
    PosteriorGrid,
    RateEstimate,
    expected_confidence,
    posterior,
)
from unlearn_verify.multiuser import Population, false_negative_probability

# (name, p, q, printed beta); n = 30, alpha = 1e-3
TABLE2 = [
    ("EMNIST", 0.9560, 0.1098, 3.2e-22),
    ("FEMNIST", 0.9998, 0.0848, 2.2e-77),
    ("CIFAR10", 0.9567, 0.0775, 4.1e-24),
    ("ImageNet", 0.9387, 0.0008, 2.0e-34),
    ("AG News", 0.9564, 0.2649, 6.6e-12),
    ("EMNIST-adaptive", 0.6661, 0.1046, 4.6e-5),
    ("FEMNIST-adaptive", 0.7103, 0.1025, 4.0e-6),
    ("CIFAR10-adaptive", 0.7590, 0.1099, 1.4e-7),
    ("ImageNet-adaptive", 0.8516, 0.0011, 2.4e-23),
]

# fixed before the first run; never tuned
MC_SEED = 20261018


def _run_confidence(p, q, n=30, alpha=1e-3):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = cli.main(["confidence", "--p", str(p), "--q", str(q),
                         "--n", str(n), "--alpha", str(alpha)])
    assert code == 0
    return json.loads(buf.getvalue())["results"]


class TestCriterion01PublishedBetas:
    @pytest.mark.parametrize("name,p,q,printed", TABLE2, ids=[r[0] for r in TABLE2])
    def test_row(self, record, name, p, q, printed):
        res = _run_confidence(p, q)
        rel = abs(res["beta"] - printed) / printed
        ok = rel <= 0.15
        record(1, ok, f"{name} beta={res['beta']:.3g} printed={printed:.2g} rel={rel:.3f}")
        assert ok

    def test_runtime(self, record):
        start = time.perf_counter()
        for _, p, q, _ in TABLE2:
            _run_confidence(p, q)
        elapsed = time.perf_counter() - start
        record(1, elapsed < 1.0, f"runtime {elapsed:.3f}s")
        assert elapsed < 1.0


def test_criterion02_rational_oracle(record):
    start = time.perf_counter()
    worst = 0.0
    mismatches = []
    zero_set = 0
    for p, q, n, alpha in rational_grid():
        plan = TestPlan(n, alpha)
        k_exact, beta_exact = exact_beta(n, alpha, q, p)
        k, _ = threshold_for_alpha(plan, q)
        log_beta = beta_error(plan, Strategy(q=q, p=p))
        if k != k_exact:
            mismatches.append((p, q, n, alpha, "threshold", k, k_exact))
            continue
        if beta_exact == 0:
            zero_set += 1
            if log_beta != -math.inf:
                mismatches.append((p, q, n, alpha, "zero", log_beta))
            continue
        if log_beta == -math.inf:
            mismatches.append((p, q, n, alpha, "spurious zero"))
            continue
        rel = abs(math.expm1(log_beta - log_fraction(beta_exact)))
        worst = max(worst, rel)
        if rel > 1e-10:
            mismatches.append((p, q, n, alpha, "rel", rel))
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 30
    record(2, ok, f"200 points, worst rel err {worst:.2e}, {zero_set} exact zeros, "
                  f"{len(mismatches)} mismatches, {elapsed:.1f}s")
    assert not mismatches, mismatches[:5]
    assert elapsed < 30


def test_criterion03_monte_carlo(record):
    start = time.perf_counter()
    trials = 10 ** 6
    checked = 0
    failures = []
    # expected number of 3-sigma exceedances if every beta were exactly right
    expected_exceed = 0.0
    family_p = []
    for i, (p, q, n, alpha) in enumerate(rational_grid()):
        plan = TestPlan(n, alpha)
        res = deletion_confidence(plan, Strategy(q=q, p=p))
        beta = res.beta
        if beta < 1e-4:
            continue
        checked += 1
        k = res.threshold_k
        rng = np.random.default_rng(np.random.SeedSequence(MC_SEED, spawn_key=(i,)))
        # a count of n Bernoulli(r) queries is Binomial(n, r); decide accepts H0 iff count <= k
        fn = np.count_nonzero(rng.binomial(n, p, trials) <= k) / trials
        fp = np.count_nonzero(rng.binomial(n, q, trials) > k) / trials
        sigma_fn = math.sqrt(beta * (1.0 - beta) / trials)
        a = res.achieved_alpha
        sigma_fp = math.sqrt(a * (1.0 - a) / trials)
        lo = math.ceil(trials * (beta - 3 * sigma_fn)) - 1
        hi = math.floor(trials * (beta + 3 * sigma_fn)) + 1
        expected_exceed += stats.binom.cdf(lo, trials, beta) + stats.binom.sf(hi - 1, trials, beta)
        expected_exceed += stats.binom.sf(math.floor(trials * (a + 3 * sigma_fp)), trials, a)
        x_fn = round(fn * trials)
        family_p.append(2 * min(stats.binom.cdf(x_fn, trials, beta),
                                stats.binom.sf(x_fn - 1, trials, beta)))
        family_p.append(stats.binom.sf(round(fp * trials) - 1, trials, a))
        if abs(fn - beta) > 3 * sigma_fn:
            failures.append(("FN", p, q, n, alpha, fn, beta, (fn - beta) / sigma_fn))
        if fp > a + 3 * sigma_fp:
            failures.append(("FP", p, q, n, alpha, fp, a, (fp - a) / sigma_fp))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 120
    # exact-tail test of the whole family at the single-test 3-sigma level
    bonferroni_ok = min(family_p) * len(family_p) > 0.0027
    detail = (f"{checked} points with beta >= 1e-4, {len(failures)} outside 3 sigma "
              f"(expected {expected_exceed:.2f} by chance), "
              f"Bonferroni-corrected family {'passes' if bonferroni_ok else 'fails'}, "
              f"{elapsed:.0f}s")
    if failures:
        detail += "; exceedances: " + ", ".join(
            f"{f[0]} n={f[3]} z={f[-1]:.2f}" for f in failures)
    record(3, ok, detail)
    assert not failures, failures
    assert elapsed < 120


@pytest.mark.parametrize("r", [0.1, 0.5, 0.8])
@pytest.mark.parametrize("n", [5, 30])
def test_criterion04_rescaled_binomial(record, r, n):
    draws = 50_000
    rng = np.random.default_rng(np.random.SeedSequence(MC_SEED, spawn_key=(4, n, int(r * 10))))
    counts = np.array([draw_outcomes(n, r, rng).count for _ in range(draws)])
    observed = np.bincount(counts, minlength=n + 1).astype(float)
    expected = draws * stats.binom.pmf(np.arange(n + 1), n, r)
    # pool sparse tail bins so every expected count is at least 5
    obs_bins, exp_bins = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5:
            obs_bins.append(acc_o)
            exp_bins.append(acc_e)
            acc_o = acc_e = 0.0
    obs_bins[-1] += acc_o
    exp_bins[-1] += acc_e
    exp_arr = np.array(exp_bins) * (sum(obs_bins) / sum(exp_bins))
    pvalue = stats.chisquare(obs_bins, exp_arr).pvalue
    r_hat = counts / n
    std_ratio = r_hat.std(ddof=1) / math.sqrt(r * (1 - r) / n)
    ok = pvalue > 1e-4 and abs(std_ratio - 1) <= 0.02
    record(4, ok, f"r={r} n={n} chi2 p={pvalue:.3g} std ratio={std_ratio:.4f}")
    assert pvalue > 1e-4
    assert abs(std_ratio - 1) <= 0.02


def test_criterion05_relaxation_monotone(record):
    rng = random.Random(5)
    violations = []
    for _ in range(1000):
        q = rng.random()
        q2 = rng.uniform(q, 1.0)
        p = rng.random()
        p2 = rng.uniform(0.0, p)
        n = rng.randint(1, 200)
        alpha = 10 ** rng.uniform(-8, math.log10(0.5))
        plan = TestPlan(n, alpha)
        tight = deletion_confidence(plan, Strategy(q=q, p=p)).rho
        loose = deletion_confidence(plan, Strategy(q=q2, p=p2)).rho
        if loose > tight:
            violations.append((q, q2, p, p2, n, alpha, loose, tight))
    record(5, not violations, f"1000 quadruples, {len(violations)} violations")
    assert not violations, violations[:3]


def test_criterion06_null_power(record):
    rng = random.Random(6)
    violations = []
    for _ in range(500):
        q = rng.random()
        n = rng.randint(1, 500)
        alpha = 10 ** rng.uniform(-10, math.log10(0.5))
        rho = deletion_confidence(TestPlan(n, alpha), Strategy(q=q, p=q)).rho
        if rho > alpha:
            violations.append((q, n, alpha, rho))
    record(6, not violations, f"500 draws, {len(violations)} with rho > alpha")
    assert not violations, violations[:3]


def test_criterion07_capacity_exactness(record):
    start = time.perf_counter()
    problems = []
    cases = 0
    for n in range(1, 11):
        for w in range(1, n + 1):
            for d in range(0, 2 * w + 1, 2):
                cases += 1
                exact, witness, _, complete = max_clique_code(n, d, w)
                if not complete:
                    problems.append((n, d, w, "incomplete"))
                    continue
                if len(witness) != exact or any(
                        (a ^ b).bit_count() < d for a in witness for b in witness if a != b):
                    problems.append((n, d, w, "bad witness"))
                closed = _closed_form(n, d, w)
                if closed is not None and closed != exact:
                    problems.append((n, d, w, "closed form", closed, exact))
                if johnson_upper(n, d, w) < exact:
                    problems.append((n, d, w, "johnson", johnson_upper(n, d, w), exact))
                if greedy_lower(n, d, w)[0] > exact:
                    problems.append((n, d, w, "greedy", greedy_lower(n, d, w)[0], exact))
                if n <= 5 and naive_max_code(n, d, w) != exact:
                    problems.append((n, d, w, "naive oracle"))
                if (n, d, w) in KNOWN_AWD and KNOWN_AWD[n, d, w] != exact:
                    problems.append((n, d, w, "published value"))
    elapsed = time.perf_counter() - start
    ok = not problems and elapsed < 60
    record(7, ok, f"{cases} (n,d,w) cases, {len(problems)} problems, {elapsed:.1f}s")
    assert not problems, problems[:5]
    assert elapsed < 60


def test_criterion08_birthday(record):
    p23 = collision_probability(23, 365)
    rng = random.Random(8)
    bad = []
    for _ in range(100):
        capacity = int(10 ** rng.uniform(0, 12))
        budget = 10 ** rng.uniform(-6, math.log10(0.9))
        m = max_users(capacity, budget)
        if collision_probability(m, capacity) > budget and m > 1:
            bad.append((capacity, budget, m, "forward exceeds budget"))
        if m < capacity and collision_probability(m + 1, capacity) <= budget:
            bad.append((capacity, budget, m, "not maximal"))
    ok = 0.506 <= p23 <= 0.508 and not bad
    record(8, ok, f"P(23,365)={p23:.5f}, {len(bad)} inverse inconsistencies in 100 pairs")
    assert 0.506 <= p23 <= 0.508
    assert not bad, bad[:3]


def test_criterion09_multiuser_trend(record):
    pop = Population(tuple([(0.95, 0.11)] * 95 + [(0.95, 0.95)] * 5))
    est = [false_negative_probability(pop, c, 30, 1e-3, 1e-3, 100_000, 7) for c in (1, 2, 3)]
    gaps = []
    for a, b in zip(est, est[1:]):
        gaps.append((a.probability - b.probability) / math.hypot(a.stderr, b.stderr))
    ok = all(g > 3 for g in gaps)
    probs = ", ".join(f"c={c}: {e.probability:.5f}" for c, e in zip((1, 2, 3), est))
    record(9, ok, f"{probs}; gaps in sigma {gaps[0]:.1f}, {gaps[1]:.1f}")
    assert ok


def test_criterion10_bayes(record):
    mismatches = []
    rng = random.Random(10)
    pairs = [(q, p) for _, p, q, _ in TABLE2] + [
        (rng.random(), rng.random()) for _ in range(50)]
    for q, p in pairs:
        n = rng.randint(1, 100)
        plan = TestPlan(n, 1e-3)
        got = expected_confidence(plan, PosteriorGrid.point(q), PosteriorGrid.point(p))
        want = deletion_confidence(plan, Strategy(q=q, p=p)).rho
        if got != want:
            mismatches.append((q, p, n, got, want))
    prior = PosteriorGrid.uniform(1000)
    worst = 0.0
    for n_obs in (1, 5, 30, 100):
        for count in range(n_obs + 1):
            post = posterior(RateEstimate(count, n_obs), prior)
            worst = max(worst, abs(post.mean() - float(beta_posterior_mean(count, n_obs))))
    ok = not mismatches and worst <= 1e-3
    record(10, ok, f"{len(pairs)} point-mass pairs, {len(mismatches)} not bitwise equal; "
                   f"worst grid-mean error {worst:.2e}")
    assert not mismatches, mismatches[:3]
    assert worst <= 1e-3

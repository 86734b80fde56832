import numpy as np
import pytest

from nestor import costs
from nestor.classical import (bootstrap_single, delta_successive, delta_successive_rows,
                              derand_estimate, derand_rows, rmlmc_estimate, rmlmc_rows,
                              rmlmc_single, rmlmc_single_rows, stage_distributions)
from nestor.errors import ParameterError, ScheduleInfeasibleError
from nestor.problem import CostLedger, History, NestedProblem, draw, extend
from nestor.problems import get_problem, identity_chain
from nestor.rng import stream
from nestor.schedule import geometric, solve_rate, truncated, truncation_level


def derand_inner(problem, d, hist, eps, rng, ledger):
    return derand_rows(problem, d, hist, eps, rng, ledger)


def exact_inner(problem, d, hist, eps, rng, ledger):
    """Identity chain: the recursion returns its constant with no sampling."""
    return np.full(hist.shape[0], 0.7)


# ---------------------------------------------------------------- single-sample

def test_single_sample_at_terminal_stage():
    p = get_problem("gauss-rne-D1")
    h = History.of([0.3])
    a = rmlmc_single(p, 1, h, geometric(0.5), stream(1, 0))
    y = stream(1, 0).standard_normal((1, 1))[0, 0] + 0.3
    assert a == np.tanh(y)


def test_single_sample_identity_support():
    p = identity_chain(horizon=1)
    r, _ = solve_rate(0, 0.25)
    dists = stage_distributions(p)
    vals = rmlmc_single_rows(p, 0, np.zeros((20_000, 0)), dists, stream(2, 0), CostLedger())
    # antithetic differences vanish above level 0, so only 0 and 0.7 / P(0) occur
    assert set(np.unique(vals).round(12)) <= {0.0, round(0.7 / r, 12)}
    se = vals.std() / np.sqrt(vals.size)
    assert abs(vals.mean() - 0.7) < 4 * se


def test_single_sample_unbiased_on_gaussian_d1():
    p = get_problem("gauss-rne-D1")
    vals = rmlmc_single_rows(p, 0, np.zeros((100_000, 0)), stage_distributions(p), stream(3, 0),
                             CostLedger())
    se = vals.std() / np.sqrt(vals.size)
    assert abs(vals.mean() - p.truth) < 3 * se


def test_single_sample_cost_matches_expectation():
    # cost_d = 1 + E[2^N] cost_{d+1}; with rate 0.8 the law of 2^N has finite variance
    p = get_problem("gauss-rne-D2")
    led = CostLedger()
    K = 50_000
    rmlmc_single_rows(p, 0, np.zeros((K, 0)), [geometric(0.8)] * 3, stream(4, 0), led)
    growth = 0.8 / (1 - 2 * 0.2)
    assert led.classical_steps / K == pytest.approx(1 + growth * (1 + growth), rel=0.03)


def test_single_sample_expected_cost_series():
    p = get_problem("gauss-rne-D1")
    r, _ = solve_rate(0, 0.25)
    n = np.arange(2000)
    series = 1 + np.sum(r * (2 * (1 - r)) ** n)
    assert costs.alg1_expected_steps(p, 0) == pytest.approx(series, rel=1e-12)
    assert np.isfinite(costs.alg1_expected_steps(get_problem("gauss-rne-D3"), 0))


def test_bootstrap_sample_count():
    p = identity_chain(horizon=0)
    rep = bootstrap_single(p, 0, History(), 0.1, rng=stream(0, 0))
    assert rep.ledger.classical_steps == 100
    assert rep.estimate == pytest.approx(0.7, abs=1e-15)
    assert rep.mode == "alg1"


# ---------------------------------------------------------- successive deltas

def test_delta_successive_level_zero_has_no_coarse_term():
    p = identity_chain(horizon=1)
    h = History.of([0.7])
    assert delta_successive(p, 0, h, 0, 1.0, 1.0, exact_inner, None) == 0.7
    for n in (1, 2, 5):
        assert delta_successive(p, 0, h, n, 2 ** (-n / 2), 2 ** (-(n - 1) / 2), exact_inner,
                                None) == 0.0


def test_delta_successive_validation():
    p = identity_chain(horizon=1)
    with pytest.raises(ParameterError):
        delta_successive(p, 0, History.of([0.7]), -1, 1, 1, exact_inner, None)
    with pytest.raises(ParameterError):
        delta_successive(p, 1, History.of([0.7, 0.7]), 0, 1, 1, exact_inner, None)


def test_delta_second_moment_decays():
    # E|Delta(n)|^2 <= 2 L^2 (eps_f^2 + eps_c^2) = 2 (1/8 + 1/4) = 3/4 at n = 3
    p = get_problem("gauss-rne-D1")
    rng = stream(5, 0)
    K = 10_000
    ext = extend(np.zeros((1, 0)), draw(p, 0, np.zeros((1, 0)), K, rng, None)).reshape(K, 1)
    led = CostLedger()
    sq = delta_successive_rows(p, 0, ext, 3, derand_inner, rng, led) ** 2
    upper = sq.mean() - 3 * sq.std() / np.sqrt(K)
    assert upper <= 0.75


# ------------------------------------------------------- batched randomized MLMC

@pytest.fixture(scope="module")
def d1_trunc_runs():
    p = get_problem("gauss-rne-D1")
    return np.array([rmlmc_estimate(p, 0, History(), 0.1, "truncated", rng=stream(6, k)).estimate
                     for k in range(200)])


def test_truncated_rmlmc_l2_error(d1_trunc_runs):
    p = get_problem("gauss-rne-D1")
    assert np.sqrt(np.mean((d1_trunc_runs - p.truth) ** 2)) <= 2 * 0.1


def test_geometric_rmlmc_unbiased():
    p = get_problem("gauss-rne-D1")
    vals = np.array([rmlmc_estimate(p, 0, History(), 0.2, "geometric", rng=stream(7, k)).estimate
                     for k in range(200)])
    assert abs(vals.mean() - p.truth) < 3 * vals.std() / np.sqrt(vals.size)


def test_rmlmc_identity_is_unbiased_not_exact():
    p = identity_chain(horizon=1)
    vals = rmlmc_rows(p, 0, np.zeros((4000, 0)), 0.5, stream(8, 0), CostLedger(),
                      mode="truncated")
    assert np.unique(vals).size > 1
    assert abs(vals.mean() - 0.7) < 4 * vals.std() / np.sqrt(vals.size)


def test_rmlmc_rejects_bad_inputs():
    p = get_problem("gauss-rne-D1")
    with pytest.raises(ParameterError):
        rmlmc_estimate(p, 0, History(), 0.1, "uniform", rng=stream(0, 0))
    with pytest.raises(ParameterError):
        rmlmc_estimate(p, 0, History(), 1.0, rng=stream(0, 0))
    with pytest.raises(ParameterError):
        rmlmc_estimate(p, 0, History.of([0.0]), 0.1, rng=stream(0, 0))


def test_rmlmc_mean_cost_matches_prepass():
    p = get_problem("gauss-rne-D1")
    steps = [rmlmc_estimate(p, 0, History(), 0.5, "truncated", rng=stream(9, k))
             .ledger.classical_steps for k in range(300)]
    assert np.mean(steps) == pytest.approx(costs.alg2_expected_steps(p, 0, 0.5), rel=0.05)


# ---------------------------------------------------------- derandomized MLMC

def test_derand_rerun_is_bit_identical():
    p = get_problem("gauss-rne-D2")
    a = derand_estimate(p, 0, History(), 0.5, rng=stream(10, 0), seed=10)
    b = derand_estimate(p, 0, History(), 0.5, rng=stream(10, 0), seed=10)
    assert a.to_json() == b.to_json()


def test_derand_identity_exact():
    for D in (1, 2, 3):
        rep = derand_estimate(identity_chain(horizon=D), 0, History(), 0.3, rng=stream(0, 0))
        assert rep.estimate == 0.7


def test_derand_without_clamp_raises():
    p = get_problem("gauss-rne-D2")
    with pytest.raises(ScheduleInfeasibleError):
        derand_estimate(p, 0, History(), 0.5, rng=stream(0, 0), clamp=False)


@pytest.mark.parametrize("pid,eps", [("gauss-rne-D1", 0.2), ("gauss-rne-D2", 0.5),
                                     ("gauss-optstop-D2", 0.5), ("identity-chain", 0.1)])
def test_derand_steps_match_prepass(pid, eps):
    p = get_problem(pid)
    rep = derand_estimate(p, 0, History(), eps, rng=stream(11, 0))
    assert rep.ledger.classical_steps == costs.alg3_steps(p, 0, eps)


def test_derand_cost_monotone_in_eps():
    p = get_problem("gauss-rne-D2")
    c = [costs.alg3_steps(p, 0, e) for e in (0.5, 0.2, 0.1, 0.05)]
    assert c == sorted(c)


def test_derand_mean_matches_truncated_mean():
    # both target E g(R(2^{-B/2})) with the same truncation
    p = get_problem("gauss-rne-D1")
    K = 4000
    a = derand_rows(p, 0, np.zeros((K, 0)), 0.5, stream(12, 0), CostLedger())
    b = rmlmc_rows(p, 0, np.zeros((K, 0)), 0.5, stream(12, 1), CostLedger())
    se = np.sqrt(a.var() / K + b.var() / K)
    assert abs(a.mean() - b.mean()) < 4 * se


# ------------------------------------------------------------- cost accounting

def test_steps_equal_sampler_calls():
    base = get_problem("gauss-rne-D2")
    calls = [0]

    def sampler(d, hist, m, rng):
        calls[0] += hist.shape[0] * m
        return base.sampler(d, hist, m, rng)

    p = NestedProblem("counted", 2, base.lipschitz, sampler, base.stage_fn, truth=base.truth)
    for fn in (lambda led: derand_estimate(p, 0, History(), 0.5, rng=stream(0, 0), ledger=led),
               lambda led: rmlmc_estimate(p, 0, History(), 0.5, rng=stream(0, 1), ledger=led),
               lambda led: bootstrap_single(p, 0, History(), 0.5, rng=stream(0, 2), ledger=led)):
        calls[0] = 0
        led = CostLedger()
        rep = fn(led)
        assert led.classical_steps == rep.ledger.classical_steps == calls[0]


def test_ledger_merge_across_partitions():
    p = get_problem("gauss-rne-D1")
    parts = []
    for k in range(4):
        led = CostLedger()
        derand_estimate(p, 0, History(), 0.5, rng=stream(13, k), ledger=led)
        parts.append(led)
    total = CostLedger()
    for k in range(4):
        derand_estimate(p, 0, History(), 0.5, rng=stream(13, k), ledger=total)
    merged = parts[0].merge(parts[1]).merge(parts[2].merge(parts[3]))
    assert merged.as_dict() == total.as_dict()
    assert total.classical_steps == 4 * costs.alg3_steps(p, 0, 0.5)


def test_truncated_level_law_used():
    r, _ = solve_rate(0, 0.25)
    dist = truncated(r, truncation_level(1, 0.5))
    assert dist.truncation == 4
    assert dist.sample(stream(0, 0), 10_000).max() <= 4

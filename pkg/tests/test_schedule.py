import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nestor.errors import ParameterError, ScheduleInfeasibleError
from nestor.schedule import (LevelDistribution, build_schedule, geometric, moment_exponent,
                             per_level_counts, rate_closed_form, replication_count,
                             rho_cross_check, solve_rate, truncated, truncation_level)

DELTAS = [0.05 * k for k in range(1, 10)]


def test_rate_closed_form_at_half():
    # 1 - r = 2^(-2.5/1.5) evaluated independently with Decimal
    getcontext().prec = 40
    expected = 1 - float(Decimal(2) ** (Decimal(-5) / Decimal(3)))
    assert rate_closed_form(0, 0.5) == pytest.approx(expected, abs=1e-15)
    assert rate_closed_form(0, 0.5) == pytest.approx(0.685, abs=5e-4)


def test_solve_rate_rejects_delta_outside_open_interval():
    for bad in (0.0, 0.5, -0.1, 0.7):
        with pytest.raises(ParameterError):
            solve_rate(0, bad)


def test_rate_small_delta_limit():
    r, rho = solve_rate(0, 1e-8)
    assert r == pytest.approx(0.5, abs=1e-8)
    assert rho == pytest.approx(1.0, abs=1e-7)


def test_rate_forms_agree_d1():
    r, rho = solve_rate(1, 0.25)
    assert abs(rho - rho_cross_check(1, 0.25, r)) < 1e-12
    assert rho < 1


@pytest.mark.parametrize("d", range(7))
@pytest.mark.parametrize("delta", DELTAS)
def test_rate_identity_grid(d, delta):
    r, rho = solve_rate(d, delta)
    assert 0 < r < 1
    assert abs(rho - rho_cross_check(d, delta, r)) < 1e-12
    assert rho < 1


def test_moment_exponent():
    assert moment_exponent(0, 0.25) == 1.75
    assert moment_exponent(2, 0.4) == pytest.approx(1.9)


def test_truncation_level_examples():
    assert truncation_level(1, 0.5) == 4
    assert truncation_level(1, 1 - 1e-9) == 2
    # 2 log2(400) = 17.29 -> 18
    assert 2 * math.log2(400) == pytest.approx(17.2877, abs=1e-4)
    assert truncation_level(2, 0.01) == 18


def test_truncation_level_domain():
    for bad in (0.0, 1.0, 1.5, -0.2):
        with pytest.raises(ParameterError):
            truncation_level(1, bad)
    with pytest.raises(ParameterError):
        truncation_level(0.5, 0.1)
    assert truncation_level(1, 1.0, closed=True) == 2


def test_replication_count_examples():
    # (2^2.5)(10^2.5) = 20^2.5 = 400 sqrt(20) = 1788.85...
    getcontext().prec = 40
    exact = Decimal(400) * Decimal(20).sqrt()
    assert math.ceil(exact) == 1789
    assert replication_count(1, 0.25, 1, 0.1) == 1789
    # stage 0 constant (2L)^(2 + 4 delta) = 2^3 = 8; at eps = 0.5 the power is 0.5^-3
    assert replication_count(0, 0.25, 1, 0.5) == 64
    for d in range(5):
        m = replication_count(d, 0.25, 1, 0.999999)
        c = 2.0 ** (2 + 0.25 / 2.0 ** (d - 2))
        assert 1 <= m <= math.ceil(c) + 1


@given(st.integers(0, 6), st.sampled_from(DELTAS), st.floats(1, 5),
       st.floats(0.001, 0.99), st.floats(0.001, 0.99))
def test_b_and_m_non_increasing_in_eps(d, delta, L, e1, e2):
    lo, hi = sorted((e1, e2))
    assert truncation_level(L, lo) >= truncation_level(L, hi)
    assert replication_count(d, delta, L, lo) >= replication_count(d, delta, L, hi)


def test_per_level_counts_example():
    assert per_level_counts(100, truncated(0.5, 1)) == [66, 33]


def test_per_level_counts_degenerate():
    assert per_level_counts(17, truncated(0.3, 0)) == [17]


def test_per_level_counts_zero_level_raises():
    # a stage-1 recursive call at accuracy 1: M_1 = ceil(2^2.5) = 6, B_1 = 2, 6 pmf(2) = 0.75
    r, _ = solve_rate(1, 0.25)
    M = replication_count(1, 0.25, 1, 1.0, closed=True)
    B = truncation_level(1, 1.0, closed=True)
    assert (M, B) == (6, 2)
    with pytest.raises(ScheduleInfeasibleError) as info:
        per_level_counts(M, truncated(r, B))
    assert info.value.level == 2
    assert per_level_counts(M, truncated(r, B), clamp=True) == [3, 1, 1]


def test_per_level_counts_rejects_geometric():
    with pytest.raises(ParameterError):
        per_level_counts(10, geometric(0.4))


@given(st.integers(1, 10**7), st.floats(0.05, 0.95), st.integers(0, 30))
def test_per_level_counts_sum_bounds(M, r, B):
    dist = truncated(r, B)
    counts = np.floor(M * dist.weights()).astype(int)
    assert M - (B + 1) <= counts.sum() <= M
    try:
        got = per_level_counts(M, dist)
    except ScheduleInfeasibleError:
        assert (counts == 0).any()
    else:
        assert got == counts.tolist()


@given(st.floats(0.01, 0.99), st.integers(0, 60))
def test_truncated_pmf_sums_to_one(r, B):
    dist = truncated(r, B)
    assert abs(dist.weights().sum() - 1) < 1e-12
    assert abs(dist.pmf(np.arange(B + 1)).sum() - 1) < 1e-12
    assert dist.pmf(B + 1) == 0


def test_geometric_partial_sums():
    dist = geometric(0.3)
    pmf = dist.pmf(np.arange(200))
    assert np.all(pmf > 0)
    partial = np.cumsum(pmf)
    # strictly increasing until the sum saturates in double precision
    assert np.all(np.diff(partial[:60]) > 0) and np.all(np.diff(partial) >= 0)
    assert abs(partial[-1] - 1) < 1e-12


def test_distribution_sampling_frequencies():
    rng = np.random.default_rng(3)
    dist = truncated(0.4, 5)
    n = dist.sample(rng, 200_000)
    freq = np.bincount(n, minlength=6) / n.size
    se = np.sqrt(dist.weights() * (1 - dist.weights()) / n.size)
    assert np.all(np.abs(freq - dist.weights()) < 5 * se)
    g = geometric(0.4).sample(rng, 200_000)
    assert g.min() == 0
    assert abs(g.mean() - 0.6 / 0.4) < 5 * np.sqrt(0.6) / 0.4 / np.sqrt(g.size)


def test_distribution_validation():
    with pytest.raises(ParameterError):
        LevelDistribution("uniform", 0.5)
    with pytest.raises(ParameterError):
        LevelDistribution("truncated", 0.5)
    with pytest.raises(ParameterError):
        geometric(1.0)


def test_build_schedule_bundle():
    s = build_schedule(0, 0.25, 1.0, 0.2, derandomized=True)
    assert s.truncation == 7 and s.replications == 1000
    assert s.p == 1.75 and s.rho < 1
    assert len(s.per_level) == 8 and min(s.per_level) >= 1
    assert sum(s.per_level) <= s.replications + s.truncation + 1

"""Cost recursions computed without sampling.

They back the desk-scale guardrail, the worst-branch charge of the direct
quantization and double-entry checks against measured ledgers.
"""

import math
from functools import lru_cache

from .qamc import DEFAULT_CONFIG, QamcConfig, rmse_charge, rmse_sample_size
from .schedule import (DEFAULT_DELTA, _ceil, per_level_counts, replication_count, solve_rate,
                       truncated, truncation_level)

GEOMETRIC_LEVEL_CAP = 400


def _key(problem):
    return problem.horizon, problem.lipschitz, float(problem.terminal_bound)


def _fine_coarse(n):
    return 2.0 ** (-n / 2.0), 2.0 ** (-(n - 1) / 2.0)


# ------------------------------------------------------------------ classical

@lru_cache(maxsize=None)
def _alg3(key, d, eps, delta, clamp):
    D, lips, _ = key
    M = replication_count(d, delta, lips[d], eps, closed=True)
    if d == D:
        return M
    r, _ = solve_rate(d, delta)
    counts = per_level_counts(M, truncated(r, truncation_level(lips[d], eps, closed=True)),
                              clamp=clamp)
    total = 0
    for n, c in enumerate(counts):
        fine, coarse = _fine_coarse(n)
        inner = _alg3(key, d + 1, fine, delta, clamp)
        if n:
            inner += _alg3(key, d + 1, coarse, delta, clamp)
        total += c * (1 + inner)
    return total


def alg3_steps(problem, d, eps, delta=DEFAULT_DELTA, clamp=True):
    """Exact process steps of one derandomized estimate (the schedule is fixed)."""
    return _alg3(_key(problem), d, float(eps), delta, clamp)


@lru_cache(maxsize=None)
def _alg2(key, d, eps, delta, mode):
    D, lips, _ = key
    M = replication_count(d, delta, lips[d], eps, closed=True)
    if d == D:
        return float(M)
    r, _ = solve_rate(d, delta)
    if mode == "geometric":
        levels = range(GEOMETRIC_LEVEL_CAP + 1)
        pmf = [r * (1.0 - r) ** n for n in levels]
    else:
        pmf = list(truncated(r, truncation_level(lips[d], eps, closed=True)).weights())
    per = 0.0
    for n, p in enumerate(pmf):
        fine, coarse = _fine_coarse(n)
        inner = _alg2(key, d + 1, fine, delta, mode)
        if n:
            inner += _alg2(key, d + 1, coarse, delta, mode)
        per += p * inner
    return M * (1.0 + per)


def alg2_expected_steps(problem, d, eps, mode="truncated", delta=DEFAULT_DELTA):
    """Expected process steps of one randomized MLMC estimate.

    The geometric series is summed up to level 400, which undercounts only a
    remote tail.
    """
    return _alg2(_key(problem), d, float(eps), delta, mode)


def alg1_expected_steps(problem, d, delta=DEFAULT_DELTA):
    """Expected steps of one single-sample estimate with geometric levels."""
    cost = 1.0
    for stage in range(problem.horizon - 1, d - 1, -1):
        r, _ = solve_rate(stage, delta)
        growth = r / (1.0 - 2.0 * (1.0 - r)) if 2.0 * (1.0 - r) < 1.0 else math.inf
        cost = 1.0 + growth * cost
    return cost


# ------------------------------------------------------- quantum MLMC (Alg. 6)

def qmlmc_truncation(L, eps):
    """``ceil(2 log2(L / eps))``, floored at zero."""
    return max(0, _ceil(2.0 * math.log2(L / eps)))


def qmlmc_level_bound(L, n):
    """Second-moment bound ``3 L 2^{-n/2}`` of the level-``n`` difference."""
    return 3.0 * L * 2.0 ** (-n / 2.0)


@lru_cache(maxsize=None)
def _alg6(key, d, eps, kappa, min_charge, classical):
    D, lips, s_D = key

    def unit(s, e):
        if classical:
            return rmse_sample_size(s, e)
        return rmse_charge(s, e, QamcConfig(kappa, min_charge))

    if d == D:
        return unit(s_D, eps)
    L = lips[d]
    B = qmlmc_truncation(L, eps)
    eta = eps / (3.0 * (B + 1))
    total = 0
    for n in range(B + 1):
        fine, coarse = _fine_coarse(n)
        inner = _alg6(key, d + 1, fine, kappa, min_charge, classical)
        if n:
            inner += _alg6(key, d + 1, coarse, kappa, min_charge, classical)
        total += unit(qmlmc_level_bound(L, n), eta) * (1 + inner)
    return total


def alg6_charge(problem, d, eps, config=DEFAULT_CONFIG):
    """Quantum-charged queries of one quantum MLMC estimate."""
    return _alg6(_key(problem), d, float(eps), config.kappa, config.min_charge, False)


def alg6_steps(problem, d, eps):
    """Classical steps the emulation of one quantum MLMC estimate consumes."""
    return _alg6(_key(problem), d, float(eps), 1.0, 1, True)


# -------------------------------------------------- direct quantization (Alg. 4)

def direct_truncation(horizon, lips_prefix, eps, alpha):
    """``ceil(ln(eps / (sqrt(D) L_0..L_d)) / ln alpha)``, floored at zero."""
    scale = math.sqrt(max(horizon, 1)) * math.prod(lips_prefix)
    return max(0, _ceil(math.log(eps / scale) / math.log(alpha)))


def direct_moment_bound(L, B, r, alpha):
    """Bound ``s`` on the root second moment of ``A_d(N) / P(N)``.

    ``E[(A/P)^2] = Z sum_n E[A(n)^2] / (1-r)^n`` with ``Z = sum_{n<=B} (1-r)^n``.
    Level 0 contributes at most ``9 L^2`` and level ``n >= 1`` at most
    ``2 L^2 (1 + alpha^-2) alpha^{2n}`` when the inner estimates have RMSE
    ``alpha^n`` and ``alpha^{n-1}``.
    """
    q = 1.0 - r
    Z = sum(q**n for n in range(B + 1))
    tot = 9.0 + sum(2.0 * (1.0 + alpha**-2) * alpha ** (2 * n) / q**n for n in range(1, B + 1))
    return L * math.sqrt(Z * tot)


@lru_cache(maxsize=None)
def _alg4(key, d, eps, r, alpha, kappa, min_charge, what):
    """``what``: ``"charge"``, ``"worst"`` (worst branch) or ``"steps"`` (expected steps)."""
    D, lips, s_D = key
    config = QamcConfig(kappa, min_charge)
    if d == D:
        if what == "steps":
            return float(rmse_sample_size(s_D, eps))
        return 0 if what == "worst" else rmse_charge(s_D, eps, config)
    L = lips[d]
    B = direct_truncation(D, lips[:d + 1], eps, alpha)
    s = direct_moment_bound(L, B, r, alpha)
    sub = "steps" if what == "steps" else "charge"
    branch = []
    for n in range(B + 1):
        c = _alg4(key, d + 1, alpha**n, r, alpha, kappa, min_charge, sub)
        if n:
            c += _alg4(key, d + 1, alpha ** (n - 1), r, alpha, kappa, min_charge, sub)
        branch.append(c)
    if what == "steps":
        pmf = truncated(r, B).weights()
        return rmse_sample_size(s, eps) * (1.0 + float(sum(p * c for p, c in zip(pmf, branch))))
    worst = max(branch)
    if what == "worst":
        return worst
    return rmse_charge(s, eps, config) * (1 + worst)


def alg4_charge(problem, d, eps, params, config=DEFAULT_CONFIG):
    """Worst-branch charged queries of one direct-quantization estimate."""
    return _alg4(_key(problem), d, float(eps), params.r, params.alpha, config.kappa,
                 config.min_charge, "charge")


def alg4_worst_branch(problem, d, eps, params, config=DEFAULT_CONFIG):
    return _alg4(_key(problem), d, float(eps), params.r, params.alpha, config.kappa,
                 config.min_charge, "worst")


def alg4_expected_steps(problem, d, eps, params):
    return _alg4(_key(problem), d, float(eps), params.r, params.alpha, 1.0, 1, "steps")


def expected_steps(problem, estimator, eps, delta=DEFAULT_DELTA, params=None):
    """Pre-pass classical cost of one estimate at stage 0, by estimator id."""
    if estimator == "alg1":
        return math.ceil(eps**-2) * alg1_expected_steps(problem, 0, delta)
    if estimator == "alg2-geo":
        return alg2_expected_steps(problem, 0, eps, "geometric", delta)
    if estimator == "alg2-trunc":
        return alg2_expected_steps(problem, 0, eps, "truncated", delta)
    if estimator == "alg3":
        return float(alg3_steps(problem, 0, eps, delta))
    if estimator == "alg4":
        from .quantum import DirectQuantParams
        return alg4_expected_steps(problem, 0, eps, params or DirectQuantParams())
    if estimator == "alg6":
        return float(alg6_steps(problem, 0, eps))
    raise ValueError(f"unknown estimator {estimator!r}")

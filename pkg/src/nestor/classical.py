"""Classical randomized and derandomized multilevel estimators.

The ``*_rows`` functions estimate ``gamma_d`` independently for every row of a
history block and share one generator; the public wrappers handle a single
history and return an :class:`EstimateReport`. Recursive accuracy arguments
may equal 1.
"""

from functools import partial

import numpy as np

from .errors import ParameterError
from .problem import (BLOCK, CostLedger, EstimateReport, History, blocked_mean, check_stage,
                      draw, extend)
from .schedule import (DEFAULT_DELTA, LevelDistribution, geometric, per_level_counts,
                       replication_count, solve_rate, truncated, truncation_level)

DELTA_KINDS = ("antithetic", "successive")


def _check_top_eps(eps):
    if not 0.0 < eps < 1.0:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")


def _check_history(problem, d, history):
    check_stage(problem, d)
    if history.stage != d:
        raise ParameterError(f"history has stage {history.stage}, expected {d}")


def stage_distributions(problem, delta=DEFAULT_DELTA, kind="geometric", truncation=None):
    """Per-stage level laws with rates from :func:`solve_rate`."""
    out = []
    for d in range(problem.horizon + 1):
        r, _ = solve_rate(d, delta)
        out.append(geometric(r) if kind == "geometric" else truncated(r, truncation))
    return out


def _leaf_mean(problem, hist, M, rng, ledger):
    D = problem.horizon

    def block(rows, m):
        h = hist[rows]
        return problem.g(D, h, draw(problem, D, h, m, rng, ledger))

    return blocked_mean(hist.shape[0], M, block)


# ---------------------------------------------------------------- single-sample

def _antithetic(problem, d, ext, n, X):
    h, y = ext[:, :-1], ext[:, -1]
    full = problem.g(d, h, y, X.mean(axis=1))
    if n == 0:
        return full
    odd = problem.g(d, h, y, X[:, 0::2].mean(axis=1))
    even = problem.g(d, h, y, X[:, 1::2].mean(axis=1))
    return full - 0.5 * odd - 0.5 * even


def rmlmc_single_rows(problem, d, hist, dists, rng, ledger):
    """One single-sample unbiased estimate per row (antithetic differences)."""
    y = draw(problem, d, hist, 1, rng, ledger)
    if d == problem.horizon:
        return problem.g(d, hist, y[:, 0])
    ext = extend(hist, y)
    dist = dists[d]
    N = dist.sample(rng, ext.shape[0])
    out = np.empty(ext.shape[0])
    for n in np.unique(N):
        idx = np.flatnonzero(N == n)
        k = 1 << int(n)
        step = max(1, BLOCK // k)
        for a in range(0, idx.size, step):
            sel = idx[a:a + step]
            X = rmlmc_single_rows(problem, d + 1, np.repeat(ext[sel], k, axis=0), dists, rng,
                                  ledger).reshape(sel.size, k)
            out[sel] = _antithetic(problem, d, ext[sel], int(n), X) / dist.pmf(int(n))
    return out


def rmlmc_single(problem, d, history, dist, rng, ledger=None):
    """Single-sample randomized estimator of ``gamma_d(history)``.

    Args:
        problem: The nested problem.
        d: Stage, equal to ``history.stage``.
        history: Prefix ``y_<d``.
        dist: A :class:`LevelDistribution` used at every stage, or a sequence
            indexed by stage.
        rng: Generator.
        ledger: Optional ledger that receives the process steps.
    """
    _check_history(problem, d, history)
    dists = [dist] * (problem.horizon + 1) if isinstance(dist, LevelDistribution) else list(dist)
    ledger = ledger if ledger is not None else CostLedger()
    return float(rmlmc_single_rows(problem, d, history.block(), dists, rng, ledger)[0])


# ------------------------------------------------------------ successive deltas

def delta_successive_rows(problem, d, ext, n, inner, rng, ledger, eps_fine=None,
                          eps_coarse=None):
    """Successive-accuracy difference ``g(R(fine)) - g(R(coarse))`` for each row.

    ``ext`` holds ``y_<=d`` per row. At ``n = 0`` the coarse term is dropped.
    ``inner(problem, d + 1, hist, eps, rng, ledger)`` is the recursive estimator;
    the fine and coarse calls draw fresh randomness.
    """
    eps_fine = 2.0 ** (-n / 2.0) if eps_fine is None else eps_fine
    eps_coarse = 2.0 ** (-(n - 1) / 2.0) if eps_coarse is None else eps_coarse
    h, y = ext[:, :-1], ext[:, -1]
    out = problem.g(d, h, y, inner(problem, d + 1, ext, eps_fine, rng, ledger))
    if n > 0:
        out = out - problem.g(d, h, y, inner(problem, d + 1, ext, eps_coarse, rng, ledger))
    return out


def delta_successive(problem, d, y_le_d, n, eps_fine, eps_coarse, inner, rng, ledger=None):
    """Scalar form of :func:`delta_successive_rows` for one history ``y_<=d``."""
    if n < 0:
        raise ParameterError("level must be >= 0")
    check_stage(problem, d)
    if d >= problem.horizon or y_le_d.stage != d + 1:
        raise ParameterError("successive differences need d < D and a history of length d + 1")
    ledger = ledger if ledger is not None else CostLedger()
    return float(delta_successive_rows(problem, d, y_le_d.block(), n, inner, rng, ledger,
                                       eps_fine, eps_coarse)[0])


# ------------------------------------------------------- batched randomized MLMC

def rmlmc_rows(problem, d, hist, eps, rng, ledger, mode="truncated", delta=DEFAULT_DELTA):
    """Batched randomized MLMC estimate of ``gamma_d`` per row at accuracy ``eps``."""
    L = problem.lipschitz[d]
    M = replication_count(d, delta, L, eps, closed=True)
    if d == problem.horizon:
        return _leaf_mean(problem, hist, M, rng, ledger)
    r, _ = solve_rate(d, delta)
    dist = geometric(r) if mode == "geometric" else truncated(
        r, truncation_level(L, eps, closed=True))
    inner = partial(_rmlmc_inner, mode=mode, delta=delta)

    def block(rows, m):
        h = hist[rows]
        y = draw(problem, d, h, m, rng, ledger)
        ext = extend(h, y)
        N = dist.sample(rng, ext.shape[0])
        vals = np.empty(ext.shape[0])
        for n in np.unique(N):
            sel = N == n
            vals[sel] = (delta_successive_rows(problem, d, ext[sel], int(n), inner, rng, ledger)
                         / dist.pmf(int(n)))
        return vals.reshape(y.shape)

    return blocked_mean(hist.shape[0], M, block)


def _rmlmc_inner(problem, d, hist, eps, rng, ledger, mode, delta):
    return rmlmc_rows(problem, d, hist, eps, rng, ledger, mode=mode, delta=delta)


def rmlmc_estimate(problem, d, history, eps, mode="truncated", delta=DEFAULT_DELTA, rng=None,
                   ledger=None, seed=0, replication=0):
    """Randomized MLMC with geometric or truncated level laws.

    Args:
        mode: ``"geometric"`` (unbiased) or ``"truncated"`` (levels ``<= B_d``).

    Returns:
        EstimateReport whose ledger counts this run only; the same counts are
        merged into ``ledger`` when given.
    """
    _check_top_eps(eps)
    _check_history(problem, d, history)
    if mode not in ("geometric", "truncated"):
        raise ParameterError(f"unknown mode {mode!r}")
    local = CostLedger()
    value = rmlmc_rows(problem, d, history.block(), eps, rng, local, mode=mode, delta=delta)[0]
    if ledger is not None:
        ledger.add_steps(local.classical_steps)
    tag = "alg2-geo" if mode == "geometric" else "alg2-trunc"
    return EstimateReport(float(value), eps, d, local, seed, tag, replication)


# ---------------------------------------------------------- derandomized MLMC

def derand_rows(problem, d, hist, eps, rng, ledger, delta=DEFAULT_DELTA, clamp=True):
    """Deterministic-schedule MLMC estimate of ``gamma_d`` per row.

    Level ``n`` runs ``floor(M_d pmf(n))`` replications, raised to one when
    ``clamp`` is set.
    """
    L = problem.lipschitz[d]
    M = replication_count(d, delta, L, eps, closed=True)
    if d == problem.horizon:
        return _leaf_mean(problem, hist, M, rng, ledger)
    r, _ = solve_rate(d, delta)
    counts = per_level_counts(M, truncated(r, truncation_level(L, eps, closed=True)), clamp=clamp)
    inner = partial(_derand_inner, delta=delta, clamp=clamp)
    out = np.zeros(hist.shape[0])
    for n, c in enumerate(counts):
        def block(rows, m, n=n):
            h = hist[rows]
            y = draw(problem, d, h, m, rng, ledger)
            return delta_successive_rows(problem, d, extend(h, y), n, inner, rng,
                                         ledger).reshape(y.shape)

        out += blocked_mean(hist.shape[0], c, block)
    return out


def _derand_inner(problem, d, hist, eps, rng, ledger, delta, clamp):
    return derand_rows(problem, d, hist, eps, rng, ledger, delta=delta, clamp=clamp)


def derand_estimate(problem, d, history, eps, delta=DEFAULT_DELTA, rng=None, ledger=None,
                    seed=0, replication=0, clamp=True):
    """Derandomized MLMC; the level schedule depends on ``(eps, delta, d, L)`` only.

    Raises:
        ScheduleInfeasibleError: ``clamp`` is off and some level count is zero.
    """
    _check_top_eps(eps)
    _check_history(problem, d, history)
    local = CostLedger()
    value = derand_rows(problem, d, history.block(), eps, rng, local, delta=delta, clamp=clamp)[0]
    if ledger is not None:
        ledger.add_steps(local.classical_steps)
    return EstimateReport(float(value), eps, d, local, seed, "alg3", replication)


def bootstrap_single(problem, d, history, eps, delta=DEFAULT_DELTA, rng=None, ledger=None,
                     seed=0, replication=0):
    """Mean of ``ceil(eps^-2)`` single-sample estimates with geometric levels."""
    _check_top_eps(eps)
    _check_history(problem, d, history)
    local = CostLedger()
    n = int(np.ceil(eps ** -2))
    dists = stage_distributions(problem, delta)
    vals = rmlmc_single_rows(problem, d, history.block(n), dists, rng, local)
    if ledger is not None:
        ledger.add_steps(local.classical_steps)
    return EstimateReport(float(vals.mean()), eps, d, local, seed, "alg1", replication)

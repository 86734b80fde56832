"""Direct quantization and deterministic-schedule quantum MLMC.

Both estimators emulate every mean-estimation call classically, so the values
honour the RMSE contracts, and charge the quantum query count to the ledger.
The ``*_rows`` functions return ``(values, charge, level_charges)`` where
``charge`` is the per-row charged cost of producing one estimate.
"""

from dataclasses import dataclass

import numpy as np

from .costs import (alg4_worst_branch, direct_moment_bound, direct_truncation,
                    qmlmc_level_bound, qmlmc_truncation)
from .errors import ParameterError
from .problem import CostLedger, EstimateReport, check_stage, draw, extend
from .qamc import DEFAULT_CONFIG, qamc_rmse_rows, rmse_charge
from .schedule import truncated


@dataclass(frozen=True)
class DirectQuantParams:
    r: float = 0.5
    alpha: float = 2.0 / 3.0

    def __post_init__(self):
        if not 0 < self.r < 1 or not self.alpha > 0:
            raise ParameterError("need 0 < r < 1 and alpha > 0")
        if not 0 < self.alpha**2 / (1.0 - self.r) < 1:
            raise ParameterError("need 0 < alpha^2 / (1 - r) < 1")


def _leaf(problem, hist, eps, config, rng, ledger):
    D, s = problem.horizon, problem.terminal_bound

    def block(rows, m):
        h = hist[rows]
        return problem.g(D, h, draw(problem, D, h, m, rng, ledger))

    return qamc_rmse_rows(block, hist.shape[0], s, eps), rmse_charge(s, eps, config), {}


def _check(problem, d, history, eps, upper=None):
    check_stage(problem, d)
    if history.stage != d:
        raise ParameterError(f"history has stage {history.stage}, expected {d}")
    if not eps > 0 or (upper is not None and not eps < upper):
        raise ParameterError(f"eps out of range: {eps}")


# ------------------------------------------------------------ quantum MLMC

def qmlmc_rows(problem, d, hist, eps, config=DEFAULT_CONFIG, rng=None, ledger=None):
    """Quantum MLMC estimate of ``gamma_d`` for every row of ``hist``.

    Level ``n`` estimates ``E[Delta_d(., n)]`` to RMSE ``eps / (3 (B + 1))``
    with second-moment bound ``3 L 2^{-n/2}``; the levels are summed.
    """
    if d == problem.horizon:
        return _leaf(problem, hist, eps, config, rng, ledger)
    L = problem.lipschitz[d]
    B = qmlmc_truncation(L, eps)
    eta = eps / (3.0 * (B + 1))
    out = np.zeros(hist.shape[0])
    total, levels = 0, {}
    for n in range(B + 1):
        units = set()

        def block(rows, m, n=n, units=units):
            h = hist[rows]
            y = draw(problem, d, h, m, rng, ledger)
            ext = extend(h, y)
            hh, yy = ext[:, :-1], ext[:, -1]
            fine, c_fine, _ = qmlmc_rows(problem, d + 1, ext, 2.0 ** (-n / 2.0), config, rng,
                                         ledger)
            val = problem.g(d, hh, yy, fine)
            unit = 1 + c_fine
            if n:
                coarse, c_coarse, _ = qmlmc_rows(problem, d + 1, ext, 2.0 ** (-(n - 1) / 2.0),
                                                 config, rng, ledger)
                val = val - problem.g(d, hh, yy, coarse)
                unit += c_coarse
            units.add(unit)
            return val.reshape(y.shape)

        s = qmlmc_level_bound(L, n)
        out += qamc_rmse_rows(block, hist.shape[0], s, eta)
        # Inner charges do not depend on the sampled branch, so every block agrees.
        assert len(units) == 1, units
        levels[n] = rmse_charge(s, eta, config) * units.pop()
        total += levels[n]
    return out, total, levels


def qmlmc_estimate(problem, d, history, eps, config=DEFAULT_CONFIG, rng=None, ledger=None,
                   seed=0, replication=0):
    """Quantum MLMC estimate of ``gamma_d(history)`` with RMSE target ``eps``."""
    _check(problem, d, history, eps, upper=1.0)
    local = CostLedger()
    vals, charge, levels = qmlmc_rows(problem, d, history.block(), eps, config, rng, local)
    if levels:
        for n, c in levels.items():
            local.charge(c, level=n)
    else:
        local.charge(charge)
    if ledger is not None:
        ledger.add_steps(local.classical_steps)
        for n, c in local.per_level.items():
            ledger.charge(c, level=n)
        if not local.per_level:
            ledger.charge(local.quantum_charged)
    return EstimateReport(float(vals[0]), eps, d, local, seed, "alg6", replication)


# ------------------------------------------------------ direct quantization

def direct_rows(problem, d, hist, eps, params=DirectQuantParams(), config=DEFAULT_CONFIG,
                rng=None, ledger=None):
    """Direct quantization of randomized MLMC for every row of ``hist``.

    The sampled branch is random, but each outer query is charged the most
    expensive branch, taken from a cost pre-pass.
    """
    if d == problem.horizon:
        return _leaf(problem, hist, eps, config, rng, ledger)
    L = problem.lipschitz[d]
    B = direct_truncation(problem.horizon, problem.lipschitz[:d + 1], eps, params.alpha)
    dist = truncated(params.r, B)
    s = direct_moment_bound(L, B, params.r, params.alpha)
    worst = alg4_worst_branch(problem, d, eps, params, config)
    seen = [0]

    def block(rows, m):
        h = hist[rows]
        y = draw(problem, d, h, m, rng, ledger)
        ext = extend(h, y)
        N = dist.sample(rng, ext.shape[0])
        vals = np.empty(ext.shape[0])
        for n in np.unique(N):
            n = int(n)
            sel = N == n
            sub = ext[sel]
            hh, yy = sub[:, :-1], sub[:, -1]
            fine, cost, _ = direct_rows(problem, d + 1, sub, params.alpha**n, params, config,
                                        rng, ledger)
            val = problem.g(d, hh, yy, fine)
            if n:
                coarse, c2, _ = direct_rows(problem, d + 1, sub, params.alpha ** (n - 1), params,
                                            config, rng, ledger)
                val = val - problem.g(d, hh, yy, coarse)
                cost += c2
            seen[0] = max(seen[0], cost)
            vals[sel] = val / dist.pmf(n)
        return vals.reshape(y.shape)

    out = qamc_rmse_rows(block, hist.shape[0], s, eps)
    # Double entry: the branches actually visited never cost more than the pre-pass worst case.
    assert seen[0] <= worst, (seen[0], worst)
    return out, rmse_charge(s, eps, config) * (1 + worst), {}


def direct_quantized_estimate(problem, d, history, eps, params=DirectQuantParams(),
                              config=DEFAULT_CONFIG, rng=None, ledger=None, seed=0,
                              replication=0):
    """Direct quantization estimate of ``gamma_d(history)`` with worst-branch charging."""
    _check(problem, d, history, eps)
    local = CostLedger()
    vals, charge, _ = direct_rows(problem, d, history.block(), eps, params, config, rng, local)
    local.charge(charge)
    if ledger is not None:
        ledger.add_steps(local.classical_steps)
        ledger.charge(charge)
    return EstimateReport(float(vals[0]), eps, d, local, seed, "alg4", replication)

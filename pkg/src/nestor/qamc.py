"""Emulated quantum mean estimation.

Values are produced classically so that the advertised error contract really
holds; the ledger is charged what a quantum mean estimator would need.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .problem import blocked_mean
from .schedule import _ceil


@dataclass(frozen=True)
class QamcConfig:
    """Leading constant ``kappa`` and floor ``min_charge`` of the charged cost."""

    kappa: float = 1.0
    min_charge: int = 1

    def __post_init__(self):
        if not self.kappa > 0:
            raise ParameterError("kappa must be positive")
        if self.min_charge < 1:
            raise ParameterError("min_charge must be >= 1")


DEFAULT_CONFIG = QamcConfig()


def rmse_charge(s, eps, config=DEFAULT_CONFIG):
    """Queries charged for RMSE ``eps`` under second-moment bound ``s``."""
    ratio = s / eps
    return max(config.min_charge, _ceil(config.kappa * ratio * max(1.0, math.log2(ratio))))


def eps_delta_charge(sigma, eps, delta, config=DEFAULT_CONFIG):
    return max(config.min_charge, _ceil(config.kappa * (sigma / eps) * math.log(1.0 / delta)))


def rmse_sample_size(s, eps):
    """Classical samples ``ceil(s^2 / eps^2)`` certifying RMSE ``eps``."""
    return max(1, _ceil((s / eps) ** 2))


def median_of_means_params(sigma, eps, delta):
    """Group count ``k = ceil(8 ln(1/delta))`` and group size ``m = ceil(4 sigma^2 / eps^2)``."""
    return max(1, _ceil(8.0 * math.log(1.0 / delta))), max(1, _ceil(4.0 * sigma**2 / eps**2))


def counted(fn):
    """Wrap ``fn(count, rng)`` as a sampler that books ``count`` steps."""

    def sampler(count, rng, ledger):
        if ledger is not None:
            ledger.add_steps(count)
        return np.asarray(fn(count, rng), dtype=float)

    return sampler


def qamc_eps_delta(sampler, sigma, eps, delta, config=DEFAULT_CONFIG, rng=None, ledger=None):
    """Estimate ``E X`` to within ``eps`` except with probability ``delta``.

    Realized by a median of ``k`` group means of ``m`` samples each.

    Args:
        sampler: ``sampler(count, rng, ledger)`` returning ``count`` draws of ``X``
            and booking its own classical steps.
        sigma: Upper bound on the standard deviation of ``X``.
    """
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ParameterError("eps and delta must lie in (0, 1)")
    k, m = median_of_means_params(sigma, eps, delta)
    x = sampler(k * m, rng, ledger).reshape(k, m)
    if ledger is not None:
        ledger.charge(eps_delta_charge(sigma, eps, delta, config))
    return float(np.median(x.mean(axis=1)))


def qamc_rmse(sampler, s_bound, eps, config=DEFAULT_CONFIG, rng=None, ledger=None):
    """Estimate ``E X`` with RMSE at most ``eps`` given ``E X^2 <= s_bound^2``.

    The sample mean of ``ceil(s^2/eps^2)`` draws is clipped to ``[-s, s]``;
    clipping cannot move it further from ``E X``.
    """
    if not s_bound > 0:
        raise ParameterError("s_bound must be positive")
    if not eps > 0:
        raise ParameterError("eps must be positive")
    n = rmse_sample_size(s_bound, eps)
    mean = blocked_mean(1, n, lambda rows, c: sampler(c, rng, ledger).reshape(1, c))[0]
    if ledger is not None:
        ledger.charge(rmse_charge(s_bound, eps, config))
    return float(np.clip(mean, -s_bound, s_bound))


def qamc_rmse_rows(sample_block, K, s_bound, eps):
    """Row-wise clipped means; ``sample_block(rows, count)`` returns ``(rows, count)``.

    Charging is left to the caller, which knows the unit cost of one sample.
    """
    n = rmse_sample_size(s_bound, eps)
    return np.clip(blocked_mean(K, n, sample_block), -s_bound, s_bound)

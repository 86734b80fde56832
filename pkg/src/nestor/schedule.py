"""Level-distribution rates, truncation levels and replication counts."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ScheduleInfeasibleError

DEFAULT_DELTA = 0.25

# Ceilings snap values lying within this relative distance above an integer,
# so that float noise in log2 never adds a spurious level.
SNAP = 1e-8


def _ceil(x):
    return int(math.ceil(x - SNAP * max(1.0, abs(x))))


def _check_delta(delta):
    if not 0.0 < delta < 0.5:
        raise ParameterError(f"delta must lie in (0, 1/2), got {delta}")


def _check_eps(eps, upper=1.0, closed=False):
    ok = 0.0 < eps <= upper if closed else 0.0 < eps < upper
    if not ok:
        bracket = "]" if closed else ")"
        raise ParameterError(f"eps must lie in (0, {upper}{bracket}, got {eps}")


def _check_lipschitz(L):
    if not L >= 1.0:
        raise ParameterError(f"Lipschitz constant must be >= 1, got {L}")


def solve_rate(d, delta):
    """Level-distribution rate for stage ``d``.

    Uses the closed form ``1 - r = 2^{-(2 + q) / (2 - q)}`` with ``q = delta / 2^d``,
    which is the root of ``(1-r) 2^{1+q/2} = (1-r)^{-1+q} 2^{-1-q/2}``.

    Args:
        d: Stage index, ``d >= 0``.
        delta: Slack parameter in ``(0, 1/2)``.

    Returns:
        Tuple ``(r, rho)`` with ``rho = (1 - r) 2^{1 + delta / 2^{d+1}}``.
    """
    _check_delta(delta)
    if d < 0:
        raise ParameterError(f"stage must be >= 0, got {d}")
    r = rate_closed_form(d, delta)
    rho = (1.0 - r) * 2.0 ** (1.0 + delta / 2.0 ** (d + 1))
    return r, rho


def rate_closed_form(d, delta):
    """Unchecked closed form ``r = 1 - 2^{-(2 + q) / (2 - q)}``, ``q = delta / 2^d``."""
    q = delta / 2.0**d
    return 1.0 - 2.0 ** (-(2.0 + q) / (2.0 - q))


def rho_cross_check(d, delta, r):
    """Second form of the contraction factor, ``(1-r)^{-1+q} 2^{-1-q/2}``."""
    q = delta / 2.0**d
    return (1.0 - r) ** (-1.0 + q) * 2.0 ** (-1.0 - q / 2.0)


def moment_exponent(d, delta):
    """Moment order ``p_d = 2 - delta / 2^d`` controlled at stage ``d``."""
    return 2.0 - delta / 2.0**d


def truncation_level(L, eps, closed=False):
    """Classical truncation ``ceil(2 log2(2 L / eps))``.

    ``closed=True`` admits ``eps = 1``, which recursive calls need.
    """
    _check_eps(eps, closed=closed)
    _check_lipschitz(L)
    return _ceil(2.0 * math.log2(2.0 * L / eps))


def replication_count(d, delta, L, eps, closed=False):
    """Replications ``ceil((2L)^{2 + delta/2^{d-2}} eps^{-2(1 + delta/2^{d-1})})``."""
    _check_eps(eps, closed=closed)
    _check_delta(delta)
    _check_lipschitz(L)
    c = (2.0 * L) ** (2.0 + delta / 2.0 ** (d - 2))
    return max(1, _ceil(c * eps ** (-2.0 * (1.0 + delta / 2.0 ** (d - 1)))))


@dataclass(frozen=True)
class LevelDistribution:
    """Geometric or truncated-geometric law on levels ``n >= 0``.

    The geometric law has ``pmf(n) = r (1-r)^n``; the truncated law is
    proportional to ``(1-r)^n`` on ``0..truncation``.
    """

    kind: str
    rate: float
    truncation: int | None = None

    def __post_init__(self):
        if self.kind not in ("geometric", "truncated"):
            raise ParameterError(f"unknown level distribution {self.kind!r}")
        if not 0.0 < self.rate < 1.0:
            raise ParameterError(f"rate must lie in (0, 1), got {self.rate}")
        if self.kind == "truncated" and (self.truncation is None or self.truncation < 0):
            raise ParameterError("truncated distribution needs truncation >= 0")

    @property
    def support_size(self):
        return None if self.kind == "geometric" else self.truncation + 1

    def weights(self):
        """Normalized pmf on ``0..B`` (truncated only)."""
        w = (1.0 - self.rate) ** np.arange(self.truncation + 1)
        return w / w.sum()

    def pmf(self, n):
        n = np.asarray(n)
        if self.kind == "geometric":
            return self.rate * (1.0 - self.rate) ** n
        w = self.weights()
        inside = (n >= 0) & (n <= self.truncation)
        return np.where(inside, w[np.clip(n, 0, self.truncation)], 0.0)

    def sample(self, rng, size):
        if self.kind == "geometric":
            return rng.geometric(self.rate, size=size) - 1
        cdf = np.cumsum(self.weights())
        cdf[-1] = 1.0
        return np.searchsorted(cdf, rng.random(size), side="right")


def truncated(rate, B):
    return LevelDistribution("truncated", rate, B)


def geometric(rate):
    return LevelDistribution("geometric", rate)


def per_level_counts(M, dist, clamp=False):
    """Deterministic replication counts ``floor(M pmf(n))`` for ``n = 0..B``.

    Args:
        M: Total replication budget.
        dist: Truncated level distribution.
        clamp: Raise zero counts to one instead of failing.

    Raises:
        ScheduleInfeasibleError: Some count is zero and ``clamp`` is off.
    """
    if dist.kind != "truncated":
        raise ParameterError("per-level counts need a truncated distribution")
    counts = np.floor(M * dist.weights()).astype(np.int64)
    if clamp:
        return np.maximum(counts, 1).tolist()
    zero = np.flatnonzero(counts == 0)
    if zero.size:
        n = int(zero[0])
        raise ScheduleInfeasibleError(
            n, f"floor(M * pmf({n})) = 0 with M = {M}, B = {dist.truncation}, r = {dist.rate:.6g}")
    return counts.tolist()


@dataclass(frozen=True)
class LevelSchedule:
    stage: int
    delta: float
    rate: float
    rho: float
    truncation: int
    replications: int
    p: float
    per_level: tuple = field(default=())

    @property
    def distribution(self):
        return truncated(self.rate, self.truncation)

    def as_dict(self):
        return {
            "stage": self.stage, "delta": self.delta, "rate": self.rate, "rho": self.rho,
            "truncation": self.truncation, "replications": self.replications, "p": self.p,
            "per_level": list(self.per_level),
        }


def build_schedule(d, delta, L, eps, derandomized=False, clamp=True, closed=True):
    """Bundle the stage-``d`` parameters for target accuracy ``eps``."""
    r, rho = solve_rate(d, delta)
    B = truncation_level(L, eps, closed=closed)
    M = replication_count(d, delta, L, eps, closed=closed)
    counts = ()
    if derandomized:
        counts = tuple(per_level_counts(M, truncated(r, B), clamp=clamp))
    return LevelSchedule(d, delta, r, rho, B, M, moment_exponent(d, delta), counts)

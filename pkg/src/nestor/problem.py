"""Nested-expectation problems, trajectory sampling and cost accounting.

Samplers and stage functions are vectorized over rows. A history block is an
array of shape ``(K, d)`` holding ``y_0 .. y_{d-1}`` for ``K`` trajectories.

* ``sampler(d, hist, m, rng)`` returns ``(K, m)`` draws of ``y_d`` given each row.
* ``stage_fn(d, hist, y, z)`` evaluates ``g_d`` where ``y`` holds ``y_d`` with shape
  ``(K,)`` or ``(K, m)`` and ``z`` matches ``y`` (``None`` at the terminal stage).
"""

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidStageError, ParameterError

# Upper bound on the number of (row, replication) pairs materialized at once.
BLOCK = 1 << 18


@dataclass(frozen=True)
class History:
    """Prefix ``(y_0, .., y_{d-1})`` of a trajectory at stage ``d``."""

    values: tuple = ()
    stage: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) != self.stage:
            raise ParameterError(f"history of length {len(self.values)} at stage {self.stage}")

    @classmethod
    def of(cls, values):
        values = tuple(values)
        return cls(values, len(values))

    def extend(self, y):
        return History(self.values + (float(y),), self.stage + 1)

    def block(self, K=1):
        return np.tile(np.asarray(self.values, dtype=float), (K, 1)).reshape(K, self.stage)


@dataclass(frozen=True)
class NestedProblem:
    """A repeatedly nested expectation of horizon ``D``.

    Attributes:
        name: Registry id.
        horizon: ``D >= 0``.
        lipschitz: ``L_0 .. L_D``, each ``>= 1``.
        sampler: Conditional draw of ``y_d`` (see module docstring).
        stage_fn: Evaluation of ``g_d``.
        terminal_bound: ``s`` with ``E[g_D^2 | y_<D] <= s^2`` for every history.
        truth: ``gamma_0`` when known.
    """

    name: str
    horizon: int
    lipschitz: tuple
    sampler: Callable
    stage_fn: Callable
    terminal_bound: float = 1.0
    truth: float | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "lipschitz", tuple(float(x) for x in self.lipschitz))
        if self.horizon < 0:
            raise ParameterError("horizon must be >= 0")
        if len(self.lipschitz) != self.horizon + 1:
            raise ParameterError(
                f"need {self.horizon + 1} Lipschitz constants, got {len(self.lipschitz)}")
        if min(self.lipschitz) < 1.0:
            raise ParameterError("Lipschitz constants must be >= 1")
        if self.terminal_bound <= 0:
            raise ParameterError("terminal_bound must be positive")

    def g(self, d, hist, y, z=None):
        return self.stage_fn(d, hist, y, z)


@dataclass
class CostLedger:
    """Classical process steps next to quantum-charged oracle queries."""

    classical_steps: int = 0
    quantum_charged: int = 0
    per_level: dict = field(default_factory=dict)

    def add_steps(self, k):
        if k < 0:
            raise ParameterError("step counts never decrease")
        self.classical_steps += int(k)

    def charge(self, amount, level=None):
        if amount < 0:
            raise ParameterError("charges never decrease")
        self.quantum_charged += int(amount)
        if level is not None:
            self.per_level[int(level)] = self.per_level.get(int(level), 0) + int(amount)

    def merge(self, other):
        levels = dict(self.per_level)
        for n, v in other.per_level.items():
            levels[n] = levels.get(n, 0) + v
        return CostLedger(self.classical_steps + other.classical_steps,
                          self.quantum_charged + other.quantum_charged,
                          dict(sorted(levels.items())))

    def copy(self):
        return CostLedger(self.classical_steps, self.quantum_charged, dict(self.per_level))

    def as_dict(self):
        return {"classical_steps": self.classical_steps,
                "quantum_charged": self.quantum_charged,
                "per_level": {str(k): v for k, v in sorted(self.per_level.items())}}


CLASSICAL_MODES = ("alg1", "alg2-geo", "alg2-trunc", "alg3")
QUANTUM_MODES = ("alg4", "alg6")


@dataclass(frozen=True)
class EstimateReport:
    estimate: float
    target_error: float
    stage: int
    ledger: CostLedger
    seed: int
    mode: str
    replication: int = 0

    def __post_init__(self):
        if not self.target_error > 0:
            raise ParameterError("target_error must be positive")
        if self.mode in CLASSICAL_MODES and self.ledger.quantum_charged != 0:
            raise ParameterError(f"classical mode {self.mode} carries quantum charges")

    def to_json(self):
        """Canonical serialization; equal reports give equal bytes."""
        payload = {"estimate": float(self.estimate).hex(), "target_error": self.target_error,
                   "stage": self.stage, "ledger": self.ledger.as_dict(), "seed": self.seed,
                   "mode": self.mode, "replication": self.replication}
        return json.dumps(payload, sort_keys=True)


def check_stage(problem, d):
    if not 0 <= d <= problem.horizon:
        raise InvalidStageError(f"stage {d} outside 0..{problem.horizon}")


def draw(problem, d, hist, m, rng, ledger):
    """Draw ``m`` values of ``y_d`` per history row, charging ``K m`` steps."""
    check_stage(problem, d)
    y = np.asarray(problem.sampler(d, hist, m, rng), dtype=float).reshape(hist.shape[0], m)
    if ledger is not None:
        ledger.add_steps(y.size)
    return y


def extend(hist, y):
    """Rows ``(hist_i, y_ij)`` flattened to shape ``(K m, d + 1)``."""
    K, m = y.shape
    return np.concatenate([np.repeat(hist, m, axis=0), y.reshape(K * m, 1)], axis=1)


def blocked_mean(K, m, fn, block=BLOCK):
    """Row means of ``fn(rows, count)`` over ``m`` replications, in bounded blocks.

    ``fn`` receives a row slice and a replication count and returns values of
    shape ``(rows, count)``. Values are accumulated relative to each row's first
    sample, so constant rows come back exactly.
    """
    shift = np.zeros(K)
    acc = np.zeros(K)
    if m <= block:
        step = max(1, block // m)
        for a in range(0, K, step):
            rows = slice(a, min(K, a + step))
            v = fn(rows, m)
            shift[rows] = v[:, 0]
            acc[rows] = (v - v[:, :1]).sum(axis=1)
        return shift + acc / m
    for a in range(K):
        rows = slice(a, a + 1)
        left = m
        while left > 0:
            c = min(block, left)
            v = fn(rows, c)
            if left == m:
                shift[a] = v[0, 0]
            acc[a] += (v[0] - shift[a]).sum()
            left -= c
    return shift + acc / m


def sample_next(problem, history, rng, ledger=None):
    """Draw ``y_d`` given ``history`` at stage ``d``; one step on ``ledger``."""
    check_stage(problem, history.stage)
    return float(draw(problem, history.stage, history.block(), 1, rng, ledger)[0, 0])


def gamma_oracle_rows(problem, d, hist, fanout, rng, ledger=None):
    """Nested plug-in estimate of ``gamma_d`` for every row of ``hist``."""
    if fanout < 1:
        raise ParameterError("fanout must be >= 1")
    check_stage(problem, d)

    def block(rows, m):
        h = hist[rows]
        y = draw(problem, d, h, m, rng, ledger)
        if d == problem.horizon:
            return problem.g(d, h, y)
        inner = gamma_oracle_rows(problem, d + 1, extend(h, y), fanout, rng, ledger)
        return problem.g(d, h, y, inner.reshape(y.shape))

    return blocked_mean(hist.shape[0], fanout, block)


def gamma_oracle(problem, history, fanout, rng, ledger=None):
    """Brute-force nested Monte Carlo estimate of ``gamma_d(history)``.

    Every level draws ``fanout`` inner samples, so the cost is
    ``fanout^{D-d+1}``; the estimate is consistent as ``fanout`` grows.
    """
    return float(gamma_oracle_rows(problem, history.stage, history.block(), fanout, rng,
                                   ledger)[0])


def lipschitz_spot_check(problem, rng, probes=1000, tol=1e-9):
    """Largest observed ratio ``|g(z) - g(z')| / (L |z - z'|)`` over random probes."""
    worst = 0.0
    for d in range(problem.horizon):
        hist = rng.normal(size=(probes, d)) if d else np.zeros((probes, 0))
        y = rng.normal(size=probes)
        z, w = rng.normal(scale=3.0, size=(2, probes))
        num = np.abs(problem.g(d, hist, y, z) - problem.g(d, hist, y, w))
        den = problem.lipschitz[d] * np.abs(z - w) + tol
        worst = max(worst, float(np.max(num / den)))
    return worst

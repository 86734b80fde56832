"""Convergence studies over an accuracy grid, slope fits and CSV output."""

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import costs
from .classical import bootstrap_single, derand_estimate, rmlmc_estimate
from .errors import GuardrailError, InsufficientDataError, UsageError
from .problem import History, gamma_oracle
from .problems import get_problem, list_problems
from .qamc import QamcConfig
from .quantum import DirectQuantParams, direct_quantized_estimate, qmlmc_estimate
from .rng import stream
from .schedule import DEFAULT_DELTA, build_schedule

ESTIMATORS = ("alg1", "alg2-geo", "alg2-trunc", "alg3", "alg4", "alg6")
STEP_BUDGET = 1e9


@dataclass(frozen=True)
class ExperimentConfig:
    problem_id: str
    estimator: str
    eps_grid: tuple
    reps: int = 30
    delta: float = DEFAULT_DELTA
    seed: int = 0
    kappa: float = 1.0
    min_charge: int = 1
    output_dir: str = "results"
    workers: int = 1
    allow_expensive: bool = False
    step_budget: float = STEP_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "eps_grid", tuple(float(e) for e in self.eps_grid))
        if self.estimator not in ESTIMATORS:
            raise UsageError(f"unknown estimator {self.estimator!r}; choose from "
                             f"{', '.join(ESTIMATORS)}")
        if self.problem_id not in list_problems():
            get_problem(self.problem_id)  # raises with the registry listing
        if not self.eps_grid:
            raise UsageError("eps grid is empty")
        if any(not 0 < e < 1 for e in self.eps_grid):
            raise UsageError("every eps must lie in (0, 1)")
        if any(b >= a for a, b in zip(self.eps_grid, self.eps_grid[1:])):
            raise UsageError("eps grid must be strictly decreasing")
        if self.reps < 1 or self.workers < 1:
            raise UsageError("reps and workers must be >= 1")

    @property
    def qamc(self):
        return QamcConfig(self.kappa, self.min_charge)


def geometric_grid(start=0.2, count=4, ratio=2.0):
    return tuple(start / ratio**k for k in range(count))


@dataclass(frozen=True)
class ConvergenceRow:
    estimator: str
    problem: str
    eps: float
    empirical_rmse: float
    empirical_bias: float
    classical_steps_mean: float
    quantum_charged: float
    reps: int
    seed: int
    truth: float
    schedule: str = field(default="")


COLUMNS = tuple(f.name for f in fields(ConvergenceRow))


def run_estimator(problem, estimator, eps, rng, delta=DEFAULT_DELTA, qamc=QamcConfig(), seed=0,
                  replication=0):
    """One stage-0 estimate of ``gamma_0`` by estimator id."""
    h = History()
    kw = dict(rng=rng, seed=seed, replication=replication)
    if estimator == "alg1":
        return bootstrap_single(problem, 0, h, eps, delta, **kw)
    if estimator == "alg2-geo":
        return rmlmc_estimate(problem, 0, h, eps, "geometric", delta, **kw)
    if estimator == "alg2-trunc":
        return rmlmc_estimate(problem, 0, h, eps, "truncated", delta, **kw)
    if estimator == "alg3":
        return derand_estimate(problem, 0, h, eps, delta, **kw)
    if estimator == "alg4":
        return direct_quantized_estimate(problem, 0, h, eps, DirectQuantParams(), qamc, **kw)
    if estimator == "alg6":
        return qmlmc_estimate(problem, 0, h, eps, qamc, **kw)
    raise UsageError(f"unknown estimator {estimator!r}")


def schedule_summary(problem, estimator, eps, delta=DEFAULT_DELTA):
    """Compact JSON description of the stage-0 schedule."""
    L = problem.lipschitz[0]
    if problem.horizon == 0:
        info = {}
    elif estimator in ("alg1", "alg2-geo", "alg2-trunc", "alg3"):
        info = build_schedule(0, delta, L, eps, derandomized=estimator == "alg3").as_dict()
        if estimator == "alg1":
            info = {"samples": math.ceil(eps**-2), "rate": info["rate"]}
    elif estimator == "alg4":
        p = DirectQuantParams()
        B = costs.direct_truncation(problem.horizon, problem.lipschitz[:1], eps, p.alpha)
        info = {"truncation": B, "r": p.r, "alpha": p.alpha,
                "s": costs.direct_moment_bound(L, B, p.r, p.alpha)}
    else:
        B = costs.qmlmc_truncation(L, eps)
        info = {"truncation": B, "level_rmse": eps / (3 * (B + 1))}
    return json.dumps(info, sort_keys=True, separators=(",", ":"))


def reference_value(problem, tolerance, rng_seed=0, fanout=64, max_fanout=1 << 14):
    """Analytic truth when available, else a brute-force oracle accepted once
    doubling the fanout moves it by less than ``tolerance / 5``."""
    if problem.truth is not None:
        return problem.truth
    prev = gamma_oracle(problem, History(), fanout, stream(rng_seed, 0, fanout))
    while fanout < max_fanout:
        fanout *= 2
        cur = gamma_oracle(problem, History(), fanout, stream(rng_seed, 0, fanout))
        if abs(cur - prev) < tolerance / 5:
            return cur
        prev = cur
    raise GuardrailError("oracle reference did not stabilize")


def check_budget(problem, config):
    """Refuse grids whose per-estimate pre-pass cost exceeds the step budget."""
    for eps in config.eps_grid:
        est = costs.expected_steps(problem, config.estimator, eps, config.delta)
        if est > config.step_budget and not config.allow_expensive:
            raise GuardrailError(
                f"{config.estimator} on {problem.name} at eps={eps:g} needs about {est:.3g} "
                f"classical steps per estimate (budget {config.step_budget:.3g}); "
                "pass --allow-expensive to run anyway")


def _one(args):
    problem_id, estimator, eps, delta, kappa, min_charge, seed, cell, rep = args
    rng = stream(seed, cell, rep)
    report = run_estimator(get_problem(problem_id), estimator, eps, rng, delta,
                           QamcConfig(kappa, min_charge), seed, rep)
    return report


def run_cell(config, cell, eps, executor=None):
    """All replications for one grid point, returned in replication order."""
    jobs = [(config.problem_id, config.estimator, eps, config.delta, config.kappa,
             config.min_charge, config.seed, cell, rep) for rep in range(config.reps)]
    if executor is None:
        return [_one(j) for j in jobs]
    return list(executor.map(_one, jobs, chunksize=max(1, len(jobs) // (4 * config.workers))))


def summarize(problem, estimator, eps, reports, truth, seed, delta=DEFAULT_DELTA):
    err = np.array([r.estimate for r in reports]) - truth
    bias = float(err.mean())
    var = float(np.mean((err - bias) ** 2))
    steps = np.array([r.ledger.classical_steps for r in reports], dtype=float)
    charged = np.array([r.ledger.quantum_charged for r in reports], dtype=float)
    return ConvergenceRow(estimator, problem.name, float(eps), math.sqrt(bias * bias + var), bias,
                          float(steps.mean()), float(charged.mean()), len(reports), seed,
                          float(truth), schedule_summary(problem, estimator, eps, delta))


def run_study(config, return_reports=False):
    """Run ``reps`` replications per grid point and summarize them against the truth.

    Output does not depend on ``config.workers``: replication ``k`` at grid
    index ``i`` always uses the stream ``(seed, i, k)``.
    """
    problem = get_problem(config.problem_id)
    check_budget(problem, config)
    truth = reference_value(problem, min(config.eps_grid), config.seed)
    rows, all_reports = [], []
    executor = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for cell, eps in enumerate(config.eps_grid):
            reports = run_cell(config, cell, eps, executor)
            all_reports.append(reports)
            rows.append(summarize(problem, config.estimator, eps, reports, truth, config.seed,
                                  config.delta))
    finally:
        if executor is not None:
            executor.shutdown()
    return (rows, all_reports) if return_reports else rows


# ------------------------------------------------------------------ CSV I/O

def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        d = asdict(r)
        w.writerow([_fmt(d[c]) for c in COLUMNS])
    return buf.getvalue()


def write_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))


_TYPES = {f.name: f.type for f in fields(ConvergenceRow)}


def _parse(name, text):
    kind = _TYPES[name]
    if kind in (float, "float"):
        return float(text)
    if kind in (int, "int"):
        return int(text)
    return text


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise UsageError(f"{path}: unexpected columns {reader.fieldnames}")
        return [ConvergenceRow(**{k: _parse(k, v) for k, v in rec.items()}) for rec in reader]


# ------------------------------------------------------------------ slopes

def _get(row, name):
    return row[name] if isinstance(row, dict) else getattr(row, name)


def fit_slope(rows, cost_column, log_correction_power=0):
    """Least-squares slope of ``log2(cost / log2(1/eps)^k)`` on ``log2(1/eps)``.

    A cost growing like ``eps^-a`` gives slope ``a`` (positive).

    Returns:
        ``(slope, r_squared)``.
    """
    if len(rows) < 3:
        raise InsufficientDataError(f"need at least 3 rows, got {len(rows)}")
    eps = np.array([float(_get(r, "eps")) for r in rows])
    cost = np.array([float(_get(r, cost_column)) for r in rows])
    x = np.log2(1.0 / eps)
    y = np.log2(cost) - log_correction_power * np.log2(x)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return float(slope), r2

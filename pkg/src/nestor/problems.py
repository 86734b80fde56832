"""Built-in problems and their reference values."""

import math
import re

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import integrate, optimize
from scipy.stats import norm

from .errors import UsageError
from .problem import NestedProblem


def softplus(z):
    return np.logaddexp(0.0, z)


def gauss_max_expectation(a, mu, sigma):
    """``E[max(a, X)]`` for ``X ~ N(mu, sigma^2)``."""
    t = (a - mu) / sigma
    return a * norm.cdf(t) + mu * norm.cdf(-t) + sigma * norm.pdf(t)


def identity_chain(horizon=2, value=0.7):
    """Point-mass process with ``g_d(y, z) = z`` and ``g_D(y) = y_D``."""

    def sampler(d, hist, m, rng):
        return np.full((hist.shape[0], m), value)

    def stage_fn(d, hist, y, z):
        return np.array(y if z is None else z, dtype=float)

    return NestedProblem("identity-chain", horizon, (1.0,) * (horizon + 1), sampler, stage_fn,
                         terminal_bound=max(1.0, abs(value)), truth=value,
                         params={"horizon": horizon, "value": value})


def _walk_sampler(d, hist, m, rng):
    noise = rng.standard_normal((hist.shape[0], m))
    return noise if d == 0 else noise + hist[:, -1:]


def gauss_rne_truth(horizon, nodes=80):
    """Nested Gauss-Hermite value of ``gamma_0`` for the Gaussian-walk problem.

    With ``h_D(x) = E tanh(x + xi)`` and ``h_d(x) = E softplus(h_{d+1}(x + xi))``
    the answer is ``h_0(0)``.
    """
    x, w = hermegauss(nodes)
    w = w / w.sum()

    def h(d, base):
        pts = base[:, None] + x[None, :]
        if d == horizon:
            vals = np.tanh(pts)
        else:
            vals = softplus(h(d + 1, pts.ravel())).reshape(pts.shape)
        return vals @ w

    return float(h(0, np.zeros(1))[0])


def gauss_rne(horizon):
    """Gaussian random walk with softplus stages and a tanh payoff."""

    def stage_fn(d, hist, y, z):
        return np.tanh(y) if z is None else softplus(z)

    nodes = {1: 200, 2: 120, 3: 60}.get(horizon, 30)
    return NestedProblem(f"gauss-rne-D{horizon}", horizon, (1.0,) * (horizon + 1),
                         _walk_sampler, stage_fn, terminal_bound=1.0,
                         truth=gauss_rne_truth(horizon, nodes), params={"horizon": horizon})


def optstop_gamma1(y0, theta=0.5, beta=0.5):
    """Continuation value after stage 0: ``E[max(y_1, theta)]``, ``y_1 ~ N(beta y0, 1)``."""
    return gauss_max_expectation(theta, beta * np.asarray(y0, dtype=float), 1.0)


def optstop_truth(theta=0.5, beta=0.5):
    """``E[max(y_0, gamma_1(y_0))]`` by quadrature split at the stopping boundary."""
    c = optimize.brentq(lambda y: y - optstop_gamma1(y, theta, beta), -20.0, 20.0, xtol=1e-14)
    cont, _ = integrate.quad(lambda y: norm.pdf(y) * optstop_gamma1(y, theta, beta), -np.inf, c,
                             epsabs=1e-13, epsrel=1e-13)
    # The stopping region contributes E[y_0; y_0 > c] = phi(c).
    return float(cont + norm.pdf(c))


def gauss_optstop(theta=0.5, beta=0.5):
    """Two-decision stopping problem ``g_d(y, z) = max(y_d, z)`` with payoff ``y_2``.

    ``y_0 ~ N(0, 1)``, ``y_1 = beta y_0 + N(0, 1)`` and ``y_2 ~ N(theta, 1)``
    independently of the past.
    """

    def sampler(d, hist, m, rng):
        noise = rng.standard_normal((hist.shape[0], m))
        if d == 0:
            return noise
        if d == 1:
            return noise + beta * hist[:, :1]
        return noise + theta

    def stage_fn(d, hist, y, z):
        return np.array(y, dtype=float) if z is None else np.maximum(y, z)

    return NestedProblem("gauss-optstop-D2", 2, (1.0, 1.0, 1.0), sampler, stage_fn,
                         terminal_bound=math.sqrt(theta * theta + 1.0),
                         truth=optstop_truth(theta, beta), params={"theta": theta, "beta": beta})


REGISTRY = {
    "identity-chain": identity_chain,
    "gauss-rne-D1": lambda: gauss_rne(1),
    "gauss-rne-D2": lambda: gauss_rne(2),
    "gauss-rne-D3": lambda: gauss_rne(3),
    "gauss-optstop-D2": gauss_optstop,
}

_CACHE = {}


def list_problems():
    return sorted(REGISTRY)


def get_problem(problem_id):
    """Look up a registered problem by id.

    ``gauss-rne-D<k>`` is accepted for any ``k >= 1``.
    """
    if problem_id not in _CACHE:
        m = re.fullmatch(r"gauss-rne-D(\d+)", problem_id)
        if problem_id in REGISTRY:
            _CACHE[problem_id] = REGISTRY[problem_id]()
        elif m and int(m.group(1)) >= 1:
            _CACHE[problem_id] = gauss_rne(int(m.group(1)))
        else:
            raise UsageError(
                f"unknown problem {problem_id!r}; registered: {', '.join(list_problems())}")
    return _CACHE[problem_id]

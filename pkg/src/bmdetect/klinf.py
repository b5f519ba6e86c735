"""Information projection onto the bounded-mean class.

For a post-change law Q on [0,1] and a baseline m, the least favorable
separation is

    klinf(Q; m) = inf { KL(Q || P) : P on [0,1], E_P[X] <= m }.

The infimum over distributions collapses to a one-dimensional concave
maximization: klinf(Q; m) = sup over lambda in [0,1] of
E_Q[log((1 - lambda) + (lambda/m) X)].  ``klinf_dual_solve`` maximizes that
concave objective by golden-section search.  ``klinf_primal_oracle`` is a
deliberately independent cross-check: it brute-forces the two-multiplier
dual  sup_{alpha, beta >= 0} 1 + E_Q[log(alpha + beta X)] - alpha - beta m
on a grid and verifies that the reconstructed primal density
p = 1/(alpha + beta X) is feasible, so the two routes must agree when both
are correct ("no duality gap").
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import BoundedDistribution, expectation

_RIGHT_EDGE = 1.0 - 1e-9
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class OracleInconsistencyError(RuntimeError):
    """Primal reconstruction from the oracle's dual point is infeasible.

    This cannot happen for a correct solver on valid input; it signals an
    implementation bug rather than a bad problem instance.
    """


@dataclass(frozen=True)
class KlInfResult:
    """Solver output: projection value (nats) plus diagnostics.

    ``diverges_at_one`` is set when Q puts mass at 0, which sends the
    objective to -inf as lambda approaches 1.  ``at_right_edge`` flags a
    maximizer pinned at the top of the search interval (possible for laws
    with no mass at 0, where the supremum may be approached at lambda -> 1).
    ``separated`` is False when mean(Q) <= m, in which case the projection
    is 0.
    """

    value: float
    lambda_star: float
    iterations: int
    bracket_width: float
    diverges_at_one: bool
    separated: bool = True
    at_right_edge: bool = False


def g_of_lambda(Q: BoundedDistribution, m: float, lam: float) -> float:
    """Expected log betting factor E_Q[log((1-lam) + (lam/m) X)].

    Exact atom sums for discrete Q, adaptive quadrature (absolute tolerance
    1e-10) for continuous Q.  Returns -inf at lam = 1 when Q({0}) > 0.
    """
    m = float(m)
    lam = float(lam)
    if not (0.0 < m < 1.0):
        raise ValueError("baseline mean must lie strictly inside (0,1)")
    if not (0.0 <= lam <= 1.0):
        raise ValueError("lambda must lie in [0,1]")
    if lam == 0.0:
        return 0.0

    def log_factor(x: float) -> float:
        val = (1.0 - lam) + (lam / m) * x
        if val <= 0.0:
            return -math.inf
        return math.log(val)

    return expectation(Q, log_factor, epsabs=1e-10)


def klinf_dual_solve(Q: BoundedDistribution, m: float, tol: float = 1e-10) -> KlInfResult:
    """Maximize the concave log-growth objective over lambda in [0, 1).

    Golden-section search on [0, 1 - 1e-9]; the returned bracket width is at
    most ``tol``.  When mean(Q) <= m the law is not separated from the
    baseline class and the projection is 0 with lambda* = 0.
    """
    if tol <= 0.0:
        raise ValueError("tolerance must be positive")
    m = float(m)
    if not (0.0 < m < 1.0):
        raise ValueError("baseline mean must lie strictly inside (0,1)")
    diverges = Q.mass_at_zero() > 0.0
    if Q.mean <= m:
        return KlInfResult(value=0.0, lambda_star=0.0, iterations=0,
                           bracket_width=0.0, diverges_at_one=diverges,
                           separated=False)

    def g(lam: float) -> float:
        return g_of_lambda(Q, m, lam)

    a, b = 0.0, _RIGHT_EDGE
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = g(c), g(d)
    iters = 2
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = g(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = g(d)
        iters += 1
    mid = 0.5 * (a + b)
    fmid = g(mid)
    iters += 1
    lam_star, value = max(((mid, fmid), (c, fc), (d, fd)), key=lambda t: t[1])
    at_edge = (not diverges) and (_RIGHT_EDGE - lam_star <= max(10.0 * tol, 1e-8))
    return KlInfResult(value=float(value), lambda_star=float(lam_star),
                       iterations=iters, bracket_width=float(b - a),
                       diverges_at_one=diverges, at_right_edge=at_edge)


def _dual_objective_rows(alphas: np.ndarray, betas: np.ndarray,
                         xs: np.ndarray, qs: np.ndarray, m: float) -> np.ndarray:
    """Dual objective on the (alpha, beta) grid, -inf where infeasible."""
    out = np.empty((alphas.size, betas.size))
    for i, alpha in enumerate(alphas):
        arg = alpha + betas[:, None] * xs[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(arg > 0.0, np.log(np.maximum(arg, 1e-320)), -np.inf)
        row = 1.0 + logs @ qs - alpha - betas * m
        out[i] = np.where(np.isfinite(row), row, -np.inf)
    return out


def klinf_primal_oracle(Q: BoundedDistribution, m: float,
                        grid_resolution: int = 1000) -> float:
    """Independent estimate of the projection value for discrete Q.

    Exhaustive grid search over dual multipliers (alpha, beta), refined
    locally, followed by a primal feasibility audit of the reconstructed
    density p_i = 1/(alpha* + beta* x_i): the mass and mean constraints must
    hold within 1e-6 slack.  A violation above 1e-4 raises
    ``OracleInconsistencyError``.  This path never calls the lambda
    maximizer, so agreement with ``klinf_dual_solve`` is a genuine
    cross-check.
    """
    m = float(m)
    if not (0.0 < m < 1.0):
        raise ValueError("baseline mean must lie strictly inside (0,1)")
    if not Q.is_discrete:
        raise ValueError("the primal oracle handles discrete laws only")
    atoms = Q.atom_list()
    if len(atoms) > 100:
        raise ValueError("the primal oracle is limited to 100 atoms")
    if int(grid_resolution) < 1000:
        raise ValueError("grid_resolution must be at least 1000")
    res = int(grid_resolution)
    xs = np.array([x for x, _ in atoms])
    qs = np.array([q for _, q in atoms])

    alpha_hi, beta_hi = 1.5, 1.5 / m
    alphas = np.linspace(0.0, alpha_hi, res)
    betas = np.linspace(0.0, beta_hi, res)
    obj = _dual_objective_rows(alphas, betas, xs, qs, m)
    i, j = np.unravel_index(np.argmax(obj), obj.shape)
    best_a, best_b = alphas[i], betas[j]

    half_a = 2.0 * (alphas[1] - alphas[0])
    half_b = 2.0 * (betas[1] - betas[0])
    for _ in range(6):
        alphas = np.linspace(max(0.0, best_a - half_a), best_a + half_a, 81)
        betas = np.linspace(max(0.0, best_b - half_b), best_b + half_b, 81)
        obj = _dual_objective_rows(alphas, betas, xs, qs, m)
        i, j = np.unravel_index(np.argmax(obj), obj.shape)
        best_a, best_b = alphas[i], betas[j]
        half_a *= 0.1
        half_b *= 0.1

    value = float(obj[i, j])
    denom = best_a + best_b * xs
    if np.any(denom <= 0.0):
        raise OracleInconsistencyError("dual point leaves an atom with zero density")
    p = 1.0 / denom
    mass_slack = float(qs @ p) - 1.0
    mean_slack = float(qs @ (xs * p)) - m
    if mass_slack > 1e-4 or mean_slack > 1e-4:
        raise OracleInconsistencyError(
            f"reconstructed density infeasible: mass excess {mass_slack:.2e}, "
            f"mean excess {mean_slack:.2e}")
    return max(value, 0.0)


def pinsker_floor(delta: float) -> float:
    """Separation floor 2 delta^2 for any law with mean at least m + delta."""
    delta = float(delta)
    if delta < 0.0:
        raise ValueError("separation must be nonnegative")
    return 2.0 * delta * delta


def klinf_bernoulli_closed_form(q: float, m: float) -> float:
    """Binary relative entropy q log(q/m) + (1-q) log((1-q)/(1-m)).

    Test oracle for two-point laws on {0,1}: the projection of bernoulli(q)
    onto the mean-m class equals this divergence when q > m, and 0 otherwise.
    """
    q = float(q)
    m = float(m)
    if not (0.0 < m < 1.0) or not (0.0 <= q <= 1.0):
        raise ValueError("parameters must satisfy 0 < m < 1 and 0 <= q <= 1")
    if q <= m:
        return 0.0
    terms = [q * math.log(q / m)]
    if q < 1.0:
        terms.append((1.0 - q) * math.log((1.0 - q) / (1.0 - m)))
    return math.fsum(terms)

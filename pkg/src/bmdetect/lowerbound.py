"""Executable pieces of the detection-delay lower-bound machinery.

Everything here runs at desk scale: exact enumeration over small finite
alphabets for the change-of-measure and prefix-law identities, exact block
decompositions of stopping laws with geometric tails, a Monte Carlo probe of
the maximal strong law, and the (f, c) schedule whose three ratios drive the
final limit argument.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .distributions import SeedSpec

_ATOL = 1e-12


@dataclass(frozen=True)
class FiniteLaw:
    """Probability law on a finite set of real values (not confined to [0,1])."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be matching nonempty tuples")
        if len(set(self.values)) != len(self.values):
            raise ValueError("support values must be distinct")
        if any(p < 0.0 for p in self.probs):
            raise ValueError("probabilities must be nonnegative")
        if abs(math.fsum(self.probs) - 1.0) > _ATOL:
            raise ValueError("probabilities must sum to 1")

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        cum = np.cumsum(self.probs)
        idx = np.searchsorted(cum, gen.random(n), side="right")
        return np.asarray(self.values)[np.minimum(idx, len(self.values) - 1)]


def two_point(p: float) -> FiniteLaw:
    """Law on {0, 1} with mass p at 1; handy for binary-alphabet checks."""
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must lie in [0,1]")
    return FiniteLaw(values=(0.0, 1.0), probs=(1.0 - p, p))


def kl_divergence(q: FiniteLaw, p: FiniteLaw) -> float:
    """KL(q || p) on a shared alphabet; 0 log 0 = 0 and q>0, p=0 gives +inf."""
    if q.values != p.values:
        raise ValueError("laws must share a common alphabet")
    total = 0.0
    for qv, pv in zip(q.probs, p.probs):
        if qv == 0.0:
            continue
        if pv == 0.0:
            return math.inf
        total += qv * math.log(qv / pv)
    return total


class FiniteClassResult(NamedTuple):
    value: float
    argmin_index: int | None
    argmin: FiniteLaw | None


def finite_class_klinf(Q: FiniteLaw, candidates: Sequence[FiniteLaw]) -> FiniteClassResult:
    """Exact minimum of KL(Q || P) over a finite candidate class.

    Candidates with disjoint support contribute +inf; if every candidate
    does, the result reports +inf explicitly with no minimizer.
    """
    if not candidates:
        raise ValueError("candidate class must be nonempty")
    best_val = math.inf
    best_idx: int | None = None
    for i, P in enumerate(candidates):
        val = kl_divergence(Q, P)
        if val < best_val:
            best_val, best_idx = val, i
    if best_idx is None:
        return FiniteClassResult(math.inf, None, None)
    return FiniteClassResult(best_val, best_idx, candidates[best_idx])


@dataclass(frozen=True)
class StoppingLaw:
    """Law of an alarm time on {1, 2, ...}: finite atoms plus an optional
    geometric tail P(T = start + i) = tail_mass (1 - ratio) ratio^i."""

    atoms: tuple[tuple[int, float], ...] = ()
    tail_start: int | None = None
    tail_mass: float = 0.0
    tail_ratio: float = 0.0

    def __post_init__(self) -> None:
        seen = set()
        for n, p in self.atoms:
            if n < 1 or int(n) != n:
                raise ValueError("atom times must be integers >= 1")
            if p <= 0.0:
                raise ValueError("atom probabilities must be positive")
            if n in seen:
                raise ValueError("duplicate atom time")
            seen.add(n)
        total = math.fsum(p for _, p in self.atoms) + self.tail_mass
        if abs(total - 1.0) > _ATOL:
            raise ValueError(f"probabilities sum to {total}, expected 1")
        if self.tail_mass > 0.0:
            if self.tail_start is None or self.tail_start < 1:
                raise ValueError("geometric tail needs a start time >= 1")
            if not (0.0 < self.tail_ratio < 1.0):
                raise ValueError("tail ratio must lie in (0,1)")
            if self.atoms and self.tail_start <= max(n for n, _ in self.atoms):
                raise ValueError("tail must start after the last atom")
        elif self.tail_mass < 0.0:
            raise ValueError("tail mass must be nonnegative")

    def survival(self, n: int) -> float:
        """P(T >= n), exact including the geometric tail."""
        s = math.fsum(p for t, p in self.atoms if t >= n)
        if self.tail_mass > 0.0:
            if n <= self.tail_start:
                s += self.tail_mass
            else:
                s += self.tail_mass * self.tail_ratio ** (n - self.tail_start)
        return s

    def expected_value(self) -> float:
        e = math.fsum(n * p for n, p in self.atoms)
        if self.tail_mass > 0.0:
            rho = self.tail_ratio
            e += self.tail_mass * (self.tail_start + rho / (1.0 - rho))
        return e


class BlockRow(NamedTuple):
    r: int
    x: float
    y: float
    ratio: float


@dataclass(frozen=True)
class BlockStats:
    """Block decomposition of a stopping law into windows of length f."""

    blocks: tuple[BlockRow, ...]
    r_star: int
    f: int
    gamma: float
    sum_x: float
    sum_y: float
    expected_T: float

    @property
    def best(self) -> BlockRow:
        return self.blocks[self.r_star - 1]


def block_stats(law: StoppingLaw, f: int, gamma: float) -> BlockStats:
    """Per-block stopping mass x_r, survival y_r and their ratio.

    An expected alarm time of at least gamma forces at least one block whose
    conditional stopping mass x_r / y_r is at most f / gamma; the block
    attaining the minimum is returned as ``r_star``.  A violation of that
    bound is impossible for correct inputs and raises immediately.
    """
    f = int(f)
    if f < 1:
        raise ValueError("block length must be at least 1")
    expect = law.expected_value()
    if expect < gamma * (1.0 - 1e-12):  # tolerate float fuzz at equality
        raise ValueError(
            f"law has expected alarm time {expect} < gamma {gamma}; "
            "the block bound needs E[T] >= gamma")
    rows = []
    r = 1
    tail_sum_y = 0.0
    while True:
        start = (r - 1) * f + 1
        y = law.survival(start)
        if y <= 1e-18:
            if law.tail_mass > 0.0 and y > 0.0:
                # Remaining pure-tail blocks form an exact geometric series.
                tail_sum_y = y / (1.0 - law.tail_ratio ** f)
            break
        x = y - law.survival(start + f)
        ratio = x / y
        rows.append(BlockRow(r=r, x=x, y=y, ratio=ratio))
        r += 1
        if r > 5_000_000:  # pragma: no cover - guards absurd parameters
            raise RuntimeError("block enumeration did not terminate")
    if not rows:
        raise ValueError("law has no mass; cannot decompose")
    sum_x = math.fsum(row.x for row in rows)
    sum_y = math.fsum(row.y for row in rows) + tail_sum_y
    best = min(rows, key=lambda row: row.ratio)
    if best.ratio > f / gamma + 1e-12:
        raise RuntimeError(
            "block bound violated: min ratio "
            f"{best.ratio} > f/gamma {f / gamma}; this is an implementation bug")
    return BlockStats(blocks=tuple(rows), r_star=best.r, f=f, gamma=float(gamma),
                      sum_x=sum_x, sum_y=sum_y, expected_T=expect)


@dataclass(frozen=True)
class LowerBoundParams:
    """The (f, c) schedule with its drift margin eta and onset gamma0."""

    epsilon: float
    delta: float
    I_delta: float
    mu_delta: float
    b: float
    f_gamma: int
    c_gamma: float
    eta: float
    gamma0: float


def schedule_params(gamma: float, epsilon: float, delta: float, I: float,
                    mu: float, b: float) -> LowerBoundParams:
    """Window length f = floor((1-eps) log(gamma) / (I + delta)) and budget
    c = b log(gamma) for the delay argument.

    The admissible exponent range (1-eps) mu / (I + delta) < b < 1 makes the
    per-window budget exceed the drift (c/f >= mu + eta for gamma >= gamma0)
    while exp(c) f / gamma still vanishes.
    """
    if not (0.0 < epsilon < 1.0):
        raise ValueError("epsilon must lie in (0,1)")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0,1)")
    if gamma <= 1.0:
        raise ValueError("gamma must exceed 1")
    I_delta = I + delta
    if not (0.0 < mu <= I_delta):
        raise ValueError("drift mu must lie in (0, I + delta]")
    b_lo = (1.0 - epsilon) * mu / I_delta
    if not (b_lo < b < 1.0):
        raise ValueError(f"exponent b must lie in ({b_lo}, 1)")
    log_gamma = math.log(gamma)
    f_gamma = int(math.floor((1.0 - epsilon) * log_gamma / I_delta))
    c_gamma = b * log_gamma
    limit = b * I_delta / (1.0 - epsilon)
    eta = 0.5 * (limit - mu)
    gamma0 = math.exp(I_delta / (1.0 - epsilon))
    return LowerBoundParams(epsilon=epsilon, delta=delta, I_delta=I_delta,
                            mu_delta=mu, b=b, f_gamma=f_gamma, c_gamma=c_gamma,
                            eta=eta, gamma0=gamma0)


class ScheduleRow(NamedTuple):
    gamma: float
    f_over_log: float
    c_over_f: float
    exp_ratio: float


def schedule_limit_table(epsilon: float, delta: float, I: float, mu: float,
                         b: float,
                         gamma_grid: Sequence[float] = (1e3, 1e6, 1e9, 1e12),
                         ) -> tuple[list[ScheduleRow], dict[str, float]]:
    """The three schedule ratios along a threshold grid plus their limits.

    f/log(gamma) tends to (1-eps)/(I+delta), c/f tends to b (I+delta)/(1-eps)
    and exp(c) f / gamma tends to 0.
    """
    rows = []
    for gamma in gamma_grid:
        params = schedule_params(gamma, epsilon, delta, I, mu, b)
        lg = math.log(gamma)
        f = params.f_gamma
        if f < 1:
            raise ValueError(f"gamma {gamma} is below the schedule onset")
        rows.append(ScheduleRow(
            gamma=float(gamma),
            f_over_log=f / lg,
            c_over_f=params.c_gamma / f,
            exp_ratio=f * math.exp((b - 1.0) * lg),
        ))
    I_delta = I + delta
    limits = {
        "f_over_log": (1.0 - epsilon) / I_delta,
        "c_over_f": b * I_delta / (1.0 - epsilon),
        "exp_ratio": 0.0,
    }
    return rows, limits


StoppingRule = Callable[[Sequence[float]], bool]


def running_sum_rule(threshold: float) -> StoppingRule:
    """Stop the first time the running sum of observations reaches threshold."""

    def rule(prefix: Sequence[float]) -> bool:
        return math.fsum(prefix) >= threshold

    return rule


def _enumerate_paths(n_symbols: int, horizon: int) -> np.ndarray:
    return np.array(list(itertools.product(range(n_symbols), repeat=horizon)),
                    dtype=np.intp)


def _stopping_times(paths: np.ndarray, values: np.ndarray,
                    rule: StoppingRule) -> np.ndarray:
    """First step at which ``rule`` fires on each path; horizon+1 if never."""
    horizon = paths.shape[1]
    T = np.full(paths.shape[0], horizon + 1, dtype=np.intp)
    vals = values[paths]
    for i in range(paths.shape[0]):
        row = vals[i]
        for t in range(1, horizon + 1):
            if rule(row[:t]):
                T[i] = t
                break
    return T


class ComCheckResult(NamedTuple):
    lhs: float
    rhs: float
    max_abs_gap: float
    events: int


def exact_change_of_measure_check(P: FiniteLaw, Q: FiniteLaw, k: int,
                                  horizon: int, rule: StoppingRule) -> ComCheckResult:
    """Verify the stopped change-of-measure identity by full enumeration.

    For every alarm-window event A = {a <= T <= b} within the horizon, the
    probability of A under the switch-at-k law must equal the no-change
    expectation of exp(L) 1_A, where L sums the post-change log likelihood
    ratios up to T.  The conditional form given survival {T >= k} is checked
    as well.  Returns the evaluation of the worst event and the maximum
    absolute gap over all events.
    """
    if P.values != Q.values:
        raise ValueError("laws must share a common alphabet")
    if len(P.values) > 4:
        raise ValueError("alphabet size is limited to 4 symbols")
    horizon = int(horizon)
    if not (1 <= horizon <= 8):
        raise ValueError("horizon must lie in 1..8")
    k = int(k)
    if k < 1:
        raise ValueError("changepoint must be at least 1")
    pvec = np.asarray(P.probs)
    qvec = np.asarray(Q.probs)
    if np.any((qvec > 0.0) & (pvec == 0.0)):
        raise ValueError("post-change law is not absolutely continuous "
                         "with respect to the pre-change law")

    values = np.asarray(P.values)
    paths = _enumerate_paths(len(values), horizon)
    prob_inf = np.prod(pvec[paths], axis=1)
    if k <= horizon:
        pre = np.prod(pvec[paths[:, :k - 1]], axis=1) if k > 1 else 1.0
        post = np.prod(qvec[paths[:, k - 1:]], axis=1)
        prob_switch = pre * post
    else:
        prob_switch = prob_inf.copy()

    with np.errstate(divide="ignore"):
        ell = np.where(qvec > 0.0, np.log(qvec) - np.log(pvec), -np.inf)
    T = _stopping_times(paths, values, rule)

    # exp(L_{k:T}) per path: empty sum (T < k) gives factor 1.
    lr = np.ones(paths.shape[0])
    for i in range(paths.shape[0]):
        t = T[i]
        if t >= k and t <= horizon:
            s = ell[paths[i, k - 1:t]].sum()
            lr[i] = math.exp(s) if s > -math.inf else 0.0

    survive = T >= k
    denom_switch = float(prob_switch[survive].sum())
    denom_inf = float(prob_inf[survive].sum())

    worst = (0.0, 0.0, 0.0)
    events = 0
    for a in range(1, horizon + 1):
        for b_end in range(a, horizon + 1):
            in_window = (T >= a) & (T <= b_end)
            lhs = float(prob_switch[in_window].sum())
            rhs = float((prob_inf * lr)[in_window].sum())
            gap = abs(lhs - rhs)
            events += 1
            if gap > worst[2]:
                worst = (lhs, rhs, gap)
            if denom_inf > 0.0 and denom_switch > 0.0:
                lhs_c = float(prob_switch[in_window & survive].sum()) / denom_switch
                rhs_c = float((prob_inf * lr)[in_window & survive].sum()) / denom_inf
                gap_c = abs(lhs_c - rhs_c)
                events += 1
                if gap_c > worst[2]:
                    worst = (lhs_c, rhs_c, gap_c)
    return ComCheckResult(lhs=worst[0], rhs=worst[1], max_abs_gap=worst[2],
                          events=events)


def prefix_equality_check(P: FiniteLaw, Q: FiniteLaw, k: int, horizon: int,
                          rule: StoppingRule | None = None) -> float:
    """Maximum gap between prefix laws with and without a change at k.

    Marginalizes the full length-``horizon`` joint law down to the first
    k - 1 coordinates under both the switch-at-k law and the no-change law;
    the two must agree atom by atom.  Also verifies that conditioning on
    survival {T >= k} leaves post-change cylinder probabilities unchanged.
    """
    if P.values != Q.values:
        raise ValueError("laws must share a common alphabet")
    horizon = int(horizon)
    if not (1 <= horizon <= 8):
        raise ValueError("horizon must lie in 1..8")
    k = int(k)
    if not (1 <= k <= horizon + 1):
        raise ValueError("changepoint must lie in 1..horizon+1")
    n_sym = len(P.values)
    if n_sym > 4:
        raise ValueError("alphabet size is limited to 4 symbols")
    pvec = np.asarray(P.probs)
    qvec = np.asarray(Q.probs)
    values = np.asarray(P.values)
    paths = _enumerate_paths(n_sym, horizon)
    prob_inf = np.prod(pvec[paths], axis=1)
    if k <= horizon:
        pre = np.prod(pvec[paths[:, :k - 1]], axis=1) if k > 1 else 1.0
        prob_switch = pre * np.prod(qvec[paths[:, k - 1:]], axis=1)
    else:
        prob_switch = prob_inf.copy()

    shape = (n_sym,) * horizon
    marg_axes = tuple(range(k - 1, horizon))
    marg_inf = prob_inf.reshape(shape).sum(axis=marg_axes) if marg_axes else prob_inf.reshape(shape)
    marg_switch = prob_switch.reshape(shape).sum(axis=marg_axes) if marg_axes else prob_switch.reshape(shape)
    gap = float(np.max(np.abs(marg_inf - marg_switch)))

    if rule is None:
        rule = running_sum_rule(2.0 * float(np.max(values)))
    T = _stopping_times(paths, values, rule)
    survive = T >= k
    denom = float(prob_switch[survive].sum())
    if denom > 0.0 and k <= horizon:
        depth = min(2, horizon - k + 1)
        for pattern in itertools.product(range(n_sym), repeat=depth):
            in_cyl = np.all(paths[:, k - 1:k - 1 + depth] == pattern, axis=1)
            unconditional = float(prob_switch[in_cyl].sum())
            conditional = float(prob_switch[in_cyl & survive].sum()) / denom
            gap = max(gap, abs(conditional - unconditional))
    return gap


def maximal_slln_probe(Y_law: FiniteLaw, eta: float, n_grid: Sequence[int],
                       reps: int, seed: SeedSpec) -> list[tuple[int, float]]:
    """Estimate P(max of the partial sums over 1..n exceeds (mu + eta) n).

    For i.i.d. increments with mean mu >= 0 and any eta > 0 this probability
    vanishes as n grows; the probe returns its Monte Carlo estimate at each
    requested n (shared sample paths across the grid).
    """
    if eta <= 0.0:
        raise ValueError("the excess drift eta must be positive")
    if int(reps) < 1:
        raise ValueError("replication count must be at least 1")
    ns = [int(n) for n in n_grid]
    if not ns or any(n < 1 for n in ns):
        raise ValueError("n_grid must hold positive integers")
    mu = Y_law.mean
    if mu < -1e-12:
        raise ValueError("increment law must have nonnegative mean")
    n_max = max(ns)
    gen = seed.generator()
    increments_done = 0
    partial = np.zeros(int(reps))
    run_max = np.full(int(reps), -np.inf)
    results = {}
    checkpoints = sorted(set(ns))
    block = 4096
    next_cp = 0
    while increments_done < n_max:
        width = min(block, n_max - increments_done)
        draws = Y_law.draw(gen, int(reps) * width).reshape(int(reps), width)
        cum = partial[:, None] + np.cumsum(draws, axis=1)
        block_max = np.maximum.accumulate(cum, axis=1)
        while next_cp < len(checkpoints) and checkpoints[next_cp] <= increments_done + width:
            n = checkpoints[next_cp]
            col = n - increments_done - 1
            overall_max = np.maximum(run_max, block_max[:, col])
            results[n] = float(np.mean(overall_max > (mu + eta) * n))
            next_cp += 1
        partial = cum[:, -1]
        run_max = np.maximum(run_max, block_max[:, -1])
        increments_done += width
    return [(n, results[n]) for n in ns]

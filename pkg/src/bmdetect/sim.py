"""Monte Carlo estimation of run lengths, detection delays and hitting times.

Replication layout: a call with seed (master_seed, stream_id) gives
replication i the substream SeedSpec(master_seed, stream_id + offset + i),
where ``offset`` separates independent experiment arms (one per changepoint
in a delay run).  Each replication therefore reproduces exactly the stream
that ``generate_changepoint_stream`` would emit for its own SeedSpec, and
replications can run in any order or in parallel without coordination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import klinf
from .detector import SATURATION, DetectorConfig, effective_threshold
from .distributions import BoundedDistribution, SeedSpec

_CHUNK = 512


@dataclass(frozen=True)
class ArlEstimate:
    """Censoring-aware mean run length under a no-change law.

    Censored runs are counted at the horizon, so the estimate is a downward
    biased (conservative) stand-in for the expected time to false alarm.
    """

    mean_run_length: float
    std_error: float
    censor_rate: float
    horizon: int
    replications: int
    gamma: float


@dataclass(frozen=True)
class PerKDelay:
    """Conditional delay at one changepoint; mean is None with no survivors."""

    k: int
    mean_delay: float | None
    std_error: float | None
    survivors: int
    censored: int


@dataclass(frozen=True)
class CaddEstimate:
    """Conditional average detection delay estimates across changepoints.

    ``pooled`` is the worst (largest) conditional mean over the probed
    changepoints, approximating the supremum in the delay criterion.
    """

    per_k: tuple[PerKDelay, ...]
    pooled: float | None
    pooled_se: float | None
    gamma: float


@dataclass(frozen=True)
class HittingEstimate:
    """First-passage time of the log betting-factor walk over level u."""

    u: float
    mean_tau: float
    std_error: float
    mu: float
    b: float
    replications: int

    @property
    def bracket_low(self) -> float:
        return self.u / self.mu

    @property
    def bracket_high(self) -> float:
        return (self.u + self.b) / self.mu


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, 0.0
    se = float(np.std(values, ddof=1) / math.sqrt(values.size))
    return mean, se


def _alarm_times(config: DetectorConfig, pre: BoundedDistribution,
                 post: BoundedDistribution | None, change_time: float,
                 reps: int, horizon: int, seed: SeedSpec,
                 offset: int = 0) -> np.ndarray:
    """Alarm step (1-based) per replication; 0 marks a censored run.

    Vectorizes the Shiryaev-Roberts recursion across live replications while
    drawing each replication's observations from its own substream, exactly
    as the single-stream detector would see them.
    """
    lam = config.grid.lambdas
    w = config.grid.weights
    one_minus = 1.0 - lam
    lam_over_m = lam / config.m
    thresh = effective_threshold(config.gamma)

    alarm = np.zeros(reps, dtype=np.int64)
    r = np.zeros((reps, lam.size))
    active = np.arange(reps)

    phases: list[tuple[BoundedDistribution, int, int, int]] = []
    if math.isinf(change_time):
        phases.append((pre, 0, 1, horizon))
    else:
        k = int(change_time)
        if k > 1:
            phases.append((pre, 0, 1, min(k - 1, horizon)))
        if k <= horizon:
            phases.append((post, 1, k, horizon))

    gens: dict[tuple[int, int], np.random.Generator] = {}

    def gen_for(rep: int, tag: int) -> np.random.Generator:
        key = (rep, tag)
        if key not in gens:
            sub = SeedSpec(seed.master_seed, seed.stream_id + offset + rep)
            gens[key] = sub.generator(tag)
        return gens[key]

    for dist, tag, n_lo, n_hi in phases:
        pos = n_lo
        while pos <= n_hi and active.size:
            clen = min(_CHUNK, n_hi - pos + 1)
            xs = np.empty((active.size, clen))
            for row, rep in enumerate(active):
                xs[row] = dist.draw(gen_for(int(rep), tag), clen)
            ract = r[active]
            still = np.ones(active.size, dtype=bool)
            for t in range(clen):
                factors = one_minus + lam_over_m * xs[:, t][:, None]
                ract = (1.0 + ract) * factors
                np.minimum(ract, SATURATION, out=ract)
                mix = ract @ w
                newly = still & (mix >= thresh)
                if newly.any():
                    alarm[active[newly]] = pos + t
                    still &= ~newly
                    if not still.any():
                        break
            r[active] = ract
            active = active[still]
            pos += clen
        if not active.size:
            break
    return alarm


def estimate_arl(config: DetectorConfig, P: BoundedDistribution, reps: int,
                 horizon: int | None = None, seed: SeedSpec = SeedSpec(0)) -> ArlEstimate:
    """Mean time to alarm over independent no-change streams from P.

    P must belong to the calibrated class (mean at most m), otherwise the
    run would not probe the false-alarm guarantee.  Runs still unalarmed at
    the horizon (default 50 gamma) count at the horizon value.
    """
    if int(reps) < 1:
        raise ValueError("replication count must be at least 1")
    if P.mean > config.m + 1e-12:
        raise ValueError(
            f"pre-change law has mean {P.mean} > baseline {config.m}; "
            "ARL calibration only concerns laws with mean <= m")
    if horizon is None:
        horizon = max(1, int(math.ceil(50.0 * config.gamma)))
    horizon = int(horizon)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    alarm = _alarm_times(config, P, None, math.inf, int(reps), horizon, seed)
    times = np.where(alarm > 0, alarm, horizon).astype(np.float64)
    mean, se = _mean_se(times)
    return ArlEstimate(mean_run_length=mean, std_error=se,
                       censor_rate=float(np.mean(alarm == 0)),
                       horizon=horizon, replications=int(reps),
                       gamma=config.gamma)


def _auto_post_window(config: DetectorConfig, Q: BoundedDistribution) -> int:
    """Post-change horizon generous enough that censoring is negligible."""
    drifts = [klinf.g_of_lambda(Q, config.m, lam) for lam in config.grid.lambdas]
    best = max(drifts)
    if best <= 0.0:
        # No grid point has positive drift for this Q; fall back to the
        # same long horizon used for no-change runs.
        return max(1, int(math.ceil(50.0 * config.gamma)))
    w_min = float(np.min(config.grid.weights))
    scale = (math.log(max(config.gamma, 1.0) / w_min) + math.log(1.0 / config.m)) / best
    return max(1000, int(math.ceil(20.0 * scale)))


def estimate_cadd(config: DetectorConfig, P: BoundedDistribution,
                  Q: BoundedDistribution, k_list: Sequence[int], reps: int,
                  seed: SeedSpec = SeedSpec(0),
                  post_horizon: int | None = None) -> CaddEstimate:
    """Conditional mean detection delay at each probed changepoint k.

    For each k the run simulates ``reps`` streams switching from P to Q at
    k, discards the runs that alarm before k, and averages (T - k + 1) over
    the survivors.  Runs censored at the horizon are counted at the window
    length and reported in ``censored`` rather than silently dropped.  The
    pooled value is the largest conditional mean across the available k.
    """
    if int(reps) < 1:
        raise ValueError("replication count must be at least 1")
    if not k_list:
        raise ValueError("need at least one changepoint to probe")
    ks = [int(k) for k in k_list]
    if any(k < 1 for k in ks):
        raise ValueError("changepoints must be at least 1")
    if P.mean > config.m + 1e-12:
        raise ValueError("pre-change law must have mean <= m")
    if Q.mean <= config.m:
        raise ValueError("post-change law must have mean > m")
    window = int(post_horizon) if post_horizon is not None else _auto_post_window(config, Q)
    if window < 1:
        raise ValueError("post-change horizon must be at least 1")

    per_k = []
    for j, k in enumerate(ks):
        horizon = k - 1 + window
        alarm = _alarm_times(config, P, Q, k, int(reps), horizon, seed,
                             offset=j * int(reps))
        survivor_mask = (alarm == 0) | (alarm >= k)
        survivors = int(survivor_mask.sum())
        censored = int(np.sum(alarm == 0))
        if survivors == 0:
            per_k.append(PerKDelay(k=k, mean_delay=None, std_error=None,
                                   survivors=0, censored=censored))
            continue
        t = alarm[survivor_mask].astype(np.float64)
        delay = np.where(t > 0, t - k + 1, float(window))
        mean, se = _mean_se(delay)
        per_k.append(PerKDelay(k=k, mean_delay=mean, std_error=se,
                               survivors=survivors, censored=censored))

    available = [p for p in per_k if p.mean_delay is not None]
    if available:
        worst = max(available, key=lambda p: p.mean_delay)
        pooled, pooled_se = worst.mean_delay, worst.std_error
    else:
        pooled = pooled_se = None
    return CaddEstimate(per_k=tuple(per_k), pooled=pooled, pooled_se=pooled_se,
                        gamma=config.gamma)


def estimate_hitting_time(Q: BoundedDistribution, lam: float, m: float, u: float,
                          reps: int, seed: SeedSpec = SeedSpec(0)) -> HittingEstimate:
    """First time the random walk of log betting factors reaches level u.

    The walk has increments log((1 - lam) + (lam/m) X_i) with X_i drawn from
    Q; its drift mu must be positive for the crossing time to have finite
    mean.  The analytic bracket [u/mu, (u + b)/mu] with b = log(1/m) comes
    with the estimate via ``bracket_low`` and ``bracket_high``.
    """
    if int(reps) < 1:
        raise ValueError("replication count must be at least 1")
    u = float(u)
    if u <= 0.0:
        raise ValueError("threshold u must be positive")
    mu = klinf.g_of_lambda(Q, m, lam)
    if not mu > 0.0:
        raise ValueError(
            f"drift {mu} is not positive; the walk need not cross the level")
    b = math.log(1.0 / m)
    lam = float(lam)
    chunk = 64
    max_steps = max(10_000, int(200.0 * (u + b) / mu))

    taus = np.empty(int(reps), dtype=np.int64)
    batch = 8192
    for start in range(0, int(reps), batch):
        nb = min(batch, int(reps) - start)
        gens = [SeedSpec(seed.master_seed, seed.stream_id + start + i).generator(0)
                for i in range(nb)]
        offsets = np.zeros(nb)
        idx = np.arange(nb)
        t0 = 0
        while idx.size:
            xs = np.empty((idx.size, chunk))
            for row, i in enumerate(idx):
                xs[row] = Q.draw(gens[int(i)], chunk)
            factors = (1.0 - lam) + (lam / m) * xs
            inc = np.log(np.maximum(factors, 1e-320))
            walk = offsets[idx][:, None] + np.cumsum(inc, axis=1)
            hit = walk >= u
            any_hit = hit.any(axis=1)
            first = np.argmax(hit, axis=1)
            done = idx[any_hit]
            taus[start + done] = t0 + first[any_hit] + 1
            offsets[idx] = walk[:, -1]
            idx = idx[~any_hit]
            t0 += chunk
            if t0 > max_steps:
                raise RuntimeError(
                    f"walk failed to cross {u} within {max_steps} steps "
                    "despite positive drift; check the inputs")
    mean, se = _mean_se(taus.astype(np.float64))
    return HittingEstimate(u=u, mean_tau=mean, std_error=se, mu=float(mu),
                           b=b, replications=int(reps))


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


def slope_fit(points: Sequence[tuple[float, float]]) -> SlopeFit:
    """Least-squares fit of delay against log(gamma).

    The slope is the empirical delay constant.  Requires at least three
    points whose thresholds span at least two decades, with no duplicate
    gamma values.
    """
    if len(points) < 3:
        raise ValueError("need at least three (gamma, delay) points")
    gammas = np.array([float(g) for g, _ in points])
    delays = np.array([float(d) for _, d in points])
    if np.any(gammas <= 0.0):
        raise ValueError("thresholds must be positive")
    if np.unique(gammas).size != gammas.size:
        raise ValueError("duplicate gamma values make the design degenerate")
    if gammas.max() / gammas.min() < 100.0 * (1.0 - 1e-12):
        raise ValueError("thresholds must span at least two decades")
    x = np.log(gammas)
    slope, intercept = np.polyfit(x, delays, 1)
    resid = delays - (slope * x + intercept)
    ss_res = float(resid @ resid)
    centered = delays - delays.mean()
    ss_tot = float(centered @ centered)
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res < 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return SlopeFit(slope=float(slope), intercept=float(intercept), r_squared=r2)

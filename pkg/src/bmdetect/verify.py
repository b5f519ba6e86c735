"""Self-contained invariant suites behind the ``verify`` command.

The fast suite covers exact and deterministic properties and finishes in
well under a minute; the full suite adds the Monte Carlo invariants.  Every
randomized check carries a fixed seed that is reported on failure so it can
be replayed.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from . import detector, distributions, klinf, lowerbound, sim
from .distributions import SeedSpec, bernoulli, beta, discrete, point


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str
    seed: int | None = None


Check = Callable[[], CheckResult]


def _result(name: str, ok: bool, detail: str, seed: int | None = None) -> CheckResult:
    return CheckResult(name, bool(ok), detail, seed)


# ---------------------------------------------------------------------------
# fast checks


def check_betting_factor_bounds() -> CheckResult:
    rng = np.random.default_rng(11)
    ok = True
    for _ in range(2000):
        lam = rng.uniform(0.0, 1.0)
        m = rng.uniform(0.05, 0.95)
        x = rng.uniform(0.0, 1.0)
        val = detector.betting_factor(lam, m, x)
        ok &= (1.0 - lam) - 1e-12 <= val <= 1.0 / m + 1e-12
        ok &= val >= -1e-15
    ok &= detector.betting_factor(0.0, 0.5, 0.9) == 1.0
    ok &= detector.betting_factor(1.0, 0.5, 0.0) == 0.0
    ok &= abs(detector.betting_factor(0.5, 0.5, 1.0) - 1.5) < 1e-15
    return _result("betting factor stays within [1-lambda, 1/m]", ok, "2000 random triples", 11)


def check_sr_recursion_matches_definition() -> CheckResult:
    rng = np.random.default_rng(23)
    grid = detector.dyadic_grid(4)
    worst = 0.0
    for _ in range(30):
        n = int(rng.integers(1, 13))
        xs = rng.uniform(0.0, 1.0, n)
        cfg = detector.DetectorConfig(m=0.5, grid=grid, gamma=1e12)
        st = detector.fresh_state(cfg)
        for x in xs:
            detector.sr_update(st, cfg, x)
        for j, lam in enumerate(grid.lambdas):
            factors = detector.betting_factor(lam, 0.5, xs)
            direct = sum(np.prod(factors[k:]) for k in range(n))
            worst = max(worst, abs(st.r[j] - direct) / max(1.0, abs(direct)))
    return _result("SR recursion equals the double-sum definition",
                   worst <= 1e-10, f"max relative gap {worst:.2e}", 23)


def check_state_roundtrip() -> CheckResult:
    grid = detector.dyadic_grid(5)
    cfg = detector.DetectorConfig(m=0.4, grid=grid, gamma=50.0)
    st = detector.fresh_state(cfg)
    rng = np.random.default_rng(7)
    for x in rng.uniform(0.0, 1.0, 500):
        detector.sr_update(st, cfg, x)
    blob = detector.serialize_state(st)
    back = detector.deserialize_state(blob)
    ok = back == st
    try:
        detector.deserialize_state(blob[:10])
        ok = False
    except detector.StateDecodeError:
        pass
    return _result("state snapshot round-trips bit-exactly", ok, f"{len(blob)} bytes", 7)


def check_klinf_two_point() -> CheckResult:
    worst = 0.0
    for q, m in [(0.75, 0.5), (0.6, 0.5), (0.9, 0.2), (0.35, 0.3), (0.55, 0.25)]:
        res = klinf.klinf_dual_solve(bernoulli(q), m)
        target = klinf.klinf_bernoulli_closed_form(q, m)
        worst = max(worst, abs(res.value - target))
    return _result("projection matches binary divergence on two-point laws",
                   worst <= 1e-9, f"max gap {worst:.2e}")


def check_klinf_duality_gap() -> CheckResult:
    cases = [
        (bernoulli(0.75), 0.5),
        (bernoulli(0.6), 0.5),
        (discrete([(0.0, 0.1), (0.5, 0.3), (1.0, 0.6)]), 0.5),
        (discrete([(0.2, 0.25), (0.7, 0.5), (0.95, 0.25)]), 0.4),
        (discrete([(0.1, 0.2), (0.9, 0.8)]), 0.6),
    ]
    worst = 0.0
    for Q, m in cases:
        a = klinf.klinf_dual_solve(Q, m).value
        b = klinf.klinf_primal_oracle(Q, m)
        worst = max(worst, abs(a - b))
    return _result("no duality gap between solver and grid oracle",
                   worst <= 1e-5, f"max gap {worst:.2e} over {len(cases)} laws")


def check_pinsker_floor() -> CheckResult:
    rng = np.random.default_rng(31)
    m = 0.5
    ok = True
    for _ in range(20):
        Q = _random_discrete(rng, min_mean=m + 0.02)
        res = klinf.klinf_dual_solve(Q, m)
        floor = klinf.pinsker_floor(Q.mean - m)
        ok &= res.value >= floor - 1e-12
    return _result("projection respects the 2 delta^2 floor", ok, "20 random laws", 31)


def check_block_bound() -> CheckResult:
    rng = np.random.default_rng(41)
    for i in range(200):
        law = _random_stopping_law(rng)
        expect = law.expected_value()
        gamma = expect * rng.uniform(0.2, 1.0)
        f = int(rng.integers(1, 11))
        try:
            lowerbound.block_stats(law, f, gamma)
        except RuntimeError as exc:
            return _result("every stopping law admits a low-mass block",
                           False, f"law {i}: {exc}", 41)
    return _result("every stopping law admits a low-mass block", True,
                   "200 random laws", 41)


def check_change_of_measure() -> CheckResult:
    P = lowerbound.two_point(0.5)
    Q = lowerbound.two_point(0.75)
    rule = lowerbound.running_sum_rule(2.0)
    worst = 0.0
    for k in (1, 2, 3, 5, 9):
        res = lowerbound.exact_change_of_measure_check(P, Q, k, 4, rule)
        worst = max(worst, res.max_abs_gap)
    same = lowerbound.exact_change_of_measure_check(P, P, 2, 4, rule)
    worst = max(worst, same.max_abs_gap)
    return _result("change of measure is exact on enumerable instances",
                   worst <= 1e-12, f"max gap {worst:.2e}")


def check_prefix_equality() -> CheckResult:
    P = lowerbound.two_point(0.5)
    Q = lowerbound.two_point(0.8)
    worst = 0.0
    for k in (1, 2, 3, 4):
        worst = max(worst, lowerbound.prefix_equality_check(P, Q, k, 5))
    return _result("prefix law ignores the post-change distribution",
                   worst <= 1e-12, f"max gap {worst:.2e}")


def check_schedule_limits() -> CheckResult:
    rows, limits = lowerbound.schedule_limit_table(
        epsilon=0.1, delta=0.1, I=0.1308120360, mu=0.1308120360, b=0.7)
    last = rows[-1]
    dev1 = abs(last.f_over_log - limits["f_over_log"]) / limits["f_over_log"]
    dev2 = abs(last.c_over_f - limits["c_over_f"]) / limits["c_over_f"]
    dev3 = abs(last.exp_ratio)
    ok = dev1 < 0.05 and dev2 < 0.05 and dev3 < 0.05
    return _result("schedule ratios converge to their limits",
                   ok, f"deviations at 1e12: {dev1:.3f}, {dev2:.3f}, {dev3:.3f}")


def check_uniform_grid_design() -> CheckResult:
    sched = detector.uniform_grid_schedule(0.25, 0.4, 0.5)
    grid = detector.design_uniform_grid(0.25, 0.4, 0.5)
    ok = (abs(sched.lambda_lower - 0.1) < 1e-12
          and abs(sched.mesh - 0.005) < 1e-12
          and sched.intervals == 200 and len(grid) == 201)
    target = 1.0 - 0.4
    for q in np.linspace(0.76, 0.99, 12):
        best = max(klinf.g_of_lambda(bernoulli(q), 0.5, lam) for lam in grid.lambdas)
        ref = klinf.klinf_dual_solve(bernoulli(q), 0.5).value
        ok &= best >= target * ref - 1e-9
    return _result("designed grid nearly maximizes growth for separated laws",
                   ok, f"{len(grid)} points, mesh {sched.mesh}")


def check_alarm_monotone_in_gamma() -> CheckResult:
    rng = np.random.default_rng(53)
    grid = detector.dyadic_grid(5)
    xs = rng.uniform(0.3, 1.0, 400)
    prev = 0
    ok = True
    for gamma in (2.0, 5.0, 20.0, 100.0):
        cfg = detector.DetectorConfig(m=0.4, grid=grid, gamma=gamma)
        res = detector.run_until_alarm(cfg, xs, 400)
        t = res.alarm_time if res.alarm_time is not None else 401
        ok &= t >= prev
        prev = t
    return _result("alarm time is monotone in the threshold", ok, "one shared stream", 53)


def check_rescale() -> CheckResult:
    ok = distributions.rescale_affine(2.0, 2.0, 6.0) == 0.0
    ok &= distributions.rescale_affine(6.0, 2.0, 6.0) == 1.0
    ok &= abs(distributions.rescale_affine(3.0, 2.0, 6.0) - 0.25) < 1e-15
    try:
        distributions.rescale_affine(1.0, 2.0, 6.0)
        ok = False
    except ValueError:
        pass
    return _result("affine rescaling maps endpoints exactly", ok, "interval [2,6]")


# ---------------------------------------------------------------------------
# full (Monte Carlo) checks


def check_arl_calibration() -> CheckResult:
    grid = detector.dyadic_grid(6)
    seedval = 20240601
    details = []
    ok = True
    for gamma in (50.0, 100.0):
        cfg = detector.DetectorConfig(m=0.5, grid=grid, gamma=gamma)
        for P in (bernoulli(0.5), point(0.5), beta(2.0, 2.0)):
            est = sim.estimate_arl(cfg, P, reps=1000, seed=SeedSpec(seedval))
            ok &= est.mean_run_length >= gamma - 2.0 * est.std_error
            details.append(f"{P.kind}@{gamma:g}: {est.mean_run_length:.1f}")
    return _result("mean run length never falls below gamma", ok,
                   "; ".join(details), seedval)


def check_supermartingale_drift() -> CheckResult:
    grid = detector.dyadic_grid(4)
    seedval = 77
    gen = SeedSpec(seedval).generator()
    reps, n_max = 600, 1000
    lam = grid.lambdas
    w = grid.weights
    r = np.zeros((reps, lam.size))
    ok = True
    details = []
    P = bernoulli(0.5)
    checkpoints = {10, 100, 1000}
    for n in range(1, n_max + 1):
        x = P.draw(gen, reps)
        r = (1.0 + r) * ((1.0 - lam) + (lam / 0.5) * x[:, None])
        if n in checkpoints:
            drift = r @ w - n
            mean, se = float(drift.mean()), float(drift.std(ddof=1) / math.sqrt(reps))
            ok &= mean <= 4.0 * se
            details.append(f"n={n}: {mean:.2f}+-{se:.2f}")
    return _result("mixture statistic minus n has nonpositive drift", ok,
                   "; ".join(details), seedval)


def check_hitting_bracket() -> CheckResult:
    seedval = 90125
    est = sim.estimate_hitting_time(bernoulli(0.75), 0.5, 0.5, 4.6,
                                    reps=20000, seed=SeedSpec(seedval))
    lo = est.bracket_low - 2.0 * est.std_error
    hi = est.bracket_high + 2.0 * est.std_error
    ok = lo <= est.mean_tau <= hi
    return _result("hitting time sits inside the Wald bracket", ok,
                   f"mean {est.mean_tau:.2f} in [{lo:.2f}, {hi:.2f}]", seedval)


def check_k_invariance() -> CheckResult:
    grid = detector.dyadic_grid(6)
    cfg = detector.DetectorConfig(m=0.5, grid=grid, gamma=300.0)
    seedval = 31337
    est = sim.estimate_cadd(cfg, bernoulli(0.5), bernoulli(0.75),
                            k_list=[1, 25], reps=2000, seed=SeedSpec(seedval))
    a, b = est.per_k
    diff = abs(a.mean_delay - b.mean_delay)
    tol = 3.0 * math.hypot(a.std_error, b.std_error)
    return _result("conditional delay does not depend on the changepoint",
                   diff <= tol, f"|{a.mean_delay:.2f} - {b.mean_delay:.2f}| <= {tol:.2f}",
                   seedval)


def check_mean_consistency() -> CheckResult:
    seedval = 55
    ok = True
    details = []
    for dist, label in [
        (bernoulli(0.75), "bernoulli"),
        (discrete([(0.1, 0.3), (0.6, 0.5), (1.0, 0.2)]), "discrete"),
        (beta(2.0, 3.0), "beta"),
        (distributions.mixture([(0.5, bernoulli(0.2)), (0.5, beta(2.0, 2.0))]), "mixture"),
    ]:
        xs = distributions.sample(dist, SeedSpec(seedval), 1_000_000)
        se = float(xs.std(ddof=1) / math.sqrt(xs.size))
        gap = abs(float(xs.mean()) - dist.mean)
        ok &= gap <= 4.0 * max(se, 1e-9)
        details.append(f"{label}: {gap:.2e}")
    return _result("sample means match declared means", ok, "; ".join(details), seedval)


def check_maximal_slln() -> CheckResult:
    seedval = 99
    coin = lowerbound.FiniteLaw(values=(-1.0, 1.0), probs=(0.5, 0.5))
    probes = lowerbound.maximal_slln_probe(coin, 0.5, [10, 100, 400],
                                           reps=10000, seed=SeedSpec(seedval))
    vals = [p for _, p in probes]
    se = [math.sqrt(max(p * (1 - p), 1e-12) / 10000) for p in vals]
    ok = all(vals[i + 1] <= vals[i] + 2.0 * (se[i] + se[i + 1]) for i in range(len(vals) - 1))
    ok &= vals[-1] <= 0.05
    return _result("running-max exceedance probability decays", ok,
                   ", ".join(f"{v:.4f}" for v in vals), seedval)


# ---------------------------------------------------------------------------
# helpers and the suite registry


def _random_discrete(rng: np.random.Generator, min_mean: float = 0.0):
    for _ in range(200):
        n = int(rng.integers(2, 8))
        xs = np.sort(rng.uniform(0.0, 1.0, n))
        ws = rng.dirichlet(np.ones(n))
        ws = ws / ws.sum()
        try:
            d = discrete(list(zip(xs.tolist(), ws.tolist())))
        except ValueError:
            continue
        if d.mean > min_mean:
            return d
    raise RuntimeError("failed to draw a random law above the requested mean")


def _random_stopping_law(rng: np.random.Generator) -> lowerbound.StoppingLaw:
    n = int(rng.integers(1, 10))
    times = np.sort(rng.choice(np.arange(1, 60), size=n, replace=False))
    probs = rng.dirichlet(np.ones(n))
    if rng.random() < 0.5:
        tail_mass = float(rng.uniform(0.05, 0.5))
        probs = probs * (1.0 - tail_mass)
        atoms = tuple((int(t), float(p)) for t, p in zip(times, probs))
        # Renormalize the atom block exactly against the tail mass.
        correction = 1.0 - tail_mass - math.fsum(p for _, p in atoms)
        atoms = atoms[:-1] + ((atoms[-1][0], atoms[-1][1] + correction),)
        return lowerbound.StoppingLaw(
            atoms=atoms, tail_start=int(times.max()) + int(rng.integers(1, 20)),
            tail_mass=tail_mass, tail_ratio=float(rng.uniform(0.5, 0.99)))
    atoms = tuple((int(t), float(p)) for t, p in zip(times, probs))
    correction = 1.0 - math.fsum(p for _, p in atoms)
    atoms = atoms[:-1] + ((atoms[-1][0], atoms[-1][1] + correction),)
    return lowerbound.StoppingLaw(atoms=atoms)


FAST_CHECKS: list[Check] = [
    check_betting_factor_bounds,
    check_sr_recursion_matches_definition,
    check_state_roundtrip,
    check_klinf_two_point,
    check_klinf_duality_gap,
    check_pinsker_floor,
    check_block_bound,
    check_change_of_measure,
    check_prefix_equality,
    check_schedule_limits,
    check_uniform_grid_design,
    check_alarm_monotone_in_gamma,
    check_rescale,
]

FULL_CHECKS: list[Check] = FAST_CHECKS + [
    check_arl_calibration,
    check_supermartingale_drift,
    check_hitting_bracket,
    check_k_invariance,
    check_mean_consistency,
    check_maximal_slln,
]

SUITES = {"fast": FAST_CHECKS, "full": FULL_CHECKS}


def run_suite(name: str) -> list[CheckResult]:
    """Execute every check in the named suite, never stopping early."""
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    results = []
    for check in SUITES[name]:
        try:
            results.append(check())
        except Exception as exc:  # a crash is a failure, not an abort
            results.append(CheckResult(check.__name__, False, f"raised {exc!r}", None))
    return results

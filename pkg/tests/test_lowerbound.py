"""Block decomposition, schedules, enumeration identities, SLLN probe."""

from __future__ import annotations

import math

import numpy as np
import pytest

from bmdetect import (
    FiniteLaw,
    SeedSpec,
    StoppingLaw,
    bernoulli,
    block_stats,
    exact_change_of_measure_check,
    finite_class_klinf,
    kl_divergence,
    klinf_dual_solve,
    maximal_slln_probe,
    prefix_equality_check,
    running_sum_rule,
    schedule_limit_table,
    schedule_params,
    two_point,
)

from conftest import random_stopping_law


class TestStoppingLaw:
    def test_survival_and_mean_with_tail(self):
        law = StoppingLaw(atoms=((1, 0.5),), tail_start=5, tail_mass=0.5,
                          tail_ratio=0.5)
        assert abs(law.survival(1) - 1.0) <= 1e-12
        assert abs(law.survival(5) - 0.5) <= 1e-12
        assert abs(law.survival(7) - 0.125) <= 1e-12
        assert abs(law.expected_value() - (0.5 + 0.5 * 6.0)) <= 1e-12

    def test_validation(self):
        with pytest.raises(ValueError):
            StoppingLaw(atoms=((1, 0.5), (2, 0.6)))
        with pytest.raises(ValueError):
            StoppingLaw(atoms=((0, 1.0),))
        with pytest.raises(ValueError):
            StoppingLaw(atoms=((3, 0.5),), tail_start=2, tail_mass=0.5,
                        tail_ratio=0.9)


class TestBlockStats:
    def test_point_mass_at_ten(self):
        law = StoppingLaw(atoms=((10, 1.0),))
        stats = block_stats(law, f=5, gamma=10.0)
        rows = {row.r: row for row in stats.blocks}
        assert rows[1].x == 0.0 and rows[1].y == 1.0 and rows[1].ratio == 0.0
        assert rows[2].x == 1.0 and rows[2].y == 1.0
        assert stats.r_star == 1
        assert stats.best.ratio <= 5.0 / 10.0

    def test_uniform_on_one_to_four(self):
        law = StoppingLaw(atoms=((1, 0.25), (2, 0.25), (3, 0.25), (4, 0.25)))
        stats = block_stats(law, f=2, gamma=2.5)
        assert abs(stats.blocks[0].x - 0.5) <= 1e-12
        assert abs(stats.blocks[0].y - 1.0) <= 1e-12
        assert abs(stats.blocks[1].x - 0.5) <= 1e-12
        assert abs(stats.blocks[1].y - 0.5) <= 1e-12
        assert stats.r_star == 1
        assert stats.best.ratio == 0.5 <= 2 / 2.5

    def test_geometric_mean_hundred(self):
        # P(T = n) = (1-rho) rho^(n-1) with mean 100: rho = 0.99.
        law = StoppingLaw(tail_start=1, tail_mass=1.0, tail_ratio=0.99)
        assert abs(law.expected_value() - 100.0) <= 1e-9
        stats = block_stats(law, f=10, gamma=100.0)
        assert stats.best.ratio <= 0.1
        assert abs(stats.best.ratio - (1.0 - 0.99 ** 10)) <= 1e-9

    def test_mass_and_survival_sums(self):
        law = StoppingLaw(atoms=((2, 0.3), (7, 0.2)), tail_start=9,
                          tail_mass=0.5, tail_ratio=0.8)
        stats = block_stats(law, f=3, gamma=law.expected_value())
        assert abs(stats.sum_x - 1.0) <= 1e-9
        assert stats.sum_y >= stats.expected_T / stats.f - 1e-9

    def test_precondition(self):
        law = StoppingLaw(atoms=((2, 1.0),))
        with pytest.raises(ValueError):
            block_stats(law, f=1, gamma=5.0)

    def test_thousand_random_laws_never_violate_bound(self):
        rng = np.random.default_rng(20240809)
        for _ in range(1000):
            law = random_stopping_law(rng)
            gamma = law.expected_value() * rng.uniform(0.2, 1.0)
            f = int(rng.integers(1, 11))
            stats = block_stats(law, f, gamma)  # raises on violation
            assert stats.best.ratio <= f / gamma + 1e-12


class TestSchedule:
    def test_window_by_hand(self):
        params = schedule_params(math.exp(10.0), 0.1, 0.1, 0.1, 0.15, 0.9)
        assert params.f_gamma == int(0.9 * 10.0 / 0.2)  # floor(45) = 45

    def test_small_gamma_window(self):
        params = schedule_params(math.exp(2.0), 0.5, 0.5, 0.5, 0.3, 0.5)
        assert params.f_gamma == 1  # floor(0.5 * 2 / 1.0)

    def test_budget_exceeds_drift_beyond_onset(self):
        params = schedule_params(1e6, 0.1, 0.1, 0.1308, 0.1308, 0.7)
        for gamma in (params.gamma0, 10.0 * params.gamma0, 1e6, 1e12):
            p = schedule_params(gamma, 0.1, 0.1, 0.1308, 0.1308, 0.7)
            if p.f_gamma >= 1:
                assert p.c_gamma / p.f_gamma >= p.mu_delta + p.eta - 1e-12

    def test_b_range_enforced(self):
        with pytest.raises(ValueError):
            schedule_params(1e3, 0.1, 0.1, 0.1, 0.2, 0.99999 * (0.9 * 0.2 / 0.2))
        with pytest.raises(ValueError):
            schedule_params(1e3, 0.1, 0.1, 0.1, 0.2, 1.0)

    def test_limit_table_converges(self):
        rows, limits = schedule_limit_table(0.1, 0.1, 0.1308120360,
                                            0.1308120360, 0.7)
        dev_f = [abs(r.f_over_log - limits["f_over_log"]) for r in rows]
        dev_c = [abs(r.c_over_f - limits["c_over_f"]) for r in rows]
        dev_e = [abs(r.exp_ratio) for r in rows]
        assert dev_f == sorted(dev_f, reverse=True)
        assert dev_c == sorted(dev_c, reverse=True)
        assert dev_e == sorted(dev_e, reverse=True)
        assert dev_f[-1] / limits["f_over_log"] < 0.05
        assert dev_c[-1] / limits["c_over_f"] < 0.05
        assert dev_e[-1] < 0.05

    def test_decay_with_large_exponent(self):
        # exp(c) f / gamma behaves like log(gamma) gamma^(b-1): with b = 0.9
        # it peaks near log(gamma) = 10, so probe beyond the hump.
        rows, _ = schedule_limit_table(0.1, 0.1, 0.2, 0.2, 0.9,
                                       gamma_grid=(1e5, 1e8, 1e11, 1e14))
        ratios = [r.exp_ratio for r in rows]
        assert ratios == sorted(ratios, reverse=True)
        assert ratios[-1] < ratios[0] / 2.0  # gamma^(b-1) decay, b = 0.9


class TestChangeOfMeasure:
    def test_identical_laws_have_unit_ratio(self):
        P = two_point(0.5)
        res = exact_change_of_measure_check(P, P, 2, 4, running_sum_rule(2.0))
        assert res.max_abs_gap <= 1e-12

    def test_change_after_horizon(self):
        P, Q = two_point(0.5), two_point(0.75)
        res = exact_change_of_measure_check(P, Q, 9, 4, running_sum_rule(2.0))
        assert res.max_abs_gap <= 1e-12

    def test_binary_alphabet_worked_example(self):
        P, Q = two_point(0.5), two_point(0.75)
        res = exact_change_of_measure_check(P, Q, 2, 4, running_sum_rule(2.0))
        assert res.max_abs_gap <= 1e-12
        assert res.events > 0

    def test_gap_small_across_k_and_horizon(self):
        P, Q = two_point(0.4), two_point(0.9)
        for n in range(1, 9):
            for k in range(1, n + 2):
                res = exact_change_of_measure_check(
                    P, Q, k, n, running_sum_rule(max(1.0, n / 2.0)))
                assert res.max_abs_gap <= 1e-12

    def test_quaternary_alphabet(self):
        P = FiniteLaw(values=(0.0, 0.25, 0.5, 1.0), probs=(0.3, 0.3, 0.2, 0.2))
        Q = FiniteLaw(values=(0.0, 0.25, 0.5, 1.0), probs=(0.1, 0.2, 0.3, 0.4))
        res = exact_change_of_measure_check(P, Q, 3, 6, running_sum_rule(1.5))
        assert res.max_abs_gap <= 1e-12

    def test_absolute_continuity_violation(self):
        P = FiniteLaw(values=(0.0, 1.0), probs=(1.0, 0.0))
        Q = two_point(0.5)
        with pytest.raises(ValueError):
            exact_change_of_measure_check(P, Q, 1, 3, running_sum_rule(1.0))


class TestPrefixEquality:
    def test_trivial_at_k_one(self):
        assert prefix_equality_check(two_point(0.5), two_point(0.9), 1, 4) <= 1e-12

    def test_binary_k_three(self):
        assert prefix_equality_check(two_point(0.5), two_point(0.75), 3, 5) <= 1e-12

    def test_identical_laws_all_k(self):
        P = two_point(0.35)
        for k in range(1, 6):
            assert prefix_equality_check(P, P, k, 5) <= 1e-12

    def test_sweep(self):
        P, Q = two_point(0.6), two_point(0.95)
        for n in range(1, 9):
            for k in range(1, n + 2):
                assert prefix_equality_check(P, Q, k, n) <= 1e-12


class TestMaximalSlln:
    def test_deterministic_increments_never_exceed(self):
        law = FiniteLaw(values=(0.3,), probs=(1.0,))
        probes = maximal_slln_probe(law, 0.5, [10, 100], reps=200,
                                    seed=SeedSpec(1))
        assert all(p == 0.0 for _, p in probes)

    def test_fair_coin_rarely_exceeds_linear_boundary(self):
        coin = FiniteLaw(values=(-1.0, 1.0), probs=(0.5, 0.5))
        probes = maximal_slln_probe(coin, 0.5, [400], reps=10000,
                                    seed=SeedSpec(2))
        assert probes[0][1] <= 0.01

    def test_trend_is_nonincreasing(self):
        coin = FiniteLaw(values=(-1.0, 1.0), probs=(0.5, 0.5))
        probes = maximal_slln_probe(coin, 0.5, [10, 100, 1000], reps=10000,
                                    seed=SeedSpec(3))
        probs = [p for _, p in probes]
        ses = [math.sqrt(max(p * (1 - p), 1e-12) / 10000) for p in probs]
        for i in range(len(probs) - 1):
            assert probs[i + 1] <= probs[i] + 2.0 * (ses[i] + ses[i + 1])
        assert probs[-1] <= 0.05

    def test_validation(self):
        coin = FiniteLaw(values=(-1.0, 1.0), probs=(0.5, 0.5))
        with pytest.raises(ValueError):
            maximal_slln_probe(coin, 0.0, [10], 100, SeedSpec(1))
        bad = FiniteLaw(values=(-1.0, 0.0), probs=(0.5, 0.5))
        with pytest.raises(ValueError):
            maximal_slln_probe(bad, 0.5, [10], 100, SeedSpec(1))


class TestFiniteClassKlinf:
    def test_q_in_class_gives_zero(self):
        Q = two_point(0.75)
        res = finite_class_klinf(Q, [two_point(0.3), Q])
        assert res.value == 0.0
        assert res.argmin == Q

    def test_two_candidate_example(self):
        Q = two_point(0.75)
        res = finite_class_klinf(Q, [two_point(0.3), two_point(0.5)])
        assert abs(res.value - 0.1308120359411370) <= 1e-12
        assert res.argmin == two_point(0.5)

    def test_disjoint_support_is_infinite(self):
        Q = two_point(0.5)
        P = FiniteLaw(values=(0.0, 1.0), probs=(1.0, 0.0))
        res = finite_class_klinf(Q, [P])
        assert res.value == math.inf
        assert res.argmin is None

    def test_lower_bounds_the_mean_class_value(self):
        # Any finite family inside the mean-m class minorizes nothing: its
        # infimum can only be larger than the full-class projection.
        rng = np.random.default_rng(17)
        m = 0.5
        Q = two_point(0.8)
        candidates = [two_point(float(p)) for p in rng.uniform(0.05, m, 12)]
        res = finite_class_klinf(Q, candidates)
        full = klinf_dual_solve(bernoulli(0.8), m).value
        assert res.value >= full - 1e-9

    def test_kl_conventions(self):
        assert kl_divergence(two_point(0.0), two_point(0.0)) == 0.0
        assert kl_divergence(two_point(0.5),
                             FiniteLaw(values=(0.0, 1.0), probs=(1.0, 0.0))) == math.inf
        with pytest.raises(ValueError):
            kl_divergence(two_point(0.5), FiniteLaw(values=(0.1, 1.0),
                                                    probs=(0.5, 0.5)))

import math
import warnings

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from stereounif.coefficients import KernelSpec, build_table, series_variance, tail_variance
from stereounif.distributions import (
    CalibrationWarning,
    LocalAlternative,
    NullCache,
    NullModel,
    asymptotic_null,
    asymptotic_power,
    derivatives_at_zero,
    noncentrality,
    run_test,
    sample_alt_asymptotic,
    sample_null_asymptotic,
    sample_null_exact,
    sample_null_exact_many,
)
from stereounif.rng import RandomStream
from stereounif.samplers import RotSymSpec, north_pole, sample_rotsym, sample_uniform_sphere
from stereounif.statistics import StatSpec, TieError, evaluate


def model(draws):
    return NullModel("exact", StatSpec.tn(0.0), 3, np.asarray(draws, dtype=float), 10)


class TestNullModel:
    def test_sorted_and_frozen(self):
        nm = model([3.0, 1.0, 2.0])
        assert list(nm.draws) == [1.0, 2.0, 3.0]
        with pytest.raises(ValueError):
            nm.draws[0] = 0.0

    def test_p_value_examples(self):
        draws = np.random.default_rng(0).standard_normal(10_001)
        nm = model(draws)
        m = nm.m
        assert nm.p_value(draws.min() - 1) == 1.0
        assert nm.p_value(draws.max() + 1) == 1.0 / (m + 1)
        assert abs(nm.p_value(np.median(draws)) - 0.5) <= 1.0 / m

    def test_p_value_vectorized_and_monotone(self):
        nm = model(np.random.default_rng(1).standard_normal(5000))
        t = np.linspace(-4, 4, 200)
        p = nm.p_value(t)
        assert p.shape == t.shape
        assert np.all(np.diff(p) <= 0)

    def test_critical_value(self):
        draws = np.random.default_rng(2).standard_normal(20_001)
        nm = model(draws)
        assert nm.critical_value(0.5) == np.median(draws)
        crits = [nm.critical_value(a) for a in (0.2, 0.1, 0.05, 0.01)]
        assert np.all(np.diff(crits) > 0)

    def test_small_m_warns(self):
        nm = model(np.arange(100.0))
        with pytest.warns(CalibrationWarning):
            nm.critical_value(0.05)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            nm.critical_value(0.2)

    @settings(max_examples=200, deadline=None)
    @given(m=st.integers(200, 3000), alpha=st.sampled_from([0.01, 0.05, 0.1, 0.2]),
           t=st.floats(-3, 3), seed=st.integers(0, 1000))
    def test_reject_iff_small_p(self, m, alpha, t, seed):
        rng = np.random.default_rng(seed)
        draws = np.round(rng.standard_normal(m), 2)  # ties included
        nm = model(draws)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CalibrationWarning)
            crit = nm.critical_value(alpha)
        for value in (t, crit, np.nextafter(crit, np.inf)):
            assert (value > crit) == (nm.p_value(value) <= alpha)

    def test_rayleigh_critical_value(self):
        nm = asymptotic_null(StatSpec("rayleigh"), 2, 100_000, RandomStream(3))
        assert abs(nm.critical_value(0.05) - stats.chi2.ppf(0.95, 3)) <= 0.1
        assert abs(stats.chi2.ppf(0.95, 3) - 7.815) < 1e-3


class TestLocalAlternative:
    @pytest.mark.parametrize("nu", [0.25, 0.6, 1.3])
    def test_smallcircle_derivatives_symbolic(self, nu):
        s = sympy.Symbol("s")
        f = sympy.exp(-(s - sympy.Rational(str(nu))) ** 2 + sympy.Rational(str(nu)) ** 2)
        expected = [float(sympy.diff(f, s, k).subs(s, 0)) for k in range(7)]
        np.testing.assert_allclose(derivatives_at_zero("smallcircle", 6, nu), expected, rtol=1e-13)

    def test_other_derivatives(self):
        assert list(derivatives_at_zero("vmf", 6)) == [1.0] * 7
        assert list(derivatives_at_zero("mixvmf", 6)) == [1, 0, 1, 0, 1, 0, 1]

    def test_k_v(self):
        assert LocalAlternative.for_kernel("vmf", 1.0, 1.0).k_v == 2
        assert LocalAlternative.for_kernel("vmf", 1.0, 0.3).k_v == 1

    def test_noncentrality_examples(self):
        assert noncentrality(LocalAlternative("vmf", 1.0), 1, 2) == 1 / 3
        assert noncentrality(LocalAlternative("vmf", 2.0), 1, 3) == 1.0
        for q in (2, 3, 5):
            assert noncentrality(LocalAlternative("mixvmf", 3.7), 1, q) == 0.0
        for f_id in ("vmf", "mixvmf", "smallcircle"):
            for k in range(1, 7):
                assert noncentrality(LocalAlternative(f_id, 0.0), k, 3) == 0.0

    def test_noncentrality_general_k(self):
        # xi_2 on S^2 for vMF: d_2 tau^4 / (3^2 5^2)
        assert noncentrality(LocalAlternative("vmf", 2.0), 2, 2) == pytest.approx(5 * 16 / 225, rel=1e-15)

    def test_beyond_stored_order(self):
        with pytest.raises(ValueError):
            noncentrality(LocalAlternative("vmf", 1.0, max_order=3), 4, 2)


class TestAsymptoticSeries:
    def test_truncated_moments(self):
        t = build_table(KernelSpec(0.0, 2, K=6), 6)
        m = 10**6
        nm = sample_null_asymptotic(t, m, RandomStream(4))
        var = series_variance(t)
        d = nm.draws
        assert abs(d.mean()) <= 5 * math.sqrt(var / m)
        m4 = np.mean((d - d.mean()) ** 4)
        assert abs(d.var() - var) <= 5 * math.sqrt((m4 - var**2) / m)
        assert nm.K_used == 6 and nm.tail_var_bound == 0.0

    def test_untruncated_moments_q3(self):
        t = build_table(KernelSpec(0.0, 3), 1000)
        m = 100_000
        nm = sample_null_asymptotic(t, m, RandomStream(5))
        var = series_variance(t)
        d = nm.draws
        assert abs(d.mean()) <= 5 * math.sqrt(var / m)
        m4 = np.mean((d - d.mean()) ** 4)
        assert abs(d.var() - var) <= 5 * math.sqrt((m4 - var**2) / m)
        # tolerance unreachable within the table: capped, tail carried by the Gaussian term
        assert nm.K_used == 1000
        assert nm.tail_var_bound == pytest.approx(tail_variance(t, 1000), rel=1e-12)

    def test_tolerance_selects_k(self):
        t = build_table(KernelSpec(0.5, 6), 1000)
        nm = sample_null_asymptotic(t, 1000, RandomStream(0), tail_tol=1e-4)
        var = series_variance(t)
        assert nm.tail_var_bound <= 1e-4 * var
        assert nm.K_used < 1000

    def test_odd_only_recipe(self):
        # a = -1: only odd k contribute; replicate the draw order by hand
        t = build_table(KernelSpec(-1.0, 2, K=5), 5)
        nm = sample_null_asymptotic(t, 50, RandomStream(8))
        gen = RandomStream(8).generator
        acc = np.zeros(50)
        for k in (1, 3, 5):
            acc += t.w[k] * (gen.chisquare(int(t.d[k]), 50) - t.d[k])
        assert np.array_equal(nm.draws, np.sort(acc))

    def test_q2_untruncated_refused(self):
        t = build_table(KernelSpec(0.0, 2), 100)
        with pytest.raises(ValueError, match="S\\^2"):
            sample_null_asymptotic(t, 100, RandomStream(0))

    def test_seed_determinism(self):
        t = build_table(KernelSpec(1.0, 3), 300)
        a = sample_null_asymptotic(t, 2000, RandomStream(7))
        b = sample_null_asymptotic(t, 2000, RandomStream(7))
        assert np.array_equal(a.draws, b.draws)


class TestAlternative:
    def test_tau_zero_matches_null(self):
        t = build_table(KernelSpec(0.0, 3), 1000)
        null = sample_null_asymptotic(t, 10_000, RandomStream(1))
        alt = sample_alt_asymptotic(t, LocalAlternative("vmf", 0.0), 10_000, RandomStream(2))
        assert stats.ks_2samp(null.draws, alt.draws).pvalue >= 0.01
        same_stream = sample_alt_asymptotic(t, LocalAlternative("vmf", 0.0), 10_000, RandomStream(1))
        assert np.array_equal(same_stream.draws, null.draws)

    def test_mean_shift(self):
        t = build_table(KernelSpec(0.0, 2, K=6), 6)
        m = 100_000
        lo = sample_alt_asymptotic(t, LocalAlternative("vmf", 1.0), m, RandomStream(3))
        hi = sample_alt_asymptotic(t, LocalAlternative("vmf", 2.0), m, RandomStream(4))
        shift = t.w[1] * (noncentrality(LocalAlternative("vmf", 2.0), 1, 2)
                          - noncentrality(LocalAlternative("vmf", 1.0), 1, 2))
        se = math.sqrt(lo.draws.var() / m + hi.draws.var() / m)
        assert abs(hi.draws.mean() - lo.draws.mean() - shift) <= 5 * se
        assert hi.draws.mean() > lo.draws.mean()

    def test_k_v_requires_k(self):
        t = build_table(KernelSpec(1.0, 2, K=1), 1)
        with pytest.raises(ValueError):
            sample_alt_asymptotic(t, LocalAlternative("vmf", 1.0, k_v=2), 10, RandomStream(0))

    def test_power_function(self):
        alt0 = LocalAlternative("vmf", 0.0)
        assert asymptotic_power(StatSpec("rayleigh"), 2, alt0) == pytest.approx(0.05)
        p = [asymptotic_power(StatSpec.tn(0.0, 6), 2, LocalAlternative("vmf", tau), m=20_000,
                              rng=RandomStream(1)) for tau in (0.0, 2.0, 4.0)]
        assert abs(p[0] - 0.05) <= 0.01
        assert p[0] < p[1] < p[2]


class TestExact:
    def test_reproducible_and_thread_independent(self):
        a = sample_null_exact(KernelSpec(0.0, 2), 30, 2500, RandomStream(5))
        b = sample_null_exact(KernelSpec(0.0, 2), 30, 2500, RandomStream(5), threads=3)
        assert np.array_equal(a.draws, b.draws)
        assert a.kind == "exact" and a.size == 30

    def test_joint_equals_single(self):
        stats_ = [StatSpec.tn(0.0), StatSpec("rayleigh"), StatSpec.tn(1.0)]
        joint = sample_null_exact_many(stats_, 3, 20, 1500, RandomStream(2))
        single = sample_null_exact(StatSpec("rayleigh"), 20, 1500, RandomStream(2), q=3)
        assert np.array_equal(joint[StatSpec("rayleigh")].draws, single.draws)

    def test_rayleigh_chi_square(self):
        nm = sample_null_exact(StatSpec("rayleigh"), 500, 10_000, RandomStream(6), q=2)
        ks = stats.kstest(nm.draws, stats.chi2(3).cdf)
        assert ks.statistic <= 0.02

    def test_half_sample_quantiles(self):
        nm = sample_null_exact(KernelSpec(1.0, 3), 50, 20_000, RandomStream(9))
        draws = RandomStream(1).generator.permutation(nm.draws)
        q1, q2 = np.quantile(draws[:10_000], 0.95), np.quantile(draws[10_000:], 0.95)
        gen = np.random.default_rng(0)
        boot = np.array([np.quantile(gen.choice(draws[:10_000], 10_000), 0.95) for _ in range(200)])
        assert abs(q1 - q2) <= 3 * math.sqrt(2) * boot.std()

    def test_requires_q_for_baselines(self):
        with pytest.raises(ValueError):
            sample_null_exact(StatSpec("bingham"), 10, 100, RandomStream(0))


class TestCache:
    def test_round_trip(self, tmp_path):
        cache = NullCache(tmp_path)
        nm = sample_null_asymptotic(build_table(KernelSpec(0.5, 2, K=4), 4), 500, RandomStream(1))
        path = cache.save(cache.path("asymptotic", 2, nm.stat, "K4", 500, 1), nm)
        assert path.name == "2_tnk4_a0.5_K4_500_1.bin"
        back = cache.load(path)
        assert np.array_equal(back.draws, nm.draws)
        assert (back.stat, back.size, back.tail_var_bound) == (nm.stat, nm.size, nm.tail_var_bound)

    def test_exact_cached_once(self, tmp_path):
        cache = NullCache(tmp_path)
        stats_ = [StatSpec.tn(0.0), StatSpec("bingham")]
        first = cache.exact_many(stats_, 2, 15, 300, seed=4)
        files = sorted(p.name for p in (tmp_path / "exact").iterdir())
        assert files == ["2_bingham_n15_300_4.bin", "2_bingham_n15_300_4.json",
                         "2_tn_a0_n15_300_4.bin", "2_tn_a0_n15_300_4.json"]
        stamp = (tmp_path / "exact" / files[0]).stat().st_mtime_ns
        second = cache.exact_many(stats_ + [StatSpec("rayleigh")], 2, 15, 300, seed=4)
        assert (tmp_path / "exact" / files[0]).stat().st_mtime_ns == stamp
        for s in stats_:
            assert np.array_equal(first[s].draws, second[s].draws)
        # computed later on its own, yet from the same replicates
        direct = cache.exact_many([StatSpec("rayleigh")], 2, 15, 300, seed=4)
        assert np.array_equal(direct[StatSpec("rayleigh")].draws, second[StatSpec("rayleigh")].draws)


class TestRunTest:
    def test_uniform_and_vmf(self):
        X = sample_uniform_sphere(2, 60, RandomStream(1))
        rep = run_test(X, StatSpec.tn(0.0), "exact", m=2000, seed=0)
        assert rep.reject == (rep.statistic > rep.critical_value) == (rep.p_value <= 0.05)
        Y = sample_rotsym(RotSymSpec(north_pole(2), 10.0), 2, 100, RandomStream(2))
        rep = run_test(Y, StatSpec.tn(0.0), "exact", m=2000, seed=0)
        assert rep.reject and rep.p_value == 1 / 2001

    def test_asymptotic_q2_untruncated(self):
        X = sample_uniform_sphere(2, 20, RandomStream(1))
        with pytest.raises(ValueError, match="S\\^2"):
            run_test(X, StatSpec.tn(0.0), "asymptotic", m=1000)
        rep = run_test(X, StatSpec.tn(0.0, 6), "asymptotic", m=1000)
        assert rep.method == "asymptotic"
        assert rep.statistic == evaluate(X, StatSpec.tn(0.0, 6))

    def test_tie_propagates(self):
        X = sample_uniform_sphere(2, 5, RandomStream(1)).points.copy()
        X[2] = X[0]
        with pytest.raises(TieError):
            run_test(X, StatSpec.tn(0.0), m=200)
